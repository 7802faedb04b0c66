#pragma once

// Umbrella header: post-processing toolkit for localized demographic parity
// in regression. Calibrates any base model's scores so their group-conditional
// CDFs satisfy prescribed level, pooled-CDF or range constraints, via a
// projected-subgradient solve of the convex empirical dual.

#include "fairpost/calibration.hpp"
#include "fairpost/data.hpp"
#include "fairpost/dual.hpp"
#include "fairpost/errors.hpp"
#include "fairpost/experiments.hpp"
#include "fairpost/fairness.hpp"
#include "fairpost/grid.hpp"
#include "fairpost/io.hpp"
#include "fairpost/metrics.hpp"
#include "fairpost/predictor.hpp"
#include "fairpost/rng.hpp"
#include "fairpost/tree.hpp"
