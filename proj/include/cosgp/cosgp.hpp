#pragma once

// Umbrella header for the cosgp library: Bayesian spatial change-of-support
// regression on a fine grid with covariance tapering, plus the coarse-grid
// ("block") baseline, scoring metrics, and the simulation/CV harness.

#include "cosgp/errors.hpp"
#include "cosgp/rng.hpp"
#include "cosgp/linalg.hpp"
#include "cosgp/geometry.hpp"
#include "cosgp/supports.hpp"
#include "cosgp/covariance.hpp"
#include "cosgp/model.hpp"
#include "cosgp/sampler.hpp"
#include "cosgp/posterior.hpp"
#include "cosgp/block.hpp"
#include "cosgp/metrics.hpp"
#include "cosgp/workflow.hpp"
#include "cosgp/experiments.hpp"
#include "cosgp/io.hpp"
#include "cosgp/config.hpp"
