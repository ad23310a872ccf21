#pragma once

#include "modcov/augmentation.hpp"
#include "modcov/common.hpp"
#include "modcov/csv.hpp"
#include "modcov/data_model.hpp"
#include "modcov/model_io.hpp"
#include "modcov/pipeline.hpp"
#include "modcov/rng.hpp"
#include "modcov/scoring.hpp"
#include "modcov/simulation.hpp"
#include "modcov/solvers/adaptive_weights.hpp"
#include "modcov/solvers/engine.hpp"
#include "modcov/solvers/lambda_path.hpp"
#include "modcov/solvers/losses.hpp"
#include "modcov/solvers/penalty.hpp"
#include "modcov/solvers/problem.hpp"
#include "modcov/survival_analysis.hpp"
