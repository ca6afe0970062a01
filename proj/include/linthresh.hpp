#pragma once

// Core library. experiment.hpp and report.hpp also need nlohmann/json.

#include "linthresh/error.hpp"
#include "linthresh/operators.hpp"
#include "linthresh/csv.hpp"
#include "linthresh/prox.hpp"
#include "linthresh/problem.hpp"
#include "linthresh/trace.hpp"
#include "linthresh/solver.hpp"
#include "linthresh/diagnostics.hpp"
#include "linthresh/oracle.hpp"
#include "linthresh/generators.hpp"
