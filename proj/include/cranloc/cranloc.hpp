#pragma once

#include "cranloc/errors.hpp"
#include "cranloc/evaluation.hpp"
#include "cranloc/format.hpp"
#include "cranloc/metrics.hpp"
#include "cranloc/robust_problem.hpp"
#include "cranloc/scenario.hpp"
#include "cranloc/solver.hpp"
#include "cranloc/spectra.hpp"

namespace cranloc {
inline constexpr const char* kVersion = "0.1.0";
}
