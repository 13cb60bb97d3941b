#pragma once

#include <string>

#include "mflqg/problem.hpp"

namespace mflqg {

// Scenario text format: [section] headers with `key = v1 v2 ...` entries
// (row-major matrix values, a lone scalar broadcasts to every entry) or
// per-knot tables written as repeated `key @ t = ...` lines.
MFLQProblem load_scenario(const std::string& document);
MFLQProblem load_scenario_file(const std::string& path);

std::string save_scenario(const MFLQProblem& p);

// The bundled asset-liability scenario (scalar cash-balance model).
MFLQProblem al_example_problem(int step_count = 1000);

} // namespace mflqg
