#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "mflqg/errors.hpp"
#include "mflqg/time_grid.hpp"

namespace mflqg {

enum class OdeDirection { Forward, Backward };

using MatrixRhs = std::function<Eigen::MatrixXd(double t, const Eigen::MatrixXd& X)>;

constexpr double kBlowUpNorm = 1e12;

// Classical RK4 on the uniform grid. Forward integrates from X(0); backward
// integrates the reversed-time system from X(T) with the same stepper.
// Returns one sample per knot (index i is t_i either way).
std::vector<Eigen::MatrixXd> integrate_matrix_ode(const MatrixRhs& rhs,
                                                  const Eigen::MatrixXd& boundary,
                                                  OdeDirection direction,
                                                  const TimeGrid& grid,
                                             double blow_up_norm = kBlowUpNorm);

// Multi-component RK4 for coupled blocks; state is a list of matrices.
using SystemState = std::vector<Eigen::MatrixXd>;
using SystemRhs = std::function<SystemState(double t, const SystemState& X)>;
using StepHook = std::function<void(SystemState&)>;  // applied after every accepted step

std::vector<SystemState> integrate_system(const SystemRhs& rhs, const SystemState& boundary,
                                          OdeDirection direction, const TimeGrid& grid,
                                          double blow_up_norm = kBlowUpNorm,
                                          const StepHook& hook = {});

} // namespace mflqg
