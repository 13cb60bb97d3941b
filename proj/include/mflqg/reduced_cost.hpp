#pragma once

#include <Eigen/Dense>
#include <vector>

#include "mflqg/time_grid.hpp"

namespace mflqg {

// Output of the reduction of the recursive-value term <N, y_0> into running
// and terminal state costs: F, Fbar, G per knot, constants L, Lbar, J0.
// With the -2<N,y0> cost convention the formulas carry -N:
//   F = Ftilde - (chi_0^t alpha)^T N,  G = Gtilde - (chi_0^t psi)^T N,
//   L = Ltilde - (chi_0^T rho)^T N,    J0 = -int_0^T N^T chi_0^t psibar dt.
struct ReducedCost {
    std::vector<Eigen::VectorXd> F, Fbar;  // n per knot
    std::vector<Eigen::VectorXd> G;        // k per knot
    Eigen::VectorXd L, Lbar;               // n
    double J0 = 0.0;
    std::vector<Eigen::MatrixXd> chi0;     // chi_0^{t_i}, m x m per knot
};

} // namespace mflqg
