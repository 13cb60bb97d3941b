#pragma once

#include "mflqg/ode.hpp"
#include "mflqg/problem.hpp"
#include "mflqg/reduced_cost.hpp"

namespace mflqg {

// Grid-sampled deterministic layer: filter error covariance, mean system,
// feedback Riccati pair and the gated adjoint.
struct RiccatiBundle {
    TimeGrid grid;
    std::vector<Eigen::MatrixXd> Sigma;   // n x n
    std::vector<Eigen::MatrixXd> Phi;     // n x n
    std::vector<Eigen::VectorXd> Psi;     // n
    std::vector<Eigen::VectorXd> Ex;      // n
    std::vector<Eigen::VectorXd> Ep;      // n
    std::vector<Eigen::MatrixXd> Gamma;   // n x n
    std::vector<Eigen::VectorXd> Lambda;  // n
    std::vector<Eigen::VectorXd> k_det;   // m, gated adjoint k' = (beta+betabar)^T k, k_0 = -N
    std::vector<Eigen::VectorXd> theta1;  // n, mean source of the filter drift
    std::vector<Eigen::VectorXd> theta2;  // n, mean source of the costate drift
};

// chi_t^s: transition of X' = (beta+betabar) X with X(t) = I on [t, s].
Eigen::MatrixXd chi(const MFLQProblem& p, double t, double s);

// chi_0^{t_i} at every knot (cumulative one-step factors).
std::vector<Eigen::MatrixXd> chi_from_zero(const MFLQProblem& p);

std::vector<Eigen::MatrixXd> solve_sigma(const MFLQProblem& p);
std::vector<Eigen::MatrixXd> solve_phi(const MFLQProblem& p, const ReducedCost& rc);
std::vector<Eigen::VectorXd> solve_psi(const MFLQProblem& p, const ReducedCost& rc,
                                       const std::vector<Eigen::MatrixXd>& Phi);
std::vector<Eigen::VectorXd> solve_mean_state(const MFLQProblem& p, const ReducedCost& rc,
                                              const std::vector<Eigen::MatrixXd>& Phi,
                                              const std::vector<Eigen::VectorXd>& Psi);
std::vector<Eigen::VectorXd> mean_costate(const std::vector<Eigen::MatrixXd>& Phi,
                                          const std::vector<Eigen::VectorXd>& Psi,
                                          const std::vector<Eigen::VectorXd>& Ex);
std::vector<Eigen::MatrixXd> solve_gamma(const MFLQProblem& p);
std::vector<Eigen::VectorXd> solve_lambda(const MFLQProblem& p, const ReducedCost& rc,
                                          const RiccatiBundle& partial);

// Full solve in dependency order: Sigma -> Phi,Psi -> Ex -> Ep -> Gamma -> Lambda.
RiccatiBundle solve_bundle(const MFLQProblem& p, const ReducedCost& rc);

} // namespace mflqg
