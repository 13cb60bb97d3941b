#pragma once

#include <functional>
#include <optional>

#include "mflqg/noise.hpp"
#include "mflqg/synthesis.hpp"

namespace mflqg {

struct PathRecord {
    Eigen::MatrixXd x;     // (N+1) x n
    Eigen::MatrixXd Y;     // (N+1) x rt
    Eigen::MatrixXd xhat;  // (N+1) x n
    Eigen::MatrixXd u;     // (N+1) x k
    Eigen::MatrixXd wbar;  // N x rt increments
};

struct PathSummary {
    double J = 0.0;       // reduced-cost quadrature along this path
    double J_base = 0.0;  // co-simulated unperturbed cost (perturbation runs)
    Eigen::VectorXd wbar_T;
    double wbar_qv = 0.0;
    Eigen::VectorXd x_T, xhat_T, u0;
    std::vector<double> err2;  // |x - xhat|^2 at marked knots
};

// Per-knot ensemble statistics, folded in ascending path order (bit-stable
// under any worker count).
struct KnotStats {
    Eigen::MatrixXd mean_x, var_x;        // (N+1) x n
    Eigen::MatrixXd mean_xhat, var_xhat;  // (N+1) x n
    Eigen::MatrixXd mean_diff, var_diff;  // xhat - x
};

struct PathEnsemble {
    TimeGrid grid;
    uint64_t seed = 0;
    long long path_count = 0;
    std::vector<int> mark_knots;
    std::vector<PathSummary> summaries;
    KnotStats stats;
    std::vector<PathRecord> records;  // filled only when store_full
};

struct SimOptions {
    long long paths = 20000;
    long long path_offset = 0;  // simulate path ids [offset, offset + paths)
    uint64_t seed = 42;
    bool store_full = false;
    bool fresh_innovation = false;  // drive the filter by fresh wbar draws (distribution mode)
    std::vector<int> mark_knots;
    bool parallel = true;
    int workers = 0;  // 0 = hardware limit / MFLQG_WORKERS
};

// Additive control perturbations used by the verification sweeps.
struct Perturbation {
    enum class Kind { TimeFunction, FilterFeedback, FilterDeviation };
    std::string name;
    Kind kind = Kind::TimeFunction;
    std::vector<Eigen::VectorXd> v;  // k per knot (TimeFunction)
    Eigen::MatrixXd W;               // k x n map for the feedback kinds
    // Expected value of the direction at each knot (drives the mean response).
    Eigen::VectorXd mean_at(int i, const std::vector<Eigen::VectorXd>& Ex) const {
        switch (kind) {
            case Kind::TimeFunction: return v[static_cast<size_t>(i)];
            case Kind::FilterFeedback: return W * Ex[static_cast<size_t>(i)];
            case Kind::FilterDeviation: return Eigen::VectorXd::Zero(W.rows());
        }
        return {};
    }
};

// Closed-loop ensemble under the synthesized law. When rc is non-null, each
// path's reduced-cost quadrature is accumulated into PathSummary::J.
PathEnsemble simulate_closed_loop(const MFLQProblem& p, const FeedbackLaw& law,
                                  const RiccatiBundle& bundle, const ReducedCost* rc,
                                  const SimOptions& opts);

// Closed loop with control u = law(xhat', Ex') + eps * v. The mean path fed to
// the dynamics is Ex* + eps * xi with xi the discrete linear mean response, so
// the perturbed system stays mean-field consistent and eps = 0 reproduces the
// baseline bitwise. The unperturbed loop co-runs on the same noise; its cost
// lands in J_base.
PathEnsemble simulate_perturbed(const MFLQProblem& p, const FeedbackLaw& law,
                                const RiccatiBundle& bundle, const ReducedCost& rc,
                                const Perturbation& dir, double eps, const SimOptions& opts);

// Single-path truth/observation/filter simulation driven by a materialized slab.
using ControlSource =
    std::function<void(int step, const Eigen::VectorXd& xhat, Eigen::VectorXd& u)>;

PathRecord simulate_truth(const MFLQProblem& p, const ControlSource& control,
                          const NoiseSlab& slab, const std::vector<Eigen::VectorXd>& Ex,
                          const std::vector<Eigen::MatrixXd>& Sigma,
                          const Eigen::VectorXd* x0_override = nullptr);

// Innovation-form filter replay over recorded observation/control paths.
struct FilterOutput {
    Eigen::MatrixXd xhat;  // (N+1) x n
    Eigen::MatrixXd wbar;  // N x rt
};
FilterOutput kalman_filter(const MFLQProblem& p, const std::vector<Eigen::MatrixXd>& Sigma,
                           const Eigen::MatrixXd& Y, const Eigen::MatrixXd& u,
                           const std::vector<Eigen::VectorXd>& Ex);

// Forward adjoint component dk = (beta^T k + betabar^T Ek)dt + (gamma^T k +
// gammabar^T Ek)dw + (gammatilde^T k + gammabartilde^T Ek)dwt, k_0 = -M y0 - N.
Eigen::MatrixXd simulate_k(const MFLQProblem& p, const NoiseSlab& slab,
                           const Eigen::VectorXd& y0);

// Example-style doubling representation of y_0 via the exponential-martingale
// weight eta; requires alpha = alphabar = beta = betabar = gammabar =
// gammabartilde = 0.
struct EtaEstimate {
    double y0 = 0.0;
    double stderr_ = 0.0;
    Eigen::VectorXd eta_T_mean;
    Eigen::VectorXd eta_T_se;
    long long paths = 0;
};
EtaEstimate simulate_eta(const MFLQProblem& p, const SimOptions& opts,
                         const std::vector<Eigen::VectorXd>& open_loop_control,
                         const std::vector<Eigen::VectorXd>& Ex);

struct InnovationStats {
    Eigen::VectorXd mean, mean_se;      // wbar(T) per component
    Eigen::VectorXd variance, var_se;   // sample variance of wbar(T)
    double qv_mean = 0.0, qv_se = 0.0;  // realized quadratic variation
};
InnovationStats innovation_diagnostics(const PathEnsemble& ensemble);

// Reduced-cost evaluation along one recorded path (trapezoid + terminal + J0).
double path_cost(const MFLQProblem& p, const ReducedCost& rc,
                 const std::vector<Eigen::VectorXd>& Ex, const Eigen::MatrixXd& x,
                 const Eigen::MatrixXd& u);

} // namespace mflqg
