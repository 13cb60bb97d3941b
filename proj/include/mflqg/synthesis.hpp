#pragma once

#include <map>
#include <string>

#include "mflqg/riccati.hpp"

namespace mflqg {

// Time-varying feedback u = gain_filter xhat + gain_mean Ex + offset.
struct FeedbackLaw {
    TimeGrid grid;
    std::vector<Eigen::MatrixXd> gain_filter;  // k x n, -B^-1 (b^T Gamma + D)
    std::vector<Eigen::MatrixXd> gain_mean;    // k x n, -B^-1 Dbar
    std::vector<Eigen::VectorXd> offset;       // k,     -B^-1 (b^T Lambda + G)

    Eigen::VectorXd at_knot(int i, const Eigen::VectorXd& xhat,
                            const Eigen::VectorXd& ex) const {
        return gain_filter[static_cast<size_t>(i)] * xhat +
               gain_mean[static_cast<size_t>(i)] * ex + offset[static_cast<size_t>(i)];
    }
};

struct SynthesisResult {
    AssumptionReport report;
    ReducedCost reduced;
    RiccatiBundle bundle;
    FeedbackLaw law;
};

ReducedCost reduce_cost(const MFLQProblem& p);

FeedbackLaw assemble_law(const MFLQProblem& p, const ReducedCost& rc,
                         const RiccatiBundle& bundle);

// Validation + gate + reduce + full Riccati solve + law assembly.
SynthesisResult synthesize(const MFLQProblem& p);

// Piecewise evaluation matching the law's grid convention; throws on t outside [0, T].
Eigen::VectorXd evaluate_control(const FeedbackLaw& law, const Eigen::VectorXd& xhat,
                                 const Eigen::VectorXd& ex, double t);

// Analytic optimal cost, evaluated two ways: the printed closed formula (named
// terms) and an independent second-moment ODE route. kappa weights tr(H Sigma_T).
struct AnalyticCost {
    std::vector<std::pair<std::string, double>> terms;
    double J_formula = 0.0;  // printed closed formula, term by term
    double J_moment = 0.0;   // second-moment ODE route (reported J_analytic)
    double kappa = 0.5;
    double J() const { return J_moment; }
};

AnalyticCost analytic_cost(const MFLQProblem& p, const ReducedCost& rc,
                           const RiccatiBundle& bundle, double kappa = 0.5);

// Hamiltonian of the LQ problem (running part).
double hamiltonian(const MFLQProblem& p, double t, const Eigen::VectorXd& x,
                   const Eigen::VectorXd& y, const Eigen::MatrixXd& z,
                   const Eigen::MatrixXd& zt, const Eigen::VectorXd& xbar,
                   const Eigen::VectorXd& ybar, const Eigen::MatrixXd& zbar,
                   const Eigen::MatrixXd& ztbar, const Eigen::VectorXd& v,
                   const Eigen::VectorXd& k, const Eigen::VectorXd& pc,
                   const Eigen::MatrixXd& q);

// Filtered first-order condition B u + (b^T Gamma + D) xhat + Dbar ex + b^T Lambda + G.
Eigen::VectorXd stationarity_residual(const MFLQProblem& p, const ReducedCost& rc,
                                      const RiccatiBundle& bundle, double t,
                                      const Eigen::VectorXd& xhat, const Eigen::VectorXd& ex,
                                      const Eigen::VectorXd& u);

} // namespace mflqg
