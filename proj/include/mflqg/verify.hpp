#pragma once

#include "mflqg/simulate.hpp"

namespace mflqg {

struct CostReport {
    std::vector<std::pair<std::string, double>> analytic_terms;
    double J_analytic = 0.0;
    double J_mc = 0.0;
    double stderr_ = 0.0;
    long long path_count = 0;
    double kappa_used = 0.5;
};

// Monte Carlo part: aggregates the per-path reduced-cost quadratures carried
// by the ensemble (simulated under the control being costed).
CostReport mc_cost(const MFLQProblem& p, const ReducedCost& rc, const PathEnsemble& ensemble);

struct OptimalityReport {
    std::vector<std::string> directions;
    std::vector<double> epsilons;
    Eigen::MatrixXd delta;     // directions x epsilons, J[u+eps v] - J[u]
    Eigen::MatrixXd delta_se;  // stderr of the pathwise difference
    Eigen::MatrixXd ratio;     // delta / eps^2
    bool all_nonneg = false;   // every delta >= -3 se
    bool ratios_ok = false;    // per-direction max/min ratio <= 1.05
};

// Standard perturbation set: Lemma-style block constants, smooth time
// functions, and filter-feedback directions (>= 10 directions).
std::vector<Perturbation> standard_directions(const MFLQProblem& p,
                                              const RiccatiBundle& bundle);

OptimalityReport optimality_sweep(const MFLQProblem& p, const SynthesisResult& synth,
                                  const std::vector<Perturbation>& directions,
                                  const std::vector<double>& epsilons, const SimOptions& opts);

struct ScalingRecord {
    std::vector<double> epsilons;
    std::vector<double> slope;     // (J[u+eps v] - J[u]) / eps
    std::vector<double> slope_se;
};

ScalingRecord first_variation_scaling(const MFLQProblem& p, const SynthesisResult& synth,
                                      const Perturbation& direction,
                                      const std::vector<double>& epsilons,
                                      const SimOptions& opts);

// Pathwise decomposition identity |x^v - (x^0 + x^{v,1})| + |Y^v - (Y^0 + Y^{v,1})|
// on shared noise; returns the max over knots and paths.
double decomposition_check(const MFLQProblem& p, const std::vector<Eigen::VectorXd>& v,
                           uint64_t seed, long long paths);

struct LiftReport {
    double mean_gap = 0.0;       // deterministic mean trajectories, original vs lifted
    double mean_y_gap = 0.0;     // mean backward component, original vs lifted
    double identity_gap = 0.0;   // quadratic-form identity at random points
    double cost_original = 0.0;  // Example-2.2-form cost on simulated paths
    double cost_lifted = 0.0;
    double diff_mean = 0.0;      // pathwise difference statistics
    double diff_se = 0.0;
    long long paths = 0;
};

LiftReport lift_check(const MFLQProblem& p, const SimOptions& opts);

// Block-averaging projection onto piecewise-constant controls, delta = T/j;
// knot i carries the value on (i*delta, (i+1)*delta], nu on [0, delta].
std::vector<Eigen::VectorXd> piecewise_projection(const std::vector<Eigen::VectorXd>& v,
                                                  int block_count, const TimeGrid& grid,
                                                  const Eigen::VectorXd& nu);

// Closed forms of the bundled asset-liability scenario (reference oracle).
struct AlReference {
    double Ep = 0, Ex = 0, Gamma = 0, Sigma = 0, theta1 = 0, theta2 = 0, Lambda = 0,
           offset = 0;
};
AlReference al_reference(double t);

struct CheckResult {
    std::string name;
    bool pass = false;
    double statistic = 0.0;
    double threshold = 0.0;
    std::string detail;
};

struct VerifyReport {
    std::vector<CheckResult> checks;
    bool all_pass() const {
        for (const auto& c : checks)
            if (!c.pass) return false;
        return true;
    }
};

struct AcceptanceConfig {
    long long paths = 20000;
    uint64_t seed = 42;
    int workers = 0;
    bool parallel = true;
};

// Runs all acceptance criteria; one or more CheckResult rows per criterion.
VerifyReport run_acceptance(const AcceptanceConfig& cfg);

std::string verify_report_json(const VerifyReport& rep);
VerifyReport verify_report_from_json(const std::string& text);

// Mean state trajectory under an arbitrary feedback law (open loop when the
// gains vanish): Ex' = [(a+abar) + b(gf+gm)]Ex + b off + bbar.
std::vector<Eigen::VectorXd> mean_under_law(const MFLQProblem& p, const FeedbackLaw& law);

// chi-route value of E y_0 for a deterministic control-mean path.
double chi_route_y0(const MFLQProblem& p, const std::vector<Eigen::VectorXd>& Ex,
                    const std::vector<Eigen::VectorXd>& Ev);

} // namespace mflqg
