#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mflqg/scenario.hpp"
#include "mflqg/verify.hpp"

using namespace mflqg;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd m1(double v) { return Eigen::MatrixXd::Constant(1, 1, v); }

FeedbackLaw open_loop_law(const MFLQProblem& p, const std::vector<VectorXd>& v) {
    FeedbackLaw law;
    law.grid = p.grid;
    law.gain_filter.assign(v.size(), MatrixXd::Zero(p.k, p.n));
    law.gain_mean.assign(v.size(), MatrixXd::Zero(p.k, p.n));
    law.offset = v;
    return law;
}

std::vector<VectorXd> const_path(const MFLQProblem& p, double v) {
    return std::vector<VectorXd>(static_cast<size_t>(p.grid.knots()),
                                 VectorXd::Constant(p.k, v));
}

} // namespace

TEST_CASE("noiseless dynamics degenerate to the deterministic flow") {
    TimeGrid g = TimeGrid::make(1.0, 400);
    MFLQProblem p = MFLQProblem::zero(1, 1, 1, 1, 1, g);
    p.mu0 << 0.5;
    p.a = CoefficientPath::constant(m1(0.3), g);
    p.bbar = CoefficientPath::constant(m1(0.07), g);
    p.B = CoefficientPath::constant(m1(1.0), g);
    p.h = CoefficientPath::constant(m1(1.0), g);
    // b = 0, c = 0: the truth recursion is the Euler flow of the mean
    auto Sigma = solve_sigma(p);
    NoiseSlab slab = brownian_increments(1, 0, g, 1, 1);
    auto Ex = mean_under_law(p, open_loop_law(p, const_path(p, 0.0)));
    PathRecord rec = simulate_truth(
        p, [](int, const VectorXd&, VectorXd& u) { u.setZero(); }, slab, Ex, Sigma);
    // Euler oracle in the test
    double x = 0.5;
    for (int i = 0; i <= 400; ++i) {
        CHECK(rec.x(i, 0) == x);
        x += g.step * (0.3 * x + 0.07);
    }
    // and O(dt) close to the RK4 mean
    double worst = 0.0;
    for (int i = 0; i <= 400; ++i)
        worst = std::max(worst, std::fabs(rec.x(i, 0) - Ex[static_cast<size_t>(i)](0)));
    CHECK(worst < 2e-4);
}

TEST_CASE("pure integration: x(T) - x(0) is the increment sum") {
    TimeGrid g = TimeGrid::make(1.0, 1000);
    MFLQProblem p = MFLQProblem::zero(1, 1, 1, 1, 1, g);
    p.c = CoefficientPath::constant(m1(1.0), g);
    p.B = CoefficientPath::constant(m1(1.0), g);
    p.h = CoefficientPath::constant(m1(1.0), g);
    auto Sigma = solve_sigma(p);
    NoiseSlab slab = brownian_increments(9, 3, g, 1, 1);
    auto Ex = mean_under_law(p, open_loop_law(p, const_path(p, 0.0)));
    PathRecord rec = simulate_truth(
        p, [](int, const VectorXd&, VectorXd& u) { u.setZero(); }, slab, Ex, Sigma);
    double acc = 0.0;
    for (int i = 0; i < 1000; ++i) acc += slab.dW(i, 0);
    CHECK(rec.x(1000, 0) - rec.x(0, 0) == acc);
}

TEST_CASE("ensemble mean of the closed loop tracks the solver mean") {
    MFLQProblem p = al_example_problem(1000);
    SynthesisResult s = synthesize(p);
    SimOptions o;
    o.paths = 5000;
    o.seed = 11;
    PathEnsemble ens = simulate_closed_loop(p, s.law, s.bundle, &s.reduced, o);

    // truth mean at T within 3 se of Ex(T)
    double se = std::sqrt(ens.stats.var_x(1000, 0) / static_cast<double>(o.paths));
    CHECK(std::fabs(ens.stats.mean_x(1000, 0) - s.bundle.Ex.back()(0)) <= 3.0 * se);

    // tower consistency of xhat vs x at every knot via the difference stats
    int bad = 0;
    for (int i = 0; i <= 1000; ++i) {
        double sed = std::sqrt(ens.stats.var_diff(i, 0) / static_cast<double>(o.paths));
        if (std::fabs(ens.stats.mean_diff(i, 0)) > 3.0 * sed + 1e-15) ++bad;
    }
    // a handful of 3-sigma excursions among 1001 correlated knots is expected noise
    CHECK(bad <= 20);

    // u(0) is deterministic across paths: xhat(0) = mu0
    double u0 = ens.summaries[0].u0(0);
    double want = -(s.bundle.Gamma[0](0, 0) * 1.0 + s.bundle.Lambda[0](0)) + 1.0;
    CHECK(std::fabs(u0 - want) < 1e-12);
    for (const auto& sm : ens.summaries) CHECK(sm.u0(0) == u0);
}

TEST_CASE("filter replay matches the co-simulated filter bitwise") {
    MFLQProblem p = al_example_problem(500);
    SynthesisResult s = synthesize(p);
    NoiseSlab slab = brownian_increments(5, 12, p.grid, 1, 1);
    std::vector<VectorXd> v = const_path(p, 0.25);
    PathRecord rec = simulate_truth(
        p, [&](int i, const VectorXd&, VectorXd& u) { u = v[static_cast<size_t>(i)]; }, slab,
        s.bundle.Ex, s.bundle.Sigma);
    FilterOutput fo = kalman_filter(p, s.bundle.Sigma, rec.Y, rec.u, s.bundle.Ex);
    // the replay reconstructs dY from the accumulated Y path, so agreement is
    // at roundoff rather than bitwise
    CHECK((fo.xhat - rec.xhat).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((fo.wbar - rec.wbar).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(fo.xhat.row(0) == rec.xhat.row(0));
}

TEST_CASE("no-information filter keeps its prior") {
    TimeGrid g = TimeGrid::make(1.0, 300);
    MFLQProblem p = MFLQProblem::zero(1, 1, 1, 1, 1, g);
    p.mu0 << 2.0;
    p.c = CoefficientPath::constant(m1(0.3), g);
    p.B = CoefficientPath::constant(m1(1.0), g);
    p.h = CoefficientPath::constant(m1(1.0), g);  // f = 0: no information
    auto Sigma = solve_sigma(p);
    NoiseSlab slab = brownian_increments(3, 1, g, 1, 1);
    auto Ex = mean_under_law(p, open_loop_law(p, const_path(p, 0.0)));
    PathRecord rec = simulate_truth(
        p, [](int, const VectorXd&, VectorXd& u) { u.setZero(); }, slab, Ex, Sigma);
    for (int i = 0; i <= 300; ++i) CHECK(rec.xhat(i, 0) == 2.0);
}

TEST_CASE("perfect knowledge: filter equals truth path by path") {
    MFLQProblem p = al_example_problem(400);
    p.c = CoefficientPath::zero(1, 1, p.grid);  // sigma0 = 0 already
    SynthesisResult s = synthesize(p);
    SimOptions o;
    o.paths = 3;
    o.store_full = true;
    PathEnsemble ens = simulate_closed_loop(p, s.law, s.bundle, nullptr, o);
    for (const auto& rec : ens.records) CHECK(rec.x == rec.xhat);
}

TEST_CASE("filter mean square error tracks Sigma") {
    MFLQProblem p = al_example_problem(1000);
    SynthesisResult s = synthesize(p);
    SimOptions o;
    o.paths = 5000;
    o.seed = 4;
    o.mark_knots = {250, 500, 1000};
    PathEnsemble ens = simulate_closed_loop(p, s.law, s.bundle, &s.reduced, o);
    for (size_t mk = 0; mk < o.mark_knots.size(); ++mk) {
        double mse = 0.0;
        for (const auto& sm : ens.summaries) mse += sm.err2[mk];
        mse /= static_cast<double>(o.paths);
        double sig = s.bundle.Sigma[static_cast<size_t>(o.mark_knots[mk])](0, 0);
        CHECK(std::fabs(mse - sig) / sig < 0.10);
    }
}

TEST_CASE("zero-gain law reproduces open-loop truth bitwise") {
    MFLQProblem p = al_example_problem(300);
    auto Sigma = solve_sigma(p);
    std::vector<VectorXd> v = const_path(p, 0.0);
    FeedbackLaw law = open_loop_law(p, v);
    auto Ex = mean_under_law(p, law);
    RiccatiBundle bundle;
    bundle.grid = p.grid;
    bundle.Sigma = Sigma;
    bundle.Ex = Ex;
    SimOptions o;
    o.paths = 2;
    o.store_full = true;
    o.seed = 77;
    PathEnsemble ens = simulate_closed_loop(p, law, bundle, nullptr, o);
    for (long long q = 0; q < o.paths; ++q) {
        NoiseSlab slab = brownian_increments(o.seed, static_cast<uint64_t>(q), p.grid, 1, 1);
        PathRecord rec = simulate_truth(
            p, [](int, const VectorXd&, VectorXd& u) { u.setZero(); }, slab, Ex, Sigma);
        CHECK(ens.records[static_cast<size_t>(q)].x == rec.x);
        CHECK(ens.records[static_cast<size_t>(q)].Y == rec.Y);
    }
}

TEST_CASE("controlled response is affine in the control") {
    MFLQProblem p = al_example_problem(250);
    auto Sigma = solve_sigma(p);
    std::vector<VectorXd> v1(static_cast<size_t>(p.grid.knots())), v2 = v1, vm = v1;
    const double lam = 0.3;
    for (int i = 0; i <= 250; ++i) {
        double t = p.grid.t(i);
        v1[static_cast<size_t>(i)] = VectorXd::Constant(1, std::sin(2.0 * t));
        v2[static_cast<size_t>(i)] = VectorXd::Constant(1, 0.5 - t);
        vm[static_cast<size_t>(i)] =
            lam * v1[static_cast<size_t>(i)] + (1.0 - lam) * v2[static_cast<size_t>(i)];
    }
    NoiseSlab slab = brownian_increments(21, 4, p.grid, 1, 1);
    auto run = [&](const std::vector<VectorXd>& v) {
        auto Ex = mean_under_law(p, open_loop_law(p, v));
        return simulate_truth(
            p, [&](int i, const VectorXd&, VectorXd& u) { u = v[static_cast<size_t>(i)]; },
            slab, Ex, Sigma);
    };
    PathRecord r1 = run(v1), r2 = run(v2), rm = run(vm);
    double worst = 0.0;
    for (int i = 0; i <= 250; ++i)
        worst = std::max(worst, std::fabs(rm.x(i, 0) - lam * r1.x(i, 0) -
                                          (1.0 - lam) * r2.x(i, 0)));
    CHECK(worst <= 1e-12);
}

TEST_CASE("adjoint component: deterministic, zero, and martingale cases") {
    MFLQProblem p = al_example_problem(1000);
    NoiseSlab slab = brownian_increments(2, 0, p.grid, 1, 1);
    VectorXd y0 = VectorXd::Zero(1);

    MatrixXd k = simulate_k(p, slab, y0);
    double worst = 0.0;
    for (int i = 0; i <= 1000; ++i)
        worst = std::max(worst, std::fabs(k(i, 0) + std::exp(0.06 * p.grid.t(i))));
    CHECK(worst < 1e-5);  // k(t) = -e^{0.06 t} (Euler in time)

    MFLQProblem q = p;
    q.N.setZero();
    MatrixXd k0 = simulate_k(q, slab, y0);
    CHECK(k0.cwiseAbs().maxCoeff() == 0.0);

    // gammatilde = 1, beta = 0: k is an exponential martingale with mean -1
    MFLQProblem r = al_example_problem(500);
    r.beta = CoefficientPath::zero(1, 1, r.grid);
    r.gammatilde[0] = CoefficientPath::constant(m1(1.0), r.grid);
    const int paths = 5000;
    double acc = 0.0, ss = 0.0;
    for (int qq = 0; qq < paths; ++qq) {
        NoiseSlab sl = brownian_increments(13, static_cast<uint64_t>(qq), r.grid, 1, 1);
        double kT = simulate_k(r, sl, y0)(500, 0);
        acc += kT;
        ss += kT * kT;
    }
    double mean = acc / paths;
    double se = std::sqrt((ss / paths - mean * mean) / paths);
    CHECK(std::fabs(mean + 1.0) <= 3.0 * se);
}

TEST_CASE("eta representation") {
    // gamma = gammatilde = 0, beta = 0: eta == 1 and the estimate matches the
    // chi route within Monte Carlo error
    MFLQProblem p = al_example_problem(500);
    p.beta = CoefficientPath::zero(1, 1, p.grid);
    std::vector<VectorXd> v = const_path(p, 0.5);
    auto Ex = mean_under_law(p, open_loop_law(p, v));
    SimOptions o;
    o.paths = 5000;
    o.seed = 6;
    EtaEstimate est = simulate_eta(p, o, v, Ex);
    double ref = chi_route_y0(p, Ex, v);
    CHECK(std::fabs(est.y0 - ref) <= 3.0 * est.stderr_);
    CHECK(est.eta_T_mean(0) == 1.0);  // eta stays exactly one

    // psi = 0, rho = rhobar = 0: the estimate is exactly zero
    MFLQProblem z = p;
    z.psi = CoefficientPath::zero(1, 1, z.grid);
    z.rho.setZero();
    EtaEstimate e0 = simulate_eta(z, o, v, Ex);
    CHECK(e0.y0 == 0.0);
    CHECK(e0.stderr_ == 0.0);

    // gammatilde = 0.5: mean-one martingale weight
    MFLQProblem g = p;
    g.gammatilde[0] = CoefficientPath::constant(m1(0.5), g.grid);
    EtaEstimate eg = simulate_eta(g, o, v, Ex);
    CHECK(std::fabs(eg.eta_T_mean(0) - 1.0) <= 3.0 * eg.eta_T_se(0));

    // precondition violations are rejected
    MFLQProblem bad = al_example_problem(100);  // beta = 0.06 != 0
    CHECK_THROWS_AS(simulate_eta(bad, o, const_path(bad, 0.0),
                                 mean_under_law(bad, open_loop_law(bad, const_path(bad, 0.0)))),
                    ValidationError);
}

TEST_CASE("innovation diagnostics") {
    // h = 1, f = fbar = g = 0: wbar increments equal the observation noise bitwise
    TimeGrid gr = TimeGrid::make(1.0, 200);
    MFLQProblem p = MFLQProblem::zero(1, 1, 1, 1, 1, gr);
    p.c = CoefficientPath::constant(m1(0.2), gr);
    p.B = CoefficientPath::constant(m1(1.0), gr);
    p.h = CoefficientPath::constant(m1(1.0), gr);
    auto Sigma = solve_sigma(p);
    NoiseSlab slab = brownian_increments(8, 2, gr, 1, 1);
    auto Ex = mean_under_law(p, open_loop_law(p, const_path(p, 0.0)));
    PathRecord rec = simulate_truth(
        p, [](int, const VectorXd&, VectorXd& u) { u.setZero(); }, slab, Ex, Sigma);
    CHECK(rec.wbar == slab.dWt);

    // statistics on the bundled scenario
    MFLQProblem q = al_example_problem(1000);
    SynthesisResult s = synthesize(q);
    SimOptions o;
    o.paths = 5000;
    o.seed = 14;
    PathEnsemble ens = simulate_closed_loop(q, s.law, s.bundle, &s.reduced, o);
    InnovationStats ist = innovation_diagnostics(ens);
    CHECK(std::fabs(ist.mean(0)) <= 3.0 * ist.mean_se(0));
    CHECK(std::fabs(ist.variance(0) - 1.0) < 0.05);
    CHECK(std::fabs(ist.qv_mean - 1.0) < 0.02);
}

TEST_CASE("ensembles are reproducible and worker-count independent") {
    MFLQProblem p = al_example_problem(300);
    SynthesisResult s = synthesize(p);
    SimOptions o;
    o.paths = 600;
    o.seed = 19;
    PathEnsemble a = simulate_closed_loop(p, s.law, s.bundle, &s.reduced, o);
    PathEnsemble b = simulate_closed_loop(p, s.law, s.bundle, &s.reduced, o);
    SimOptions oser = o;
    oser.parallel = false;
    PathEnsemble c = simulate_closed_loop(p, s.law, s.bundle, &s.reduced, oser);
    for (long long q = 0; q < o.paths; ++q) {
        CHECK(a.summaries[static_cast<size_t>(q)].J == b.summaries[static_cast<size_t>(q)].J);
        CHECK(a.summaries[static_cast<size_t>(q)].J == c.summaries[static_cast<size_t>(q)].J);
    }
    CHECK(a.stats.mean_x == c.stats.mean_x);
    CHECK(a.stats.var_xhat == c.stats.var_xhat);
}

TEST_CASE("fresh-innovation mode agrees with the observation-driven filter in law") {
    MFLQProblem p = al_example_problem(500);
    SynthesisResult s = synthesize(p);
    SimOptions o;
    o.paths = 4000;
    o.seed = 23;
    PathEnsemble obs = simulate_closed_loop(p, s.law, s.bundle, &s.reduced, o);
    SimOptions of = o;
    of.fresh_innovation = true;
    of.seed = 24;
    PathEnsemble fresh = simulate_closed_loop(p, s.law, s.bundle, &s.reduced, of);
    double m1o = obs.stats.mean_xhat(500, 0), m1f = fresh.stats.mean_xhat(500, 0);
    double se = std::sqrt(obs.stats.var_xhat(500, 0) / static_cast<double>(o.paths) +
                          fresh.stats.var_xhat(500, 0) / static_cast<double>(o.paths));
    CHECK(std::fabs(m1o - m1f) <= 3.0 * se);
    double v1o = obs.stats.var_xhat(500, 0), v1f = fresh.stats.var_xhat(500, 0);
    CHECK(std::fabs(v1o - v1f) <= 0.2 * std::max(v1o, v1f) + 1e-12);
}

TEST_CASE("perturbed simulation with eps = 0 reproduces the baseline") {
    MFLQProblem p = al_example_problem(400);
    SynthesisResult s = synthesize(p);
    Perturbation dir;
    dir.name = "const";
    dir.kind = Perturbation::Kind::TimeFunction;
    dir.v = const_path(p, 1.0);
    SimOptions o;
    o.paths = 200;
    PathEnsemble ens = simulate_perturbed(p, s.law, s.bundle, s.reduced, dir, 0.0, o);
    for (const auto& sm : ens.summaries) CHECK(sm.J == sm.J_base);
}
