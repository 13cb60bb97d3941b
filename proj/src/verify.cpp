#include "mflqg/verify.hpp"

#include <cmath>
#include <numeric>

namespace mflqg {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

double trapz_w(int i, const TimeGrid& g) {
    return (i == 0 || i == g.step_count) ? 0.5 * g.step : g.step;
}

void mean_se(const std::vector<double>& xs, double& mean, double& se) {
    const size_t n = xs.size();
    mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(n);
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    se = (n > 1) ? std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n)) : 0.0;
}

} // namespace

CostReport mc_cost(const MFLQProblem& p, const ReducedCost& rc, const PathEnsemble& ens) {
    GateDecision gate = special_case_gate(p);
    if (!gate.accepted) throw GateRejection(gate.violations);
    if (ens.summaries.empty()) throw std::invalid_argument("mc_cost: empty ensemble");
    (void)rc;
    CostReport rep;
    rep.path_count = ens.path_count;
    std::vector<double> js;
    js.reserve(ens.summaries.size());
    for (const auto& s : ens.summaries) js.push_back(s.J);
    mean_se(js, rep.J_mc, rep.stderr_);
    return rep;
}

std::vector<Perturbation> standard_directions(const MFLQProblem& p,
                                              const RiccatiBundle& bundle) {
    const int K = p.grid.knots();
    auto time_fn = [&](const std::string& name, const std::function<double(double)>& fn) {
        Perturbation d;
        d.name = name;
        d.kind = Perturbation::Kind::TimeFunction;
        d.v.resize(static_cast<size_t>(K));
        for (int i = 0; i < K; ++i)
            d.v[static_cast<size_t>(i)] = VectorXd::Constant(p.k, fn(p.grid.t(i)));
        return d;
    };
    const double T = p.grid.horizon;
    std::vector<Perturbation> dirs;
    dirs.push_back(time_fn("const_plus", [](double) { return 1.0; }));
    dirs.push_back(time_fn("const_minus", [](double) { return -1.0; }));
    dirs.push_back(time_fn("ramp_up", [&](double t) { return t / T; }));
    dirs.push_back(time_fn("ramp_down", [&](double t) { return 1.0 - t / T; }));
    dirs.push_back(time_fn("sine", [&](double t) { return std::sin(2.0 * M_PI * t / T); }));
    dirs.push_back(time_fn("cosine", [&](double t) { return std::cos(2.0 * M_PI * t / T); }));
    dirs.push_back(time_fn("late_burst", [&](double t) { return t > 0.5 * T ? 1.0 : 0.0; }));
    dirs.push_back(time_fn("exp_ramp", [&](double t) { return std::exp(0.5 * t / T); }));

    // Lemma-style block projections of a smooth path (nu = 0)
    {
        std::vector<VectorXd> smooth(static_cast<size_t>(K));
        for (int i = 0; i < K; ++i)
            smooth[static_cast<size_t>(i)] =
                VectorXd::Constant(p.k, std::sin(2.0 * M_PI * p.grid.t(i) / T));
        for (int j : {4, 8}) {
            Perturbation d;
            d.name = "block_avg_" + std::to_string(j);
            d.kind = Perturbation::Kind::TimeFunction;
            d.v = piecewise_projection(smooth, j, p.grid, VectorXd::Zero(p.k));
            dirs.push_back(std::move(d));
        }
    }

    Perturbation fb;
    fb.name = "filter_feedback";
    fb.kind = Perturbation::Kind::FilterFeedback;
    fb.W = MatrixXd::Ones(p.k, p.n);
    dirs.push_back(fb);

    // second feedback-class direction: t * xhat via a ramped time function of
    // the baseline filter (realized through the co-simulated baseline)
    Perturbation fr;
    fr.name = "feedback_half";
    fr.kind = Perturbation::Kind::FilterFeedback;
    fr.W = 0.5 * MatrixXd::Ones(p.k, p.n);
    dirs.push_back(fr);
    (void)bundle;
    return dirs;
}

OptimalityReport optimality_sweep(const MFLQProblem& p, const SynthesisResult& synth,
                                  const std::vector<Perturbation>& directions,
                                  const std::vector<double>& epsilons, const SimOptions& opts) {
    OptimalityReport rep;
    rep.epsilons = epsilons;
    const int D = static_cast<int>(directions.size());
    const int E = static_cast<int>(epsilons.size());
    rep.delta.resize(D, E);
    rep.delta_se.resize(D, E);
    rep.ratio.resize(D, E);

    for (int d = 0; d < D; ++d) {
        rep.directions.push_back(directions[static_cast<size_t>(d)].name);
        for (int e = 0; e < E; ++e) {
            double eps = epsilons[static_cast<size_t>(e)];
            PathEnsemble ens = simulate_perturbed(p, synth.law, synth.bundle, synth.reduced,
                                                  directions[static_cast<size_t>(d)], eps, opts);
            std::vector<double> diffs;
            diffs.reserve(ens.summaries.size());
            for (const auto& s : ens.summaries) diffs.push_back(s.J - s.J_base);
            double mean, se;
            mean_se(diffs, mean, se);
            rep.delta(d, e) = mean;
            rep.delta_se(d, e) = se;
            rep.ratio(d, e) = mean / (eps * eps);
        }
    }

    rep.all_nonneg = true;
    rep.ratios_ok = true;
    for (int d = 0; d < D; ++d) {
        double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
        for (int e = 0; e < E; ++e) {
            if (rep.delta(d, e) < -3.0 * rep.delta_se(d, e)) rep.all_nonneg = false;
            lo = std::min(lo, rep.ratio(d, e));
            hi = std::max(hi, rep.ratio(d, e));
        }
        if (!(lo > 0.0) || hi / lo > 1.05) rep.ratios_ok = false;
    }
    return rep;
}

ScalingRecord first_variation_scaling(const MFLQProblem& p, const SynthesisResult& synth,
                                      const Perturbation& direction,
                                      const std::vector<double>& epsilons,
                                      const SimOptions& opts) {
    ScalingRecord rec;
    rec.epsilons = epsilons;
    for (double eps : epsilons) {
        PathEnsemble ens =
            simulate_perturbed(p, synth.law, synth.bundle, synth.reduced, direction, eps, opts);
        std::vector<double> diffs;
        diffs.reserve(ens.summaries.size());
        for (const auto& s : ens.summaries) diffs.push_back(s.J - s.J_base);
        double mean, se;
        mean_se(diffs, mean, se);
        rec.slope.push_back(mean / eps);
        rec.slope_se.push_back(se / std::fabs(eps));
    }
    return rec;
}

double decomposition_check(const MFLQProblem& p, const std::vector<VectorXd>& v,
                           uint64_t seed, long long paths) {
    const int N = p.grid.step_count;
    const double dt = p.grid.step;

    // Euler mean recursions so the per-step additivity is exact to roundoff.
    std::vector<VectorXd> m0(static_cast<size_t>(N + 1)), m1(m0), mv(m0);
    m0[0] = p.mu0;
    m1[0] = VectorXd::Zero(p.n);
    mv[0] = p.mu0;
    for (int i = 0; i < N; ++i) {
        size_t si = static_cast<size_t>(i);
        MatrixXd asum = p.a.at_knot(i) + p.abar.at_knot(i);
        VectorXd bv = p.b.at_knot(i) * v[si] + p.bbar.at_knot(i).col(0);
        m0[si + 1] = m0[si] + dt * (asum * m0[si]);
        m1[si + 1] = m1[si] + dt * (asum * m1[si] + bv);
        mv[si + 1] = mv[si] + dt * (asum * mv[si] + bv);
    }

    Eigen::SelfAdjointEigenSolver<MatrixXd> es(p.sigma0);
    MatrixXd sq = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                  es.eigenvectors().transpose();
    bool s0 = p.sigma0.cwiseAbs().maxCoeff() <= 0.0;

    NoiseGen gen{seed};
    double worst = 0.0;
    for (long long q = 0; q < paths; ++q) {
        uint64_t path = static_cast<uint64_t>(q);
        VectorXd x0 = p.mu0;
        if (!s0) {
            VectorXd xi(p.n);
            for (int j = 0; j < p.n; ++j)
                xi(j) = gen.normal(path, kInitStep, static_cast<uint32_t>(j));
            x0.noalias() += sq * xi;
        }
        VectorXd xz = x0, x1 = VectorXd::Zero(p.n), xf = x0;
        VectorXd Yz = VectorXd::Zero(p.rt), Y1 = Yz, Yf = Yz;
        VectorXd dW(p.r), dWt(p.rt);
        const double sdt = std::sqrt(dt);
        for (int i = 0; i < N; ++i) {
            size_t si = static_cast<size_t>(i);
            for (int j = 0; j < p.r; ++j)
                dW(j) = sdt * gen.normal(path, static_cast<uint32_t>(i), static_cast<uint32_t>(j));
            for (int j = 0; j < p.rt; ++j)
                dWt(j) = sdt * gen.normal(path, static_cast<uint32_t>(i),
                                          static_cast<uint32_t>(p.r + j));
            const MatrixXd& a = p.a.at_knot(i);
            const MatrixXd& ab = p.abar.at_knot(i);
            const MatrixXd& f = p.f.at_knot(i);
            const MatrixXd& fb = p.fbar.at_knot(i);
            VectorXd bv = p.b.at_knot(i) * v[si] + p.bbar.at_knot(i).col(0);
            Yz += dt * (f * xz + fb * m0[si]) + p.h.at_knot(i) * dWt;
            Y1 += dt * (f * x1 + fb * m1[si] + p.g.at_knot(i).col(0));
            Yf += dt * (f * xf + fb * mv[si] + p.g.at_knot(i).col(0)) + p.h.at_knot(i) * dWt;
            VectorXd cw = p.c.at_knot(i) * dW;
            xz += dt * (a * xz + ab * m0[si]) + cw;
            x1 += dt * (a * x1 + ab * m1[si] + bv);
            xf += dt * (a * xf + ab * mv[si] + bv) + cw;
            double dev = (xf - (xz + x1)).cwiseAbs().maxCoeff() +
                         (Yf - (Yz + Y1)).cwiseAbs().maxCoeff();
            worst = std::max(worst, dev);
        }
    }
    return worst;
}

std::vector<VectorXd> piecewise_projection(const std::vector<VectorXd>& v, int block_count,
                                           const TimeGrid& grid, const VectorXd& nu) {
    if (block_count < 1) throw std::invalid_argument("piecewise_projection: j must be >= 1");
    if (block_count > grid.step_count)
        throw std::invalid_argument("piecewise_projection: j exceeds step_count");
    const double delta = grid.horizon / block_count;
    const int K = grid.knots();
    const int dim = static_cast<int>(v[0].size());

    // integral of the piecewise-constant-left path over [a, b]
    auto integral = [&](double a, double b) {
        VectorXd acc = VectorXd::Zero(dim);
        for (int i = 0; i < grid.step_count; ++i) {
            double lo = std::max(a, grid.t(i));
            double hi = std::min(b, grid.t(i + 1));
            if (hi > lo) acc += (hi - lo) * v[static_cast<size_t>(i)];
        }
        return acc;
    };

    std::vector<VectorXd> out(static_cast<size_t>(K));
    for (int i = 0; i < K; ++i) {
        int blk = static_cast<int>(std::floor(grid.t(i) / delta + 1e-9));
        if (blk <= 0) {
            out[static_cast<size_t>(i)] = nu;
        } else {
            out[static_cast<size_t>(i)] =
                integral((blk - 1) * delta, blk * delta) / delta;
        }
    }
    return out;
}

std::vector<VectorXd> mean_under_law(const MFLQProblem& p, const FeedbackLaw& law) {
    SystemRhs sys = [&](double t, const SystemState& X) {
        int i = (t >= p.grid.horizon) ? p.grid.step_count : p.grid.cell(t);
        size_t si = static_cast<size_t>(i);
        MatrixXd gains = law.gain_filter[si] + law.gain_mean[si];
        MatrixXd dEx = (p.a.value(t, p.grid) + p.abar.value(t, p.grid)) * X[0] +
                       p.b.value(t, p.grid) * (gains * X[0] + law.offset[si]) +
                       p.bbar.value(t, p.grid);
        return SystemState{dEx};
    };
    auto path = integrate_system(sys, {p.mu0}, OdeDirection::Forward, p.grid);
    std::vector<VectorXd> out;
    out.reserve(path.size());
    for (auto& s : path) out.push_back(s[0].col(0));
    return out;
}

double chi_route_y0(const MFLQProblem& p, const std::vector<VectorXd>& Ex,
                    const std::vector<VectorXd>& Ev) {
    auto chi0 = chi_from_zero(p);
    VectorXd ones = VectorXd::Ones(p.m);
    double run = 0.0;
    for (int i = 0; i < p.grid.knots(); ++i) {
        size_t si = static_cast<size_t>(i);
        VectorXd integrand = (p.alpha.at_knot(i) + p.alphabar.at_knot(i)) * Ex[si] +
                             p.psi.at_knot(i) * Ev[si] + p.psibar.at_knot(i).col(0);
        run += trapz_w(i, p.grid) * ones.dot(chi0[si] * integrand);
    }
    double terminal = ones.dot(chi0.back() * (p.rho + p.rhobar) * Ex.back());
    return terminal + run;
}

LiftReport lift_check(const MFLQProblem& p, const SimOptions& opts) {
    LiftReport rep;

    // Control: the synthesized law on gated scenarios, otherwise open-loop 1.
    FeedbackLaw law;
    std::vector<VectorXd> Ex;
    RiccatiBundle bundle;
    ReducedCost rc;
    bool gated = special_case_gate(p).accepted;
    if (gated) {
        SynthesisResult synth = synthesize(p);
        law = synth.law;
        bundle = synth.bundle;
        rc = synth.reduced;
        Ex = bundle.Ex;
    } else {
        law.grid = p.grid;
        const int K = p.grid.knots();
        law.gain_filter.assign(static_cast<size_t>(K), MatrixXd::Zero(p.k, p.n));
        law.gain_mean.assign(static_cast<size_t>(K), MatrixXd::Zero(p.k, p.n));
        law.offset.assign(static_cast<size_t>(K), VectorXd::Ones(p.k));
        Ex = mean_under_law(p, law);
        bundle.grid = p.grid;
        bundle.Sigma = solve_sigma(p);
        bundle.Ex = Ex;
    }

    const int K = p.grid.knots();
    std::vector<VectorXd> Ev(static_cast<size_t>(K));
    for (int i = 0; i < K; ++i) {
        size_t si = static_cast<size_t>(i);
        Ev[si] = (law.gain_filter[si] + law.gain_mean[si]) * Ex[si] + law.offset[si];
    }

    // Lifted blocks (deviation/mean coordinates).
    auto lift_sq = [&](const MatrixXd& X, const MatrixXd& Xbar) {
        MatrixXd L = MatrixXd::Zero(2 * X.rows(), 2 * X.cols());
        L.topLeftCorner(X.rows(), X.cols()) = X;
        L.bottomRightCorner(X.rows(), X.cols()) = X + Xbar;
        return L;
    };

    // (a) deterministic mean trajectories: lifted 2n-dim ODE vs the original
    // mean ODE, both driven by the same knot-frozen Ev
    {
        SystemRhs orig = [&](double t, const SystemState& X) {
            int i = (t >= p.grid.horizon) ? p.grid.step_count : p.grid.cell(t);
            size_t si = static_cast<size_t>(i);
            MatrixXd d = (p.a.value(t, p.grid) + p.abar.value(t, p.grid)) * X[0] +
                         p.b.value(t, p.grid) * Ev[si] + p.bbar.value(t, p.grid);
            return SystemState{d};
        };
        auto base = integrate_system(orig, {p.mu0}, OdeDirection::Forward, p.grid);

        SystemRhs sys = [&](double t, const SystemState& X) {
            int i = (t >= p.grid.horizon) ? p.grid.step_count : p.grid.cell(t);
            size_t si = static_cast<size_t>(i);
            MatrixXd ba = lift_sq(p.a.value(t, p.grid), p.abar.value(t, p.grid));
            MatrixXd bb = MatrixXd::Zero(2 * p.n, 2 * p.k);
            bb.topLeftCorner(p.n, p.k) = p.b.value(t, p.grid);
            bb.bottomRightCorner(p.n, p.k) = p.b.value(t, p.grid);
            Eigen::VectorXd bv(2 * p.k);
            bv.head(p.k).setZero();
            bv.tail(p.k) = Ev[si];
            Eigen::VectorXd bbar2(2 * p.n);
            bbar2.head(p.n).setZero();
            bbar2.tail(p.n) = p.bbar.value(t, p.grid).col(0);
            MatrixXd d = ba * X[0] + bb * bv + bbar2;
            return SystemState{d};
        };
        Eigen::VectorXd x0(2 * p.n);
        x0.head(p.n).setZero();
        x0.tail(p.n) = p.mu0;
        auto lifted = integrate_system(sys, {x0}, OdeDirection::Forward, p.grid);
        double gap = 0.0;
        for (int i = 0; i < K; ++i) {
            size_t si = static_cast<size_t>(i);
            gap = std::max(gap, (lifted[si][0].col(0).tail(p.n) - base[si][0].col(0))
                                    .cwiseAbs()
                                    .maxCoeff());
            gap = std::max(gap, lifted[si][0].col(0).head(p.n).cwiseAbs().maxCoeff());
        }
        rep.mean_gap = gap;
    }

    // (b) mean backward component (closes only when the gamma family vanishes)
    if (gated) {
        SystemRhs orig = [&](double t, const SystemState& X) {
            int i = (t >= p.grid.horizon) ? p.grid.step_count : p.grid.cell(t);
            size_t si = static_cast<size_t>(i);
            MatrixXd d = -((p.alpha.value(t, p.grid) + p.alphabar.value(t, p.grid)) * Ex[si] +
                           (p.beta.value(t, p.grid) + p.betabar.value(t, p.grid)) * X[0] +
                           p.psi.value(t, p.grid) * Ev[si] + p.psibar.value(t, p.grid));
            return SystemState{d};
        };
        Eigen::VectorXd eyT = (p.rho + p.rhobar) * Ex.back();
        auto ey = integrate_system(orig, {eyT}, OdeDirection::Backward, p.grid);

        SystemRhs lifted = [&](double t, const SystemState& X) {
            int i = (t >= p.grid.horizon) ? p.grid.step_count : p.grid.cell(t);
            size_t si = static_cast<size_t>(i);
            MatrixXd ca = lift_sq(p.alpha.value(t, p.grid), p.alphabar.value(t, p.grid));
            MatrixXd cb = lift_sq(p.beta.value(t, p.grid), p.betabar.value(t, p.grid));
            MatrixXd cp = MatrixXd::Zero(2 * p.m, 2 * p.k);
            cp.topLeftCorner(p.m, p.k) = p.psi.value(t, p.grid);
            cp.bottomRightCorner(p.m, p.k) = p.psi.value(t, p.grid);
            Eigen::VectorXd ex2(2 * p.n), ev2(2 * p.k), pb2(2 * p.m);
            ex2.head(p.n).setZero();
            ex2.tail(p.n) = Ex[si];
            ev2.head(p.k).setZero();
            ev2.tail(p.k) = Ev[si];
            pb2.head(p.m).setZero();
            pb2.tail(p.m) = p.psibar.value(t, p.grid).col(0);
            MatrixXd d = -(ca * ex2 + cb * X[0] + cp * ev2 + pb2);
            return SystemState{d};
        };
        MatrixXd crho = lift_sq(p.rho, p.rhobar);
        Eigen::VectorXd exT2(2 * p.n);
        exT2.head(p.n).setZero();
        exT2.tail(p.n) = Ex.back();
        Eigen::VectorXd eyT2 = crho * exT2;
        auto ey2 = integrate_system(lifted, {eyT2}, OdeDirection::Backward, p.grid);
        double gap = 0.0;
        for (int i = 0; i < K; ++i) {
            size_t si = static_cast<size_t>(i);
            gap = std::max(gap,
                           (ey2[si][0].col(0).tail(p.m) - ey[si][0].col(0)).cwiseAbs().maxCoeff());
            gap = std::max(gap, ey2[si][0].col(0).head(p.m).cwiseAbs().maxCoeff());
        }
        rep.mean_y_gap = gap;
    }

    // (c) quadratic-form identities of the lifted weights at random points
    {
        NoiseGen g{opts.seed ^ 0x51717ull};
        double gap = 0.0;
        MatrixXd bA = lift_sq(p.A.at_knot(0), p.Abar.at_knot(0));
        MatrixXd bH = lift_sq(p.H, p.Hbar);
        MatrixXd bM = lift_sq(p.M, p.M * 0.0);
        for (int trial = 0; trial < 200; ++trial) {
            VectorXd dev(p.n), mean(p.n);
            for (int j = 0; j < p.n; ++j) {
                dev(j) = g.normal(static_cast<uint64_t>(trial), 1, static_cast<uint32_t>(j));
                mean(j) = g.normal(static_cast<uint64_t>(trial), 2, static_cast<uint32_t>(j));
            }
            Eigen::VectorXd lifted(2 * p.n);
            lifted.head(p.n) = dev;
            lifted.tail(p.n) = mean;
            double lhsA = lifted.dot(bA * lifted);
            double rhsA = dev.dot(p.A.at_knot(0) * dev) +
                          mean.dot((p.A.at_knot(0) + p.Abar.at_knot(0)) * mean);
            double lhsH = lifted.dot(bH * lifted);
            double rhsH = dev.dot(p.H * dev) + mean.dot((p.H + p.Hbar) * mean);
            gap = std::max(gap, std::fabs(lhsA - rhsA));
            gap = std::max(gap, std::fabs(lhsH - rhsH));
        }
        (void)bM;
        rep.identity_gap = gap;
    }

    // (d) Monte Carlo cost comparison on simulated paths mapped through (x-Ex, Ex)
    {
        SimOptions o = opts;
        o.store_full = true;
        PathEnsemble ens = simulate_closed_loop(p, law, bundle, nullptr, o);
        std::vector<double> orig(static_cast<size_t>(o.paths)), lift(orig), diff(orig);
        MatrixXd bA0 = lift_sq(p.A.at_knot(0), p.Abar.at_knot(0));
        MatrixXd bH = lift_sq(p.H, p.Hbar);
        for (long long q = 0; q < o.paths; ++q) {
            const PathRecord& rec = ens.records[static_cast<size_t>(q)];
            double jo = 0.0, jl = 0.0;
            for (int i = 0; i < K; ++i) {
                size_t si = static_cast<size_t>(i);
                double w = trapz_w(i, p.grid);
                VectorXd x = rec.x.row(i).transpose();
                VectorXd u = rec.u.row(i).transpose();
                const VectorXd& ex = Ex[si];
                const VectorXd& ev = Ev[si];
                MatrixXd bA = lift_sq(p.A.at_knot(i), p.Abar.at_knot(i));
                MatrixXd bB = lift_sq(p.B.at_knot(i), p.B.at_knot(i) * 0.0);
                jo += w * (x.dot(p.A.at_knot(i) * x) + ex.dot(p.Abar.at_knot(i) * ex) +
                           u.dot(p.B.at_knot(i) * u));
                Eigen::VectorXd bx(2 * p.n), bv(2 * p.k);
                bx.head(p.n) = x - ex;
                bx.tail(p.n) = ex;
                bv.head(p.k) = u - ev;
                bv.tail(p.k) = ev;
                jl += w * (bx.dot(bA * bx) + bv.dot(bB * bv));
            }
            VectorXd xT = rec.x.row(p.grid.step_count).transpose();
            jo += xT.dot(p.H * xT) + Ex.back().dot(p.Hbar * Ex.back());
            Eigen::VectorXd bxT(2 * p.n);
            bxT.head(p.n) = xT - Ex.back();
            bxT.tail(p.n) = Ex.back();
            jl += bxT.dot(bH * bxT);
            orig[static_cast<size_t>(q)] = jo;
            lift[static_cast<size_t>(q)] = jl;
            diff[static_cast<size_t>(q)] = jl - jo;
        }
        double m, se;
        mean_se(orig, m, se);
        rep.cost_original = m;
        mean_se(lift, m, se);
        rep.cost_lifted = m;
        mean_se(diff, rep.diff_mean, rep.diff_se);
        rep.paths = o.paths;
    }
    return rep;
}

AlReference al_reference(double t) {
    if (t < 0.0 || t > 1.0) throw std::domain_error("al_reference: t outside [0, 1]");
    AlReference r;
    r.Ep = -std::exp(0.06 * (2.0 - t));
    r.Ex = std::exp(0.06 * t) *
           (1.0 + t + (25.0 / 3.0) * std::exp(0.12) * (1.0 - std::exp(-0.12 * t)) +
            (1.0 / 6.0) * (1.0 - std::exp(-0.06 * t)));
    r.Gamma = 0.06 * std::exp(0.06 * (1.0 - t)) / (5.0 + std::exp(0.06 * (1.0 - t)));
    r.Sigma = 0.08 * (std::exp(0.1 * t) - 1.0) / (std::exp(0.1 * t) + 4.0);
    r.theta1 = 0.03 * r.Ex + std::exp(0.06 * t) + 0.01;
    r.theta2 = -0.03 * std::exp(0.06 * (2.0 - t));

    // Lambda by quadrature of the closed-form variation-of-constants formula.
    // int_t^s Gamma dr = ln((5 + e^{0.06(1-t)}) / (5 + e^{0.06(1-s)})).
    auto growth = [](double from, double to) {
        // exp(int_from^to (0.03 - Gamma) dr); int Gamma has a log closed form
        double wf = std::exp(0.06 * (1.0 - from));
        double wt = std::exp(0.06 * (1.0 - to));
        return std::exp(0.03 * (to - from)) * (5.0 + wt) / (5.0 + wf);
    };
    auto ex_at = [](double s) {
        return std::exp(0.06 * s) *
               (1.0 + s + (25.0 / 3.0) * std::exp(0.12) * (1.0 - std::exp(-0.12 * s)) +
                (1.0 / 6.0) * (1.0 - std::exp(-0.06 * s)));
    };
    auto integrand = [&](double s) {
        double gamma = 0.06 * std::exp(0.06 * (1.0 - s)) / (5.0 + std::exp(0.06 * (1.0 - s)));
        double th1 = 0.03 * ex_at(s) + std::exp(0.06 * s) + 0.01;
        double th2 = -0.03 * std::exp(0.06 * (2.0 - s));
        return (gamma * th1 + th2) * growth(t, s);
    };
    const double exT = ex_at(1.0);
    double lam = -(0.01 * exT + std::exp(0.06)) * growth(t, 1.0);
    const int n = 2000;  // Simpson on [t, 1]
    double hq = (1.0 - t) / n;
    if (hq > 0.0) {
        double acc = integrand(t) + integrand(1.0);
        for (int i = 1; i < n; ++i)
            acc += integrand(t + hq * i) * ((i % 2) ? 4.0 : 2.0);
        lam += acc * hq / 3.0;
    }
    r.Lambda = lam;
    r.offset = -lam + std::exp(0.06 * t);
    return r;
}

} // namespace mflqg
