#include "mflqg/synthesis.hpp"

namespace mflqg {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Trapezoid weights on the grid.
double trapz_w(int i, const TimeGrid& g) {
    return (i == 0 || i == g.step_count) ? 0.5 * g.step : g.step;
}

} // namespace

ReducedCost reduce_cost(const MFLQProblem& p) {
    GateDecision gate = special_case_gate(p);
    if (!gate.accepted) throw GateRejection(gate.violations);

    ReducedCost rc;
    rc.chi0 = chi_from_zero(p);
    const int K = p.grid.knots();
    rc.F.resize(static_cast<size_t>(K));
    rc.Fbar.resize(static_cast<size_t>(K));
    rc.G.resize(static_cast<size_t>(K));
    rc.J0 = 0.0;
    for (int i = 0; i < K; ++i) {
        const MatrixXd& C = rc.chi0[static_cast<size_t>(i)];
        rc.F[static_cast<size_t>(i)] =
            p.Ftilde.at_knot(i).col(0) - (C * p.alpha.at_knot(i)).transpose() * p.N;
        rc.Fbar[static_cast<size_t>(i)] =
            p.Fbartilde.at_knot(i).col(0) - (C * p.alphabar.at_knot(i)).transpose() * p.N;
        rc.G[static_cast<size_t>(i)] =
            p.Gtilde.at_knot(i).col(0) - (C * p.psi.at_knot(i)).transpose() * p.N;
        rc.J0 -= trapz_w(i, p.grid) * p.N.dot(C * p.psibar.at_knot(i).col(0));
    }
    rc.L = p.Ltilde - (rc.chi0.back() * p.rho).transpose() * p.N;
    rc.Lbar = p.Lbartilde - (rc.chi0.back() * p.rhobar).transpose() * p.N;
    return rc;
}

FeedbackLaw assemble_law(const MFLQProblem& p, const ReducedCost& rc,
                         const RiccatiBundle& bundle) {
    FeedbackLaw law;
    law.grid = p.grid;
    const int K = p.grid.knots();
    law.gain_filter.resize(static_cast<size_t>(K));
    law.gain_mean.resize(static_cast<size_t>(K));
    law.offset.resize(static_cast<size_t>(K));
    for (int i = 0; i < K; ++i) {
        MatrixXd Binv = p.B.at_knot(i).inverse();
        const MatrixXd& b = p.b.at_knot(i);
        law.gain_filter[static_cast<size_t>(i)] =
            -Binv * (b.transpose() * bundle.Gamma[static_cast<size_t>(i)] + p.D.at_knot(i));
        law.gain_mean[static_cast<size_t>(i)] = -Binv * p.Dbar.at_knot(i);
        law.offset[static_cast<size_t>(i)] =
            -Binv * (b.transpose() * bundle.Lambda[static_cast<size_t>(i)] +
                     rc.G[static_cast<size_t>(i)]);
    }
    return law;
}

SynthesisResult synthesize(const MFLQProblem& p) {
    SynthesisResult out;
    out.report = validate(p);
    if (!out.report.structure_ok) {
        std::string msg = "validation failed:";
        for (const auto& s : out.report.messages) msg += " " + s + ";";
        throw ValidationError(msg);
    }
    out.reduced = reduce_cost(p);  // throws GateRejection when gated coefficients are present
    out.bundle = solve_bundle(p, out.reduced);
    out.law = assemble_law(p, out.reduced, out.bundle);
    return out;
}

Eigen::VectorXd evaluate_control(const FeedbackLaw& law, const Eigen::VectorXd& xhat,
                                 const Eigen::VectorXd& ex, double t) {
    if (t < 0.0 || t > law.grid.horizon * (1.0 + 1e-12))
        throw std::domain_error("evaluate_control: time outside the horizon");
    int i = (t >= law.grid.horizon) ? law.grid.step_count : law.grid.cell(t);
    return law.at_knot(i, xhat, ex);
}

AnalyticCost analytic_cost(const MFLQProblem& p, const ReducedCost& rc,
                           const RiccatiBundle& bu, double kappa) {
    AnalyticCost out;
    out.kappa = kappa;
    const int K = p.grid.knots();
    const int Nn = p.grid.step_count;

    double mean_quad = 0, mean_cross = 0, gain_cross = 0, lambda_quad = 0, g_quad = 0;
    double filter_noise = 0, trace_running = 0;
    for (int i = 0; i < K; ++i) {
        double w = trapz_w(i, p.grid);
        size_t si = static_cast<size_t>(i);
        MatrixXd Binv = p.B.at_knot(i).inverse();
        const MatrixXd& b = p.b.at_knot(i);
        const MatrixXd& D = p.D.at_knot(i);
        const MatrixXd& Db = p.Dbar.at_knot(i);
        const MatrixXd& abar = p.abar.at_knot(i);
        const MatrixXd& Gm = bu.Gamma[si];
        const VectorXd& Ex = bu.Ex[si];
        const VectorXd& La = bu.Lambda[si];
        const VectorXd& G = rc.G[si];
        MatrixXd hinv = p.h.at_knot(i).inverse();
        MatrixXd S = bu.Sigma[si] * p.f.at_knot(i).transpose() * hinv.transpose();

        mean_quad += 0.5 * w *
                     (Ex.dot(((2.0 * D + Db).transpose() * Binv * Db - p.Abar.at_knot(i) -
                              2.0 * abar.transpose() * Gm) * Ex));
        mean_cross += w * (Ex.dot(Db.transpose() * Binv * b.transpose() * Gm * Ex) -
                           Ex.dot(Gm * b * Binv * G + Gm * b * Binv * b.transpose() * La));
        gain_cross += w * ((b.transpose() * Gm * Ex).dot(Binv * (b.transpose() * La + G)));
        lambda_quad += 0.5 * w *
                       La.dot(2.0 * p.bbar.at_knot(i).col(0) - 2.0 * b * Binv * G -
                              b * Binv * b.transpose() * La);
        g_quad -= 0.5 * w * G.dot(Binv * G);
        filter_noise += 0.5 * w * (S.array() * (Gm * S).array()).sum();
        trace_running += 0.5 * w * (p.A.at_knot(i) * bu.Sigma[si]).trace();
    }
    double terminal_mean = -0.5 * bu.Ex.back().dot(p.Hbar * bu.Ex.back());
    double gamma_initial = 0.5 * p.mu0.dot(bu.Gamma.front() * p.mu0);
    double lambda_initial = bu.Lambda.front().dot(p.mu0);
    double trace_terminal = kappa * (p.H * bu.Sigma.back()).trace();

    out.terms = {{"mean_quadratic", mean_quad},
                 {"mean_cross", mean_cross},
                 {"gain_cross", gain_cross},
                 {"terminal_mean", terminal_mean},
                 {"lambda_quadratic", lambda_quad},
                 {"g_quadratic", g_quad},
                 {"gamma_initial", gamma_initial},
                 {"lambda_initial", lambda_initial},
                 {"filter_noise", filter_noise},
                 {"J0", rc.J0},
                 {"trace_running", trace_running},
                 {"trace_terminal", trace_terminal}};
    out.J_formula = 0.0;
    for (const auto& [name, v] : out.terms) out.J_formula += v;

    // Independent route: Lyapunov ODE for V = Var(xhat) under the closed loop,
    // then the reduced cost expectation term by term.
    SystemRhs sys = [&p](double t, const SystemState& X) {
        const MatrixXd& V = X[0];
        const MatrixXd& Gm = X[1];
        const MatrixXd& Sg = X[2];
        MatrixXd Binv = p.B.value(t, p.grid).inverse();
        MatrixXd b = p.b.value(t, p.grid);
        MatrixXd a = p.a.value(t, p.grid);
        MatrixXd hinv = p.h.value(t, p.grid).inverse();
        MatrixXd f = p.f.value(t, p.grid);
        MatrixXd Mcl = a - b * Binv * (p.D.value(t, p.grid) + b.transpose() * Gm);
        MatrixXd S = Sg * f.transpose() * hinv.transpose();
        MatrixXd dV = Mcl * V + V * Mcl.transpose() + S * S.transpose();
        // Gamma and Sigma co-integrated for exact interior values
        MatrixXd E2 = a - b * Binv * p.D.value(t, p.grid);
        MatrixXd Q2 = p.A.value(t, p.grid) -
                      p.D.value(t, p.grid).transpose() * Binv * p.D.value(t, p.grid);
        MatrixXd dG = -(Gm * E2 + E2.transpose() * Gm -
                        Gm * b * Binv * b.transpose() * Gm + Q2);
        MatrixXd c = p.c.value(t, p.grid);
        MatrixXd fS = f * Sg;
        MatrixXd dS = a * Sg + Sg * a.transpose() -
                      fS.transpose() * hinv.transpose() * hinv * fS + c * c.transpose();
        return SystemState{dV, dG, dS};
    };
    StepHook sym = [](SystemState& s) {
        for (size_t j = 0; j < 3; ++j) s[j] = 0.5 * (s[j] + s[j].transpose()).eval();
    };
    auto vpath = integrate_system(
        sys, {MatrixXd::Zero(p.n, p.n), bu.Gamma.front(), p.sigma0},
        OdeDirection::Forward, p.grid, kBlowUpNorm, sym);

    double j1 = 0.0;
    for (int i = 0; i < K; ++i) {
        double w = trapz_w(i, p.grid);
        size_t si = static_cast<size_t>(i);
        MatrixXd Binv = p.B.at_knot(i).inverse();
        const MatrixXd& b = p.b.at_knot(i);
        const MatrixXd& D = p.D.at_knot(i);
        const MatrixXd& V = vpath[si][0];
        const VectorXd& Ex = bu.Ex[si];
        MatrixXd Kg = -Binv * (b.transpose() * bu.Gamma[si] + D);
        VectorXd ubar = Kg * Ex - Binv * (p.Dbar.at_knot(i) * Ex +
                                          b.transpose() * bu.Lambda[si] + rc.G[si]);
        const MatrixXd& Bq = p.B.at_knot(i);
        MatrixXd quad = p.A.at_knot(i) + Kg.transpose() * Bq * Kg +
                        Kg.transpose() * D + D.transpose() * Kg;
        double run = (quad * V).trace() +
                     Ex.dot((p.A.at_knot(i) + p.Abar.at_knot(i)) * Ex) + ubar.dot(Bq * ubar) +
                     2.0 * ubar.dot((D + p.Dbar.at_knot(i)) * Ex) +
                     2.0 * (rc.F[si] + rc.Fbar[si]).dot(Ex) + 2.0 * rc.G[si].dot(ubar);
        j1 += 0.5 * w * run;
    }
    j1 += 0.5 * ((p.H * vpath[static_cast<size_t>(Nn)][0]).trace() +
                 bu.Ex.back().dot((p.H + p.Hbar) * bu.Ex.back())) +
          (rc.L + rc.Lbar).dot(bu.Ex.back());
    out.J_moment = j1 + rc.J0 + trace_running + trace_terminal;
    return out;
}

double hamiltonian(const MFLQProblem& p, double t, const Eigen::VectorXd& x,
                   const Eigen::VectorXd& y, const Eigen::MatrixXd& z,
                   const Eigen::MatrixXd& zt, const Eigen::VectorXd& xbar,
                   const Eigen::VectorXd& ybar, const Eigen::MatrixXd& zbar,
                   const Eigen::MatrixXd& ztbar, const Eigen::VectorXd& v,
                   const Eigen::VectorXd& k, const Eigen::VectorXd& pc,
                   const Eigen::MatrixXd& q) {
    auto check = [&](long rows, long cols, const Eigen::MatrixXd& m, const char* name) {
        if (m.rows() != rows || m.cols() != cols)
            throw DimensionError(name, "expected " + std::to_string(rows) + "x" +
                                           std::to_string(cols));
    };
    check(p.n, 1, x, "x"); check(p.m, 1, y, "y"); check(p.m, p.r, z, "z");
    check(p.m, p.rt, zt, "ztilde"); check(p.n, 1, xbar, "xbar"); check(p.m, 1, ybar, "ybar");
    check(p.m, p.r, zbar, "zbar"); check(p.m, p.rt, ztbar, "ztildebar");
    check(p.k, 1, v, "v"); check(p.m, 1, k, "k"); check(p.n, 1, pc, "p");
    check(p.n, p.r, q, "q");

    const TimeGrid& g = p.grid;
    VectorXd drift = p.a.value(t, g) * x + p.abar.value(t, g) * xbar + p.b.value(t, g) * v +
                     p.bbar.value(t, g).col(0);
    double hv = drift.dot(pc);
    hv += (p.c.value(t, g).array() * q.array()).sum();

    VectorXd gen = p.alpha.value(t, g) * x + p.alphabar.value(t, g) * xbar +
                   p.beta.value(t, g) * y + p.betabar.value(t, g) * ybar +
                   p.psi.value(t, g) * v + p.psibar.value(t, g).col(0);
    for (int j = 0; j < p.r; ++j)
        gen += p.gamma[static_cast<size_t>(j)].value(t, g) * z.col(j) +
               p.gammabar[static_cast<size_t>(j)].value(t, g) * zbar.col(j);
    for (int j = 0; j < p.rt; ++j)
        gen += p.gammatilde[static_cast<size_t>(j)].value(t, g) * zt.col(j) +
               p.gammabartilde[static_cast<size_t>(j)].value(t, g) * ztbar.col(j);
    hv -= gen.dot(k);

    hv += 0.5 * (x.dot(p.A.value(t, g) * x) + xbar.dot(p.Abar.value(t, g) * xbar) +
                 v.dot(p.B.value(t, g) * v) + 2.0 * v.dot(p.D.value(t, g) * x) +
                 2.0 * v.dot(p.Dbar.value(t, g) * xbar) +
                 2.0 * p.Ftilde.value(t, g).col(0).dot(x) +
                 2.0 * p.Fbartilde.value(t, g).col(0).dot(xbar) +
                 2.0 * p.Gtilde.value(t, g).col(0).dot(v));
    return hv;
}

Eigen::VectorXd stationarity_residual(const MFLQProblem& p, const ReducedCost& rc,
                                      const RiccatiBundle& bundle, double t,
                                      const Eigen::VectorXd& xhat, const Eigen::VectorXd& ex,
                                      const Eigen::VectorXd& u) {
    GateDecision gate = special_case_gate(p);
    if (!gate.accepted) throw GateRejection(gate.violations);
    int i = (t >= p.grid.horizon) ? p.grid.step_count : p.grid.cell(t);
    size_t si = static_cast<size_t>(i);
    const MatrixXd& b = p.b.at_knot(i);
    return p.B.at_knot(i) * u +
           (b.transpose() * bundle.Gamma[si] + p.D.at_knot(i)) * xhat +
           p.Dbar.at_knot(i) * ex + b.transpose() * bundle.Lambda[si] + rc.G[si];
}

} // namespace mflqg
