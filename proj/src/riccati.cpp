#include "mflqg/riccati.hpp"

#include <cmath>

namespace mflqg {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd binv_at(const MFLQProblem& p, double t) {
    return p.B.value(t, p.grid).inverse();
}

void symmetrize_block(SystemState& s, size_t idx) {
    s[idx] = 0.5 * (s[idx] + s[idx].transpose()).eval();
}

// Reduced running linear costs at an arbitrary time, given chi_0^t.
VectorXd reduced_G(const MFLQProblem& p, double t, const MatrixXd& chi0t) {
    return p.Gtilde.value(t, p.grid).col(0) - (chi0t * p.psi.value(t, p.grid)).transpose() * p.N;
}

VectorXd reduced_FpFbar(const MFLQProblem& p, double t, const MatrixXd& chi0t) {
    MatrixXd asum = p.alpha.value(t, p.grid) + p.alphabar.value(t, p.grid);
    return p.Ftilde.value(t, p.grid).col(0) + p.Fbartilde.value(t, p.grid).col(0) -
           (chi0t * asum).transpose() * p.N;
}

// Phi Riccati right-hand side (time-forward form dPhi/dt = ...).
MatrixXd phi_rhs(const MFLQProblem& p, double t, const MatrixXd& Phi) {
    MatrixXd Binv = binv_at(p, t);
    MatrixXd b = p.b.value(t, p.grid);
    MatrixXd DpD = p.D.value(t, p.grid) + p.Dbar.value(t, p.grid);
    MatrixXd E1 = p.a.value(t, p.grid) + p.abar.value(t, p.grid) - b * Binv * DpD;
    MatrixXd Q1 = p.A.value(t, p.grid) + p.Abar.value(t, p.grid) -
                  DpD.transpose() * Binv * DpD;
    return -(Phi * E1 + E1.transpose() * Phi - Phi * b * Binv * b.transpose() * Phi + Q1);
}

MatrixXd gamma_rhs(const MFLQProblem& p, double t, const MatrixXd& G) {
    MatrixXd Binv = binv_at(p, t);
    MatrixXd b = p.b.value(t, p.grid);
    MatrixXd D = p.D.value(t, p.grid);
    MatrixXd E2 = p.a.value(t, p.grid) - b * Binv * D;
    // Constant term reads D^T B^-1 D (the printed D^T B D conflicts with the
    // filter equation's A - D^T B^-1 D; see errata notes).
    MatrixXd Q2 = p.A.value(t, p.grid) - D.transpose() * Binv * D;
    return -(G * E2 + E2.transpose() * G - G * b * Binv * b.transpose() * G + Q2);
}

VectorXd psi_rhs(const MFLQProblem& p, double t, const MatrixXd& Phi, const VectorXd& Psi,
                 const MatrixXd& chi0t) {
    MatrixXd Binv = binv_at(p, t);
    MatrixXd b = p.b.value(t, p.grid);
    MatrixXd DpD = p.D.value(t, p.grid) + p.Dbar.value(t, p.grid);
    MatrixXd E1t = (p.a.value(t, p.grid) + p.abar.value(t, p.grid)).transpose() -
                   DpD.transpose() * Binv * b.transpose();
    VectorXd G = reduced_G(p, t, chi0t);
    VectorXd src = Phi * (p.bbar.value(t, p.grid).col(0) - b * Binv * G) -
                   DpD.transpose() * Binv * G + reduced_FpFbar(p, t, chi0t);
    return -((E1t - Phi * b * Binv * b.transpose()) * Psi + src);
}

// Coupled mean system (state, costate) used by the mean ODE and by Lambda.
void mean_system_rhs(const MFLQProblem& p, double t, const VectorXd& Ex, const VectorXd& Ep,
                     const MatrixXd& chi0t, VectorXd& dEx, VectorXd& dEp) {
    MatrixXd Binv = binv_at(p, t);
    MatrixXd b = p.b.value(t, p.grid);
    MatrixXd DpD = p.D.value(t, p.grid) + p.Dbar.value(t, p.grid);
    MatrixXd E1 = p.a.value(t, p.grid) + p.abar.value(t, p.grid) - b * Binv * DpD;
    MatrixXd Q1 = p.A.value(t, p.grid) + p.Abar.value(t, p.grid) -
                  DpD.transpose() * Binv * DpD;
    VectorXd G = reduced_G(p, t, chi0t);
    VectorXd FpF = reduced_FpFbar(p, t, chi0t);
    dEx = E1 * Ex - b * Binv * b.transpose() * Ep - b * Binv * G + p.bbar.value(t, p.grid).col(0);
    dEp = -Q1 * Ex - E1.transpose() * Ep + DpD.transpose() * Binv * G - FpF;
}

void theta_at(const MFLQProblem& p, double t, const VectorXd& Ex, const VectorXd& Ep,
              const MatrixXd& chi0t, VectorXd& th1, VectorXd& th2) {
    MatrixXd Binv = binv_at(p, t);
    MatrixXd b = p.b.value(t, p.grid);
    MatrixXd D = p.D.value(t, p.grid);
    MatrixXd Db = p.Dbar.value(t, p.grid);
    MatrixXd abar = p.abar.value(t, p.grid);
    VectorXd G = reduced_G(p, t, chi0t);
    th1 = (abar - b * Binv * Db) * Ex - b * Binv * G + p.bbar.value(t, p.grid).col(0);
    th2 = (p.Abar.value(t, p.grid) - D.transpose() * Binv * Db - Db.transpose() * Binv * D -
           Db.transpose() * Binv * Db) * Ex +
          (abar.transpose() - Db.transpose() * Binv * b.transpose()) * Ep -
          (D + Db).transpose() * Binv * G + reduced_FpFbar(p, t, chi0t);
}

MatrixXd beta_sum(const MFLQProblem& p, double t) {
    return p.beta.value(t, p.grid) + p.betabar.value(t, p.grid);
}

} // namespace

Eigen::MatrixXd chi(const MFLQProblem& p, double t, double s) {
    if (t > s) throw std::domain_error("chi: requires t <= s");
    MatrixXd X = MatrixXd::Identity(p.m, p.m);
    if (s - t <= 0.0) return X;
    int steps = std::max(1, static_cast<int>(std::ceil((s - t) / p.grid.step)));
    double dt = (s - t) / steps;
    for (int i = 0; i < steps; ++i) {
        double tau = t + dt * i;
        MatrixXd k1 = beta_sum(p, tau) * X;
        MatrixXd k2 = beta_sum(p, tau + 0.5 * dt) * (X + 0.5 * dt * k1);
        MatrixXd k3 = beta_sum(p, tau + 0.5 * dt) * (X + 0.5 * dt * k2);
        MatrixXd k4 = beta_sum(p, tau + dt) * (X + dt * k3);
        X += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return X;
}

std::vector<Eigen::MatrixXd> chi_from_zero(const MFLQProblem& p) {
    MatrixRhs rhs = [&p](double t, const MatrixXd& X) -> MatrixXd {
        return beta_sum(p, t) * X;
    };
    return integrate_matrix_ode(rhs, MatrixXd::Identity(p.m, p.m), OdeDirection::Forward,
                                p.grid);
}

std::vector<Eigen::MatrixXd> solve_sigma(const MFLQProblem& p) {
    MatrixRhs rhs = [&p](double t, const MatrixXd& S) {
        MatrixXd a = p.a.value(t, p.grid);
        MatrixXd hinv = p.h.value(t, p.grid).inverse();
        MatrixXd fS = p.f.value(t, p.grid) * S;
        MatrixXd c = p.c.value(t, p.grid);
        return (a * S + S * a.transpose() -
                fS.transpose() * hinv.transpose() * hinv * fS + c * c.transpose())
            .eval();
    };
    SystemRhs sys = [&rhs](double t, const SystemState& X) { return SystemState{rhs(t, X[0])}; };
    StepHook sym = [](SystemState& s) { symmetrize_block(s, 0); };
    auto path = integrate_system(sys, {p.sigma0}, OdeDirection::Forward, p.grid, kBlowUpNorm, sym);
    std::vector<MatrixXd> out;
    out.reserve(path.size());
    for (auto& s : path) out.push_back(std::move(s[0]));
    return out;
}

std::vector<Eigen::MatrixXd> solve_phi(const MFLQProblem& p, const ReducedCost&) {
    SystemRhs sys = [&p](double t, const SystemState& X) {
        return SystemState{phi_rhs(p, t, X[0])};
    };
    StepHook sym = [](SystemState& s) { symmetrize_block(s, 0); };
    auto path = integrate_system(sys, {p.H + p.Hbar}, OdeDirection::Backward, p.grid,
                                 kBlowUpNorm, sym);
    std::vector<MatrixXd> out;
    out.reserve(path.size());
    for (auto& s : path) out.push_back(std::move(s[0]));
    return out;
}

std::vector<Eigen::VectorXd> solve_psi(const MFLQProblem& p, const ReducedCost& rc,
                                       const std::vector<Eigen::MatrixXd>& Phi) {
    // Co-integrate Phi and chi_0^t backward so the RK4 half-steps see exact values.
    SystemRhs sys = [&p](double t, const SystemState& X) {
        const MatrixXd& Psi = X[0];
        const MatrixXd& Ph = X[1];
        const MatrixXd& C = X[2];
        return SystemState{psi_rhs(p, t, Ph, Psi.col(0), C), phi_rhs(p, t, Ph),
                           beta_sum(p, t) * C};
    };
    StepHook sym = [](SystemState& s) { symmetrize_block(s, 1); };
    Eigen::MatrixXd psiT = (rc.L + rc.Lbar);
    auto path = integrate_system(sys, {psiT, Phi.back(), rc.chi0.back()},
                                 OdeDirection::Backward, p.grid, kBlowUpNorm, sym);
    std::vector<VectorXd> out;
    out.reserve(path.size());
    for (auto& s : path) out.push_back(s[0].col(0));
    return out;
}

std::vector<Eigen::VectorXd> solve_mean_state(const MFLQProblem& p, const ReducedCost& rc,
                                              const std::vector<Eigen::MatrixXd>& Phi,
                                              const std::vector<Eigen::VectorXd>& Psi) {
    SystemRhs sys = [&p](double t, const SystemState& X) {
        const MatrixXd& Ex = X[0];
        const MatrixXd& Ph = X[1];
        const MatrixXd& Ps = X[2];
        const MatrixXd& C = X[3];
        MatrixXd Binv = binv_at(p, t);
        MatrixXd b = p.b.value(t, p.grid);
        MatrixXd DpD = p.D.value(t, p.grid) + p.Dbar.value(t, p.grid);
        MatrixXd E1 = p.a.value(t, p.grid) + p.abar.value(t, p.grid) - b * Binv * DpD;
        VectorXd G = reduced_G(p, t, C);
        MatrixXd bb = b * Binv * b.transpose();
        MatrixXd dEx = (E1 - bb * Ph) * Ex - bb * Ps - b * Binv * G +
                       p.bbar.value(t, p.grid).col(0);
        return SystemState{dEx, phi_rhs(p, t, Ph), psi_rhs(p, t, Ph, Ps.col(0), C),
                           beta_sum(p, t) * C};
    };
    StepHook sym = [](SystemState& s) { symmetrize_block(s, 1); };
    auto path = integrate_system(sys, {p.mu0, Phi.front(), Psi.front(), rc.chi0.front()},
                                 OdeDirection::Forward, p.grid, kBlowUpNorm, sym);
    std::vector<VectorXd> out;
    out.reserve(path.size());
    for (auto& s : path) out.push_back(s[0].col(0));
    return out;
}

std::vector<Eigen::VectorXd> mean_costate(const std::vector<Eigen::MatrixXd>& Phi,
                                          const std::vector<Eigen::VectorXd>& Psi,
                                          const std::vector<Eigen::VectorXd>& Ex) {
    std::vector<VectorXd> out(Ex.size());
    for (size_t i = 0; i < Ex.size(); ++i) out[i] = Phi[i] * Ex[i] + Psi[i];
    return out;
}

std::vector<Eigen::MatrixXd> solve_gamma(const MFLQProblem& p) {
    SystemRhs sys = [&p](double t, const SystemState& X) {
        return SystemState{gamma_rhs(p, t, X[0])};
    };
    StepHook sym = [](SystemState& s) { symmetrize_block(s, 0); };
    auto path = integrate_system(sys, {p.H}, OdeDirection::Backward, p.grid, kBlowUpNorm, sym);
    std::vector<MatrixXd> out;
    out.reserve(path.size());
    for (auto& s : path) out.push_back(std::move(s[0]));
    return out;
}

std::vector<Eigen::VectorXd> solve_lambda(const MFLQProblem& p, const ReducedCost& rc,
                                          const RiccatiBundle& partial) {
    // State: [Lambda, Gamma, Ex, Ep, chi0]; the mean pair is re-integrated backward
    // from its terminal values so theta1/theta2 are exact at RK4 interior times.
    SystemRhs sys = [&p](double t, const SystemState& X) {
        const MatrixXd& L = X[0];
        const MatrixXd& Gm = X[1];
        VectorXd Ex = X[2].col(0), Ep = X[3].col(0);
        const MatrixXd& C = X[4];
        MatrixXd Binv = binv_at(p, t);
        MatrixXd b = p.b.value(t, p.grid);
        MatrixXd D = p.D.value(t, p.grid);
        VectorXd th1, th2, dEx, dEp;
        theta_at(p, t, Ex, Ep, C, th1, th2);
        mean_system_rhs(p, t, Ex, Ep, C, dEx, dEp);
        MatrixXd dL = -((p.a.value(t, p.grid).transpose() -
                         D.transpose() * Binv * b.transpose() -
                         Gm * b * Binv * b.transpose()) * L.col(0) + Gm * th1 + th2);
        return SystemState{dL, gamma_rhs(p, t, Gm), dEx, dEp, beta_sum(p, t) * C};
    };
    StepHook sym = [](SystemState& s) { symmetrize_block(s, 1); };
    Eigen::MatrixXd lamT = p.Hbar * partial.Ex.back() + rc.L + rc.Lbar;
    auto path = integrate_system(
        sys, {lamT, partial.Gamma.back(), partial.Ex.back(), partial.Ep.back(), rc.chi0.back()},
        OdeDirection::Backward, p.grid, kBlowUpNorm, sym);
    std::vector<VectorXd> out;
    out.reserve(path.size());
    for (auto& s : path) out.push_back(s[0].col(0));
    return out;
}

RiccatiBundle solve_bundle(const MFLQProblem& p, const ReducedCost& rc) {
    RiccatiBundle b;
    b.grid = p.grid;
    b.Sigma = solve_sigma(p);
    b.Phi = solve_phi(p, rc);
    b.Psi = solve_psi(p, rc, b.Phi);
    b.Ex = solve_mean_state(p, rc, b.Phi, b.Psi);
    b.Ep = mean_costate(b.Phi, b.Psi, b.Ex);
    b.Gamma = solve_gamma(p);
    b.Lambda = solve_lambda(p, rc, b);

    // Gated deterministic adjoint k' = (beta+betabar)^T k, k_0 = -N.
    MatrixRhs krhs = [&p](double t, const MatrixXd& K) {
        return (beta_sum(p, t).transpose() * K).eval();
    };
    auto kp = integrate_matrix_ode(krhs, -p.N, OdeDirection::Forward, p.grid);
    b.k_det.reserve(kp.size());
    for (auto& s : kp) b.k_det.push_back(s.col(0));

    const int K = p.grid.knots();
    b.theta1.resize(static_cast<size_t>(K));
    b.theta2.resize(static_cast<size_t>(K));
    for (int i = 0; i < K; ++i) {
        VectorXd th1, th2;
        theta_at(p, p.grid.t(i), b.Ex[static_cast<size_t>(i)], b.Ep[static_cast<size_t>(i)],
                 rc.chi0[static_cast<size_t>(i)], th1, th2);
        b.theta1[static_cast<size_t>(i)] = th1;
        b.theta2[static_cast<size_t>(i)] = th2;
    }
    return b;
}

} // namespace mflqg
