#include "mflqg/problem.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace mflqg {

namespace {

constexpr double kSymTol = 1e-12;
constexpr double kGateTol = 1e-14;
constexpr double kBMinEig = 1e-10;

double min_eig_sym(const Eigen::MatrixXd& S) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (S + S.transpose()),
                                                      Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw ValidationError("eigenvalue solve failed");
    return es.eigenvalues().minCoeff();
}

double max_eig_sym(const Eigen::MatrixXd& S) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (S + S.transpose()),
                                                      Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw ValidationError("eigenvalue solve failed");
    return es.eigenvalues().maxCoeff();
}

double asym_norm(const Eigen::MatrixXd& S) {
    if (S.size() == 0) return 0.0;
    return (S - S.transpose()).cwiseAbs().maxCoeff();
}

} // namespace

MFLQProblem MFLQProblem::zero(int n, int m, int k, int r, int rt, const TimeGrid& grid,
                              Interp interp) {
    MFLQProblem p;
    p.n = n; p.m = m; p.k = k; p.r = r; p.rt = rt;
    p.grid = grid;
    p.mu0 = Eigen::VectorXd::Zero(n);
    p.sigma0 = Eigen::MatrixXd::Zero(n, n);
    auto zp = [&](int rows, int cols) { return CoefficientPath::zero(rows, cols, grid, interp); };
    p.a = zp(n, n); p.abar = zp(n, n); p.b = zp(n, k); p.bbar = zp(n, 1); p.c = zp(n, r);
    p.alpha = zp(m, n); p.alphabar = zp(m, n); p.beta = zp(m, m); p.betabar = zp(m, m);
    p.gamma.assign(static_cast<size_t>(r), zp(m, m));
    p.gammabar.assign(static_cast<size_t>(r), zp(m, m));
    p.gammatilde.assign(static_cast<size_t>(rt), zp(m, m));
    p.gammabartilde.assign(static_cast<size_t>(rt), zp(m, m));
    p.psi = zp(m, k); p.psibar = zp(m, 1);
    p.rho = Eigen::MatrixXd::Zero(m, n); p.rhobar = Eigen::MatrixXd::Zero(m, n);
    p.f = zp(rt, n); p.fbar = zp(rt, n); p.g = zp(rt, 1); p.h = zp(rt, rt);
    p.A = zp(n, n); p.Abar = zp(n, n); p.B = zp(k, k); p.D = zp(k, n); p.Dbar = zp(k, n);
    p.Ftilde = zp(n, 1); p.Fbartilde = zp(n, 1); p.Gtilde = zp(k, 1);
    p.H = Eigen::MatrixXd::Zero(n, n); p.Hbar = Eigen::MatrixXd::Zero(n, n);
    p.Ltilde = Eigen::VectorXd::Zero(n); p.Lbartilde = Eigen::VectorXd::Zero(n);
    p.M = Eigen::MatrixXd::Zero(m, m); p.N = Eigen::VectorXd::Zero(m);
    return p;
}

MFLQProblem MFLQProblem::with_grid(const TimeGrid& g2) const {
    MFLQProblem q = *this;
    q.grid = g2;
    auto resample = [&](const CoefficientPath& src) {
        CoefficientPath dst(src.rows(), src.cols(), g2, src.interp());
        for (int i = 0; i < g2.knots(); ++i) dst.at_knot(i) = src.value(g2.t(i), grid);
        return dst;
    };
    q.a = resample(a); q.abar = resample(abar); q.b = resample(b);
    q.bbar = resample(bbar); q.c = resample(c);
    q.alpha = resample(alpha); q.alphabar = resample(alphabar);
    q.beta = resample(beta); q.betabar = resample(betabar);
    for (size_t j = 0; j < gamma.size(); ++j) q.gamma[j] = resample(gamma[j]);
    for (size_t j = 0; j < gammabar.size(); ++j) q.gammabar[j] = resample(gammabar[j]);
    for (size_t j = 0; j < gammatilde.size(); ++j) q.gammatilde[j] = resample(gammatilde[j]);
    for (size_t j = 0; j < gammabartilde.size(); ++j) q.gammabartilde[j] = resample(gammabartilde[j]);
    q.psi = resample(psi); q.psibar = resample(psibar);
    q.f = resample(f); q.fbar = resample(fbar); q.g = resample(g); q.h = resample(h);
    q.A = resample(A); q.Abar = resample(Abar); q.B = resample(B);
    q.D = resample(D); q.Dbar = resample(Dbar);
    q.Ftilde = resample(Ftilde); q.Fbartilde = resample(Fbartilde); q.Gtilde = resample(Gtilde);
    return q;
}

AssumptionReport validate(const MFLQProblem& p) {
    AssumptionReport rep;
    rep.structure_ok = true;
    auto note = [&](const std::string& msg, bool ok) {
        if (!ok) {
            rep.structure_ok = false;
            rep.messages.push_back(msg);
        }
    };

    note("sigma0 not symmetric to 1e-12", asym_norm(p.sigma0) <= kSymTol);
    note("sigma0 not positive semidefinite", min_eig_sym(p.sigma0) >= -1e-10);
    note("H not symmetric to 1e-12", asym_norm(p.H) <= kSymTol);
    note("Hbar not symmetric to 1e-12", asym_norm(p.Hbar) <= kSymTol);
    note("M not symmetric to 1e-12", asym_norm(p.M) <= kSymTol);
    note("H not positive semidefinite", min_eig_sym(p.H) >= -1e-10);
    note("M not positive semidefinite", min_eig_sym(p.M) >= -1e-10);
    note("H+Hbar not positive semidefinite", min_eig_sym(p.H + p.Hbar) >= -1e-10);

    const int K = p.grid.knots();
    double a1 = std::numeric_limits<double>::infinity();
    double a2 = -std::numeric_limits<double>::infinity();
    double bmin = std::numeric_limits<double>::infinity();
    double hcond = 0.0;
    bool a_psd = true, aab_psd = true, sym_ok = true, h_ok = true;

    for (int i = 0; i < K; ++i) {
        const Eigen::MatrixXd& A = p.A.at_knot(i);
        const Eigen::MatrixXd& Ab = p.Abar.at_knot(i);
        const Eigen::MatrixXd& B = p.B.at_knot(i);
        const Eigen::MatrixXd& D = p.D.at_knot(i);
        const Eigen::MatrixXd& Db = p.Dbar.at_knot(i);
        sym_ok = sym_ok && asym_norm(A) <= kSymTol && asym_norm(Ab) <= kSymTol &&
                 asym_norm(B) <= kSymTol;

        double be = min_eig_sym(B);
        bmin = std::min(bmin, be);
        if (!(be > 0.0)) continue;  // remaining checks need B^-1

        Eigen::MatrixXd Binv = B.inverse();
        Eigen::MatrixXd DpD = D + Db;
        double m1 = min_eig_sym(A + Ab - DpD.transpose() * Binv * DpD);
        double m2 = max_eig_sym(D.transpose() * Binv * D - A);
        if (!std::isfinite(m1) || !std::isfinite(m2))
            throw ValidationError("non-finite eigenvalue at knot " + std::to_string(i));
        a1 = std::min(a1, m1);
        a2 = std::max(a2, m2);
        a_psd = a_psd && min_eig_sym(A) >= -1e-10;
        aab_psd = aab_psd && min_eig_sym(A + Ab) >= -1e-10;

        Eigen::JacobiSVD<Eigen::MatrixXd> svd(p.h.at_knot(i));
        double smin = svd.singularValues().minCoeff();
        double smax = svd.singularValues().maxCoeff();
        if (smin <= 0.0 || smax / smin > 1e12) {
            h_ok = false;
        } else {
            hcond = std::max(hcond, smax / smin);
        }
    }

    note("A(t) not symmetric / B(t) not symmetric at some knot", sym_ok);
    note("A(t) not positive semidefinite at some knot", a_psd);
    note("A(t)+Abar(t) not positive semidefinite at some knot", aab_psd);
    note("B(t) smallest eigenvalue below 1e-10", bmin >= kBMinEig);
    note("h(t) not invertible at some knot", h_ok);

    rep.a1_margin = std::isfinite(a1) ? a1 : std::numeric_limits<double>::quiet_NaN();
    rep.a2_constant = a2;
    rep.b_min_eig = bmin;
    rep.h_max_cond = hcond;
    rep.a1_ok = rep.a1_margin >= -1e-10;
    if (!rep.a1_ok) rep.messages.push_back("(A1) violated: a1_margin < -1e-10");
    rep.gate_ok = special_case_gate(p).accepted;
    return rep;
}

GateDecision special_case_gate(const MFLQProblem& p) {
    GateDecision d;
    auto gate_path_family = [&](const std::vector<CoefficientPath>& fam, const std::string& name) {
        for (const auto& cp : fam)
            if (cp.max_abs() > kGateTol) { d.violations.push_back(name); return; }
    };
    if (p.M.size() > 0 && p.M.cwiseAbs().maxCoeff() > kGateTol) d.violations.push_back("M");
    gate_path_family(p.gamma, "gamma");
    gate_path_family(p.gammabar, "gammabar");
    gate_path_family(p.gammatilde, "gammatilde");
    gate_path_family(p.gammabartilde, "gammabartilde");
    d.accepted = d.violations.empty();
    return d;
}

void require_synthesizable(const MFLQProblem& p) {
    AssumptionReport rep = validate(p);
    if (!rep.structure_ok) {
        std::string msg = "validation failed:";
        for (const auto& s : rep.messages) msg += " " + s + ";";
        throw ValidationError(msg);
    }
    GateDecision gate = special_case_gate(p);
    if (!gate.accepted) throw GateRejection(gate.violations);
}

} // namespace mflqg
