#include "mflqg/simulate.hpp"

#include <Eigen/Eigenvalues>
#include <atomic>
#include <cmath>
#include <cstdlib>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mflqg {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

int resolve_workers(int requested) {
#ifdef _OPENMP
    int hw = omp_get_max_threads();
#else
    int hw = 1;
#endif
    if (requested > 0) return std::min(requested, hw);
    if (const char* env = std::getenv("MFLQG_WORKERS")) {
        int w = std::atoi(env);
        if (w > 0) return std::min(w, hw);
    }
    return hw;
}

// Immutable per-ensemble tables derived from Sigma.
struct StepTables {
    std::vector<MatrixXd> hinv;   // rt x rt
    std::vector<MatrixXd> gainK;  // n x rt : Sigma f^T hinv^T hinv
    std::vector<MatrixXd> sfh;    // n x rt : Sigma f^T hinv^T
    MatrixXd sigma0_sqrt;
    bool sigma0_zero = true;
};

StepTables make_tables(const MFLQProblem& p, const std::vector<MatrixXd>& Sigma) {
    StepTables t;
    const int K = p.grid.knots();
    t.hinv.resize(static_cast<size_t>(K));
    t.gainK.resize(static_cast<size_t>(K));
    t.sfh.resize(static_cast<size_t>(K));
    for (int i = 0; i < K; ++i) {
        size_t si = static_cast<size_t>(i);
        t.hinv[si] = p.h.at_knot(i).inverse();
        t.sfh[si] = Sigma[si] * p.f.at_knot(i).transpose() * t.hinv[si].transpose();
        t.gainK[si] = t.sfh[si] * t.hinv[si];
    }
    if (p.sigma0.cwiseAbs().maxCoeff() <= 0.0) {
        t.sigma0_zero = true;
        t.sigma0_sqrt = MatrixXd::Zero(p.n, p.n);
    } else {
        t.sigma0_zero = false;
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(p.sigma0);
        VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
        t.sigma0_sqrt = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
    }
    return t;
}

struct CostTables {
    const MFLQProblem* p = nullptr;
    const ReducedCost* rc = nullptr;
    const std::vector<VectorXd>* Ex = nullptr;

    double knot(int i, const VectorXd& x, const VectorXd& u, VectorXd& tn, VectorXd& tk) const {
        size_t si = static_cast<size_t>(i);
        const VectorXd& ex = (*Ex)[si];
        double v = 0.0;
        tn.noalias() = p->A.at_knot(i) * x;
        v += x.dot(tn);
        tn.noalias() = p->Abar.at_knot(i) * ex;
        v += ex.dot(tn);
        tk.noalias() = p->B.at_knot(i) * u;
        v += u.dot(tk);
        tk.noalias() = p->D.at_knot(i) * x;
        v += 2.0 * u.dot(tk);
        tk.noalias() = p->Dbar.at_knot(i) * ex;
        v += 2.0 * u.dot(tk);
        v += 2.0 * rc->F[si].dot(x) + 2.0 * rc->Fbar[si].dot(ex) + 2.0 * rc->G[si].dot(u);
        return 0.5 * v;
    }

    double terminal(const VectorXd& xT) const {
        const VectorXd& ex = Ex->back();
        return 0.5 * (xT.dot(p->H * xT) + ex.dot(p->Hbar * ex) + 2.0 * rc->L.dot(xT) +
                      2.0 * rc->Lbar.dot(ex)) +
               rc->J0;
    }
};

double trapz_w(int i, const TimeGrid& g) {
    return (i == 0 || i == g.step_count) ? 0.5 * g.step : g.step;
}

// Workspace for one coupled truth/observation/filter loop.
struct LoopState {
    VectorXd x, xhat, Y, u, dY, pred, innov, dwbar, tn, tk, trt;
    void init(int n, int k, int rt) {
        x.setZero(n); xhat.setZero(n); Y.setZero(rt); u.setZero(k);
        dY.setZero(rt); pred.setZero(rt); innov.setZero(rt); dwbar.setZero(rt);
        tn.setZero(n); tk.setZero(k); trt.setZero(rt);
    }
};

struct EnsembleCtx {
    const MFLQProblem* p = nullptr;
    const std::vector<VectorXd>* Ex = nullptr;  // mean injected into the dynamics
    const StepTables* tables = nullptr;
    const FeedbackLaw* law = nullptr;
    const CostTables* cost = nullptr;  // may be null
    NoiseGen gen;
    bool fresh_innovation = false;
    std::vector<int> marks;

    // optional additive perturbation (baseline co-run on the same noise)
    const Perturbation* pert = nullptr;
    double eps = 0.0;
    const std::vector<VectorXd>* Ex_base = nullptr;  // baseline mean
    const CostTables* cost_base = nullptr;
};

void draw_initial_state(const EnsembleCtx& c, uint64_t path, VectorXd& x, VectorXd& scratch) {
    const MFLQProblem& p = *c.p;
    x = p.mu0;
    if (!c.tables->sigma0_zero) {
        for (int j = 0; j < p.n; ++j)
            scratch(j) = c.gen.normal(path, kInitStep, static_cast<uint32_t>(j));
        x.noalias() += c.tables->sigma0_sqrt * scratch;
    }
}

// Advance (x, Y, xhat) one Euler step with control u already in st.u.
// dW/dWt must hold the scaled increments for step i.
void advance(const EnsembleCtx& c, int i, LoopState& st, const VectorXd& ex,
             const VectorXd& dW, const VectorXd& dWt, const VectorXd* fresh) {
    const MFLQProblem& p = *c.p;
    const double dt = p.grid.step;
    size_t si = static_cast<size_t>(i);

    // observation increment from the true state
    st.dY.noalias() = p.f.at_knot(i) * st.x;
    st.dY.noalias() += p.fbar.at_knot(i) * ex;
    st.dY += p.g.at_knot(i).col(0);
    st.dY *= dt;
    st.dY.noalias() += p.h.at_knot(i) * dWt;

    // innovation against the filter prediction
    st.pred.noalias() = p.f.at_knot(i) * st.xhat;
    st.pred.noalias() += p.fbar.at_knot(i) * ex;
    st.pred += p.g.at_knot(i).col(0);
    st.innov = st.dY - dt * st.pred;
    st.dwbar.noalias() = c.tables->hinv[si] * st.innov;

    // filter update (innovation-driven, or fresh-noise distribution mode)
    st.tn.noalias() = p.a.at_knot(i) * st.xhat;
    st.tn.noalias() += p.abar.at_knot(i) * ex;
    st.tn.noalias() += p.b.at_knot(i) * st.u;
    st.tn += p.bbar.at_knot(i).col(0);
    st.xhat += dt * st.tn;
    if (fresh) {
        st.xhat.noalias() += c.tables->sfh[si] * (*fresh);
        st.dwbar = *fresh;  // the driving innovation in this mode
    } else {
        st.xhat.noalias() += c.tables->gainK[si] * st.innov;
    }

    // truth update
    st.tn.noalias() = p.a.at_knot(i) * st.x;
    st.tn.noalias() += p.abar.at_knot(i) * ex;
    st.tn.noalias() += p.b.at_knot(i) * st.u;
    st.tn += p.bbar.at_knot(i).col(0);
    st.x += dt * st.tn;
    st.x.noalias() += p.c.at_knot(i) * dW;
    st.Y += st.dY;
}

void control_at(const EnsembleCtx& c, int i, const LoopState& st, const VectorXd& ex,
                VectorXd& u) {
    size_t si = static_cast<size_t>(i);
    u.noalias() = c.law->gain_filter[si] * st.xhat;
    u.noalias() += c.law->gain_mean[si] * ex;
    u += c.law->offset[si];
}

// One complete path. When c.pert is set the unperturbed loop co-runs on the
// same increments and its cost goes to out.J_base.
void run_path(const EnsembleCtx& c, uint64_t path, PathSummary& out, double* xknots,
              double* xhatknots, PathRecord* rec) {
    const MFLQProblem& p = *c.p;
    const int N = p.grid.step_count;
    const double sdt = std::sqrt(p.grid.step);
    const bool pert = c.pert != nullptr;

    LoopState st, base;
    st.init(p.n, p.k, p.rt);
    if (pert) base.init(p.n, p.k, p.rt);
    VectorXd dW(p.r), dWt(p.rt), freshv(p.rt), vdir(p.k), scratch(p.n);

    draw_initial_state(c, path, st.x, scratch);
    st.xhat = p.mu0;
    if (pert) { base.x = st.x; base.xhat = p.mu0; }

    out.wbar_T = VectorXd::Zero(p.rt);
    out.wbar_qv = 0.0;
    out.J = 0.0;
    out.J_base = 0.0;
    out.err2.assign(c.marks.size(), 0.0);

    if (rec) {
        rec->x.resize(N + 1, p.n); rec->Y.resize(N + 1, p.rt);
        rec->xhat.resize(N + 1, p.n); rec->u.resize(N + 1, p.k);
        rec->wbar.resize(N, p.rt);
    }

    auto record_knot = [&](int i) {
        if (xknots)
            for (int j = 0; j < p.n; ++j) {
                xknots[i * p.n + j] = st.x(j);
                xhatknots[i * p.n + j] = st.xhat(j);
            }
        if (rec) {
            rec->x.row(i) = st.x.transpose();
            rec->Y.row(i) = st.Y.transpose();
            rec->xhat.row(i) = st.xhat.transpose();
        }
        for (size_t mk = 0; mk < c.marks.size(); ++mk)
            if (c.marks[mk] == i) out.err2[mk] = (st.x - st.xhat).squaredNorm();
    };

    record_knot(0);
    for (int i = 0; i < N; ++i) {
        size_t si = static_cast<size_t>(i);
        const VectorXd& ex = (*c.Ex)[si];
        if (!pert) {
            control_at(c, i, st, ex, st.u);
        } else {
            const VectorXd& exb = (*c.Ex_base)[si];
            control_at(c, i, base, exb, base.u);
            control_at(c, i, st, ex, st.u);
            switch (c.pert->kind) {
                case Perturbation::Kind::TimeFunction: vdir = c.pert->v[si]; break;
                case Perturbation::Kind::FilterFeedback:
                    vdir.noalias() = c.pert->W * base.xhat; break;
                case Perturbation::Kind::FilterDeviation:
                    vdir.noalias() = c.pert->W * (base.xhat - exb); break;
            }
            st.u += c.eps * vdir;
        }
        if (i == 0) out.u0 = st.u;
        if (rec) rec->u.row(i) = st.u.transpose();
        if (c.cost) out.J += trapz_w(i, p.grid) * c.cost->knot(i, st.x, st.u, st.tn, st.tk);
        if (pert && c.cost_base)
            out.J_base += trapz_w(i, p.grid) * c.cost_base->knot(i, base.x, base.u, st.tn, st.tk);

        for (int j = 0; j < p.r; ++j)
            dW(j) = sdt * c.gen.normal(path, static_cast<uint32_t>(i), static_cast<uint32_t>(j));
        for (int j = 0; j < p.rt; ++j)
            dWt(j) = sdt * c.gen.normal(path, static_cast<uint32_t>(i),
                                        static_cast<uint32_t>(p.r + j));
        const VectorXd* fresh = nullptr;
        if (c.fresh_innovation) {
            for (int j = 0; j < p.rt; ++j)
                freshv(j) = sdt * c.gen.normal(path, static_cast<uint32_t>(i),
                                               static_cast<uint32_t>(p.r + p.rt + j));
            fresh = &freshv;
        }

        advance(c, i, st, ex, dW, dWt, fresh);
        if (pert) advance(c, i, base, (*c.Ex_base)[si], dW, dWt, fresh);

        out.wbar_T += st.dwbar;
        out.wbar_qv += st.dwbar.squaredNorm();
        if (rec) rec->wbar.row(i) = st.dwbar.transpose();
        record_knot(i + 1);
        if (!st.x.allFinite() || !st.xhat.allFinite())
            throw SimulationError("non-finite state in path " + std::to_string(path), i + 1);
    }

    // terminal control closes the quadrature
    {
        const VectorXd& exN = c.Ex->back();
        if (!pert) {
            control_at(c, N, st, exN, st.u);
        } else {
            control_at(c, N, base, c.Ex_base->back(), base.u);
            control_at(c, N, st, exN, st.u);
            switch (c.pert->kind) {
                case Perturbation::Kind::TimeFunction: vdir = c.pert->v[static_cast<size_t>(N)]; break;
                case Perturbation::Kind::FilterFeedback:
                    vdir.noalias() = c.pert->W * base.xhat; break;
                case Perturbation::Kind::FilterDeviation:
                    vdir.noalias() = c.pert->W * (base.xhat - c.Ex_base->back()); break;
            }
            st.u += c.eps * vdir;
        }
        if (rec) rec->u.row(N) = st.u.transpose();
        if (c.cost) {
            out.J += trapz_w(N, p.grid) * c.cost->knot(N, st.x, st.u, st.tn, st.tk);
            out.J += c.cost->terminal(st.x);
        }
        if (pert && c.cost_base) {
            out.J_base += trapz_w(N, p.grid) * c.cost_base->knot(N, base.x, base.u, st.tn, st.tk);
            out.J_base += c.cost_base->terminal(base.x);
        }
    }
    out.x_T = st.x;
    out.xhat_T = st.xhat;
}

// Chunked driver with path-ascending deterministic reduction. The serial
// reference path (parallel = false) is a plain loop over the same program.
PathEnsemble run_ensemble(const EnsembleCtx& c, const SimOptions& opts) {
    const MFLQProblem& p = *c.p;
    const int K = p.grid.knots();
    const long long P = opts.paths;
    if (P < 1) throw std::invalid_argument("path count must be >= 1");

    PathEnsemble ens;
    ens.grid = p.grid;
    ens.seed = opts.seed;
    ens.path_count = P;
    ens.mark_knots = c.marks;
    ens.summaries.resize(static_cast<size_t>(P));
    if (opts.store_full) ens.records.resize(static_cast<size_t>(P));

    KnotStats& ks = ens.stats;
    ks.mean_x = MatrixXd::Zero(K, p.n); ks.var_x = MatrixXd::Zero(K, p.n);
    ks.mean_xhat = MatrixXd::Zero(K, p.n); ks.var_xhat = MatrixXd::Zero(K, p.n);
    ks.mean_diff = MatrixXd::Zero(K, p.n); ks.var_diff = MatrixXd::Zero(K, p.n);

    const long long chunk = 512;
    std::vector<double> xbuf(static_cast<size_t>(chunk) * K * p.n);
    std::vector<double> xhbuf(static_cast<size_t>(chunk) * K * p.n);

    int workers = resolve_workers(opts.workers);
    std::string error_msg;
    std::atomic<bool> failed{false};

    long long folded = 0;
    for (long long start = 0; start < P; start += chunk) {
        long long count = std::min(chunk, P - start);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(workers) if (opts.parallel && workers > 1)
#endif
        for (long long q = 0; q < count; ++q) {
            if (failed.load(std::memory_order_relaxed)) continue;
            uint64_t path = static_cast<uint64_t>(opts.path_offset + start + q);
            try {
                run_path(c, path, ens.summaries[static_cast<size_t>(start + q)],
                         &xbuf[static_cast<size_t>(q) * K * p.n],
                         &xhbuf[static_cast<size_t>(q) * K * p.n],
                         opts.store_full ? &ens.records[static_cast<size_t>(start + q)]
                                         : nullptr);
            } catch (const std::exception& e) {
#ifdef _OPENMP
#pragma omp critical
#endif
                {
                    failed.store(true, std::memory_order_relaxed);
                    if (error_msg.empty()) error_msg = e.what();
                }
            }
        }
        if (failed) throw SimulationError(error_msg, -1);

        // Welford fold in ascending path order: bit-stable for any worker count.
        for (long long q = 0; q < count; ++q) {
            ++folded;
            double inv = 1.0 / static_cast<double>(folded);
            for (int i = 0; i < K; ++i)
                for (int j = 0; j < p.n; ++j) {
                    size_t idx = static_cast<size_t>(q) * K * p.n +
                                 static_cast<size_t>(i) * p.n + static_cast<size_t>(j);
                    double vx = xbuf[idx], vh = xhbuf[idx], vd = vh - vx;
                    double dx = vx - ks.mean_x(i, j);
                    ks.mean_x(i, j) += dx * inv;
                    ks.var_x(i, j) += dx * (vx - ks.mean_x(i, j));
                    double dh = vh - ks.mean_xhat(i, j);
                    ks.mean_xhat(i, j) += dh * inv;
                    ks.var_xhat(i, j) += dh * (vh - ks.mean_xhat(i, j));
                    double dd = vd - ks.mean_diff(i, j);
                    ks.mean_diff(i, j) += dd * inv;
                    ks.var_diff(i, j) += dd * (vd - ks.mean_diff(i, j));
                }
        }
    }
    double denom = (P > 1) ? static_cast<double>(P - 1) : 1.0;
    ks.var_x /= denom;
    ks.var_xhat /= denom;
    ks.var_diff /= denom;
    return ens;
}

std::vector<VectorXd> perturbed_mean(const MFLQProblem& p, const FeedbackLaw& law,
                                     const std::vector<VectorXd>& Ex, const Perturbation& dir,
                                     double eps) {
    // Discrete linear mean response xi_{i+1} = xi_i + dt[(a+abar+b(gf+gm))xi_i + b Ev_i];
    // keeps the perturbed ensemble mean-field consistent at the Euler level.
    const int N = p.grid.step_count;
    const double dt = p.grid.step;
    std::vector<VectorXd> out(static_cast<size_t>(N + 1));
    VectorXd xi = VectorXd::Zero(p.n);
    out[0] = Ex[0];
    for (int i = 0; i < N; ++i) {
        size_t si = static_cast<size_t>(i);
        VectorXd ev = dir.mean_at(i, Ex);
        VectorXd dxi = (p.a.at_knot(i) + p.abar.at_knot(i)) * xi +
                       p.b.at_knot(i) * ((law.gain_filter[si] + law.gain_mean[si]) * xi + ev);
        xi += dt * dxi;
        out[si + 1] = Ex[si + 1] + eps * xi;
    }
    // knot 0 keeps Ex[0] exactly (xi_0 = 0)
    return out;
}

} // namespace

PathEnsemble simulate_closed_loop(const MFLQProblem& p, const FeedbackLaw& law,
                                  const RiccatiBundle& bundle, const ReducedCost* rc,
                                  const SimOptions& opts) {
    StepTables tables = make_tables(p, bundle.Sigma);
    CostTables cost;
    EnsembleCtx c;
    c.p = &p;
    c.Ex = &bundle.Ex;
    c.tables = &tables;
    c.law = &law;
    c.gen = NoiseGen{opts.seed};
    c.fresh_innovation = opts.fresh_innovation;
    c.marks = opts.mark_knots;
    if (rc) {
        cost = CostTables{&p, rc, &bundle.Ex};
        c.cost = &cost;
    }
    return run_ensemble(c, opts);
}

PathEnsemble simulate_perturbed(const MFLQProblem& p, const FeedbackLaw& law,
                                const RiccatiBundle& bundle, const ReducedCost& rc,
                                const Perturbation& dir, double eps, const SimOptions& opts) {
    StepTables tables = make_tables(p, bundle.Sigma);
    std::vector<VectorXd> ExP = perturbed_mean(p, law, bundle.Ex, dir, eps);
    CostTables cost{&p, &rc, &ExP};
    CostTables cost_base{&p, &rc, &bundle.Ex};
    EnsembleCtx c;
    c.p = &p;
    c.Ex = &ExP;
    c.tables = &tables;
    c.law = &law;
    c.gen = NoiseGen{opts.seed};
    c.fresh_innovation = opts.fresh_innovation;
    c.marks = opts.mark_knots;
    c.cost = &cost;
    c.pert = &dir;
    c.eps = eps;
    c.Ex_base = &bundle.Ex;
    c.cost_base = &cost_base;
    return run_ensemble(c, opts);
}

PathRecord simulate_truth(const MFLQProblem& p, const ControlSource& control,
                          const NoiseSlab& slab, const std::vector<VectorXd>& Ex,
                          const std::vector<MatrixXd>& Sigma, const VectorXd* x0_override) {
    StepTables tables = make_tables(p, Sigma);
    const int N = p.grid.step_count;
    PathRecord rec;
    rec.x.resize(N + 1, p.n); rec.Y.resize(N + 1, p.rt);
    rec.xhat.resize(N + 1, p.n); rec.u.resize(N + 1, p.k);
    rec.wbar.resize(N, p.rt);

    LoopState st;
    st.init(p.n, p.k, p.rt);
    if (x0_override) {
        st.x = *x0_override;
    } else {
        NoiseGen gen{slab.seed};
        VectorXd scratch(p.n);
        st.x = p.mu0;
        if (!tables.sigma0_zero) {
            for (int j = 0; j < p.n; ++j)
                scratch(j) = gen.normal(slab.path_id, kInitStep, static_cast<uint32_t>(j));
            st.x.noalias() += tables.sigma0_sqrt * scratch;
        }
    }
    st.xhat = p.mu0;

    EnsembleCtx c;  // only the pieces advance() needs
    c.p = &p;
    c.Ex = &Ex;
    c.tables = &tables;

    rec.x.row(0) = st.x.transpose();
    rec.Y.row(0) = st.Y.transpose();
    rec.xhat.row(0) = st.xhat.transpose();
    for (int i = 0; i < N; ++i) {
        control(i, st.xhat, st.u);
        rec.u.row(i) = st.u.transpose();
        VectorXd dW = slab.dW.row(i).transpose();
        VectorXd dWt = slab.dWt.row(i).transpose();
        advance(c, i, st, Ex[static_cast<size_t>(i)], dW, dWt, nullptr);
        if (!st.x.allFinite()) throw SimulationError("non-finite state", i + 1);
        rec.x.row(i + 1) = st.x.transpose();
        rec.Y.row(i + 1) = st.Y.transpose();
        rec.xhat.row(i + 1) = st.xhat.transpose();
        rec.wbar.row(i) = st.dwbar.transpose();
    }
    control(N, st.xhat, st.u);
    rec.u.row(N) = st.u.transpose();
    return rec;
}

FilterOutput kalman_filter(const MFLQProblem& p, const std::vector<MatrixXd>& Sigma,
                           const Eigen::MatrixXd& Y, const Eigen::MatrixXd& u,
                           const std::vector<VectorXd>& Ex) {
    if (Y.rows() != p.grid.knots())
        throw std::invalid_argument("kalman_filter: observation path does not match the grid");
    StepTables tables = make_tables(p, Sigma);
    const int N = p.grid.step_count;
    const double dt = p.grid.step;
    FilterOutput out;
    out.xhat.resize(N + 1, p.n);
    out.wbar.resize(N, p.rt);
    VectorXd xhat = p.mu0, pred(p.rt), innov(p.rt), drift(p.n);
    out.xhat.row(0) = xhat.transpose();
    for (int i = 0; i < N; ++i) {
        size_t si = static_cast<size_t>(i);
        const VectorXd& ex = Ex[si];
        pred.noalias() = p.f.at_knot(i) * xhat;
        pred.noalias() += p.fbar.at_knot(i) * ex;
        pred += p.g.at_knot(i).col(0);
        innov = (Y.row(i + 1) - Y.row(i)).transpose() - dt * pred;
        drift.noalias() = p.a.at_knot(i) * xhat;
        drift.noalias() += p.abar.at_knot(i) * ex;
        drift.noalias() += p.b.at_knot(i) * u.row(i).transpose();
        drift += p.bbar.at_knot(i).col(0);
        xhat += dt * drift;
        xhat.noalias() += tables.gainK[si] * innov;
        out.xhat.row(i + 1) = xhat.transpose();
        out.wbar.row(i) = (tables.hinv[si] * innov).transpose();
    }
    return out;
}

Eigen::MatrixXd simulate_k(const MFLQProblem& p, const NoiseSlab& slab, const VectorXd& y0) {
    const int N = p.grid.step_count;
    const double dt = p.grid.step;

    // deterministic mean: Ek' = (beta+betabar)^T Ek, Ek_0 = -M y0 - N
    VectorXd k0 = -(p.M * y0) - p.N;
    MatrixRhs rhs = [&p](double t, const MatrixXd& K) {
        return ((p.beta.value(t, p.grid) + p.betabar.value(t, p.grid)).transpose() * K).eval();
    };
    auto Ek = integrate_matrix_ode(rhs, k0, OdeDirection::Forward, p.grid);

    MatrixXd out(N + 1, p.m);
    VectorXd k = k0, k_old(p.m), dk(p.m);
    out.row(0) = k.transpose();
    for (int i = 0; i < N; ++i) {
        size_t si = static_cast<size_t>(i);
        k_old = k;
        dk.noalias() = p.beta.at_knot(i).transpose() * k_old;
        dk.noalias() += p.betabar.at_knot(i).transpose() * Ek[si].col(0);
        k += dt * dk;
        for (int j = 0; j < p.r; ++j) {
            double w = slab.dW(i, j);
            k.noalias() += w * (p.gamma[static_cast<size_t>(j)].at_knot(i).transpose() * k_old);
            k.noalias() += w * (p.gammabar[static_cast<size_t>(j)].at_knot(i).transpose() * Ek[si].col(0));
        }
        for (int j = 0; j < p.rt; ++j) {
            double w = slab.dWt(i, j);
            k.noalias() += w * (p.gammatilde[static_cast<size_t>(j)].at_knot(i).transpose() * k_old);
            k.noalias() += w * (p.gammabartilde[static_cast<size_t>(j)].at_knot(i).transpose() * Ek[si].col(0));
        }
        if (!k.allFinite()) throw SimulationError("non-finite adjoint state", i + 1);
        out.row(i + 1) = k.transpose();
    }
    return out;
}

EtaEstimate simulate_eta(const MFLQProblem& p, const SimOptions& opts,
                         const std::vector<VectorXd>& open_loop_control,
                         const std::vector<VectorXd>& Ex) {
    auto vanish = [](const CoefficientPath& cp) { return cp.max_abs() <= 1e-14; };
    auto vanish_fam = [&](const std::vector<CoefficientPath>& fam) {
        for (const auto& cp : fam)
            if (!vanish(cp)) return false;
        return true;
    };
    if (!vanish(p.alpha) || !vanish(p.alphabar) || !vanish(p.beta) || !vanish(p.betabar) ||
        !vanish_fam(p.gammabar) || !vanish_fam(p.gammabartilde))
        throw ValidationError(
            "eta representation requires alpha = alphabar = beta = betabar = gammabar = "
            "gammabartilde = 0");

    std::vector<MatrixXd> SigmaZ(static_cast<size_t>(p.grid.knots()),
                                 MatrixXd::Zero(p.n, p.n));
    StepTables tables = make_tables(p, SigmaZ);
    const int N = p.grid.step_count;
    const double dt = p.grid.step;
    const double sdt = std::sqrt(dt);
    NoiseGen gen{opts.seed};

    const long long P = opts.paths;
    std::vector<double> vals(static_cast<size_t>(P));
    MatrixXd etaT(P, p.m);

    EnsembleCtx c;
    c.p = &p;
    c.Ex = &Ex;
    c.tables = &tables;

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(resolve_workers(opts.workers)) if (opts.parallel)
#endif
    for (long long q = 0; q < P; ++q) {
        uint64_t path = static_cast<uint64_t>(q);
        LoopState st;
        st.init(p.n, p.k, p.rt);
        VectorXd scratch(p.n), dW(p.r), dWt(p.rt), eta = VectorXd::Ones(p.m), deta(p.m);
        draw_initial_state(c, path, st.x, scratch);
        st.xhat = p.mu0;
        double run = 0.0;
        for (int i = 0; i <= N; ++i) {
            size_t si = static_cast<size_t>(i);
            st.u = open_loop_control[si];
            // running <eta, psi v + psibar>
            VectorXd gen_v = p.psi.at_knot(i) * st.u + p.psibar.at_knot(i).col(0);
            run += trapz_w(i, p.grid) * eta.dot(gen_v);
            if (i == N) break;
            for (int j = 0; j < p.r; ++j)
                dW(j) = sdt * gen.normal(path, static_cast<uint32_t>(i), static_cast<uint32_t>(j));
            for (int j = 0; j < p.rt; ++j)
                dWt(j) = sdt * gen.normal(path, static_cast<uint32_t>(i),
                                          static_cast<uint32_t>(p.r + j));
            deta.setZero();
            for (int j = 0; j < p.r; ++j)
                deta.noalias() += dW(j) * (p.gamma[static_cast<size_t>(j)].at_knot(i) * eta);
            for (int j = 0; j < p.rt; ++j)
                deta.noalias() += dWt(j) * (p.gammatilde[static_cast<size_t>(j)].at_knot(i) * eta);
            eta += deta;
            advance(c, i, st, Ex[si], dW, dWt, nullptr);
        }
        double terminal = eta.dot(p.rho * st.x + p.rhobar * Ex.back());
        vals[static_cast<size_t>(q)] = terminal + run;
        etaT.row(q) = eta.transpose();
    }

    EtaEstimate est;
    est.paths = P;
    double mean = 0.0;
    for (long long q = 0; q < P; ++q) mean += vals[static_cast<size_t>(q)];
    mean /= static_cast<double>(P);
    double ss = 0.0;
    for (long long q = 0; q < P; ++q) {
        double d = vals[static_cast<size_t>(q)] - mean;
        ss += d * d;
    }
    est.y0 = mean;
    est.stderr_ = (P > 1) ? std::sqrt(ss / (static_cast<double>(P - 1) * static_cast<double>(P)))
                          : 0.0;
    est.eta_T_mean = etaT.colwise().mean().transpose();
    est.eta_T_se.resize(p.m);
    for (int j = 0; j < p.m; ++j) {
        double v = (etaT.col(j).array() - est.eta_T_mean(j)).square().sum() /
                   std::max<double>(1, P - 1);
        est.eta_T_se(j) = std::sqrt(v / static_cast<double>(P));
    }
    return est;
}

InnovationStats innovation_diagnostics(const PathEnsemble& ens) {
    if (ens.summaries.empty()) throw std::invalid_argument("empty ensemble");
    const long long P = ens.path_count;
    const int rt = static_cast<int>(ens.summaries[0].wbar_T.size());
    InnovationStats st;
    st.mean = VectorXd::Zero(rt);
    st.mean_se = VectorXd::Zero(rt);
    st.variance = VectorXd::Zero(rt);
    st.var_se = VectorXd::Zero(rt);
    for (const auto& s : ens.summaries) st.mean += s.wbar_T;
    st.mean /= static_cast<double>(P);
    for (const auto& s : ens.summaries)
        st.variance += (s.wbar_T - st.mean).cwiseAbs2();
    st.variance /= static_cast<double>(std::max<long long>(1, P - 1));
    st.mean_se = (st.variance / static_cast<double>(P)).cwiseSqrt();
    // standard error of the sample variance via the fourth central moment
    VectorXd m4 = VectorXd::Zero(rt);
    for (const auto& s : ens.summaries) m4 += (s.wbar_T - st.mean).cwiseAbs2().cwiseAbs2();
    m4 /= static_cast<double>(P);
    for (int j = 0; j < rt; ++j) {
        double v = st.variance(j);
        double var_of_var = (m4(j) - v * v * (static_cast<double>(P) - 3.0) /
                                         (static_cast<double>(P) - 1.0)) /
                            static_cast<double>(P);
        st.var_se(j) = std::sqrt(std::max(0.0, var_of_var));
    }
    double qm = 0.0, qss = 0.0;
    for (const auto& s : ens.summaries) qm += s.wbar_qv;
    qm /= static_cast<double>(P);
    for (const auto& s : ens.summaries) qss += (s.wbar_qv - qm) * (s.wbar_qv - qm);
    st.qv_mean = qm;
    st.qv_se = std::sqrt(qss / std::max<double>(1, P - 1) / static_cast<double>(P));
    return st;
}

double path_cost(const MFLQProblem& p, const ReducedCost& rc,
                 const std::vector<VectorXd>& Ex, const Eigen::MatrixXd& x,
                 const Eigen::MatrixXd& u) {
    CostTables ct{&p, &rc, &Ex};
    VectorXd tn(p.n), tk(p.k);
    double J = 0.0;
    for (int i = 0; i < p.grid.knots(); ++i)
        J += trapz_w(i, p.grid) * ct.knot(i, x.row(i).transpose(), u.row(i).transpose(), tn, tk);
    J += ct.terminal(x.row(p.grid.step_count).transpose());
    return J;
}

} // namespace mflqg
