#include "mflqg/ode.hpp"

namespace mflqg {

namespace {

double state_max_norm(const SystemState& s) {
    double m = 0.0;
    for (const auto& x : s)
        if (x.size() > 0) m = std::max(m, x.cwiseAbs().maxCoeff());
    return m;
}

bool state_finite(const SystemState& s) {
    for (const auto& x : s)
        if (!x.allFinite()) return false;
    return true;
}

SystemState axpy(const SystemState& x, double a, const SystemState& y) {
    SystemState out = x;
    for (size_t i = 0; i < out.size(); ++i) out[i] += a * y[i];
    return out;
}

} // namespace

std::vector<SystemState> integrate_system(const SystemRhs& rhs, const SystemState& boundary,
                                          OdeDirection direction, const TimeGrid& grid,
                                          double blow_up_norm, const StepHook& hook) {
    const int N = grid.step_count;
    const double dt = grid.step;
    std::vector<SystemState> out(static_cast<size_t>(N + 1));

    const bool fwd = direction == OdeDirection::Forward;
    // Reversed-time substitution: Y(s) = X(T - s) solves Y' = -rhs(T - s, Y).
    auto eval = [&](double s, const SystemState& X) {
        if (fwd) return rhs(s, X);
        SystemState d = rhs(grid.horizon - s, X);
        for (auto& m : d) m = -m;
        return d;
    };

    SystemState X = boundary;
    out[fwd ? 0 : static_cast<size_t>(N)] = X;
    for (int step = 0; step < N; ++step) {
        double s = dt * step;
        SystemState k1 = eval(s, X);
        SystemState k2 = eval(s + 0.5 * dt, axpy(X, 0.5 * dt, k1));
        SystemState k3 = eval(s + 0.5 * dt, axpy(X, 0.5 * dt, k2));
        SystemState k4 = eval(s + dt, axpy(X, dt, k3));
        for (size_t i = 0; i < X.size(); ++i)
            X[i] += (dt / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        if (hook) hook(X);
        double t_here = fwd ? dt * (step + 1) : grid.horizon - dt * (step + 1);
        if (!state_finite(X) || state_max_norm(X) > blow_up_norm)
            throw BlowUpError(t_here, state_max_norm(X));
        out[static_cast<size_t>(fwd ? step + 1 : N - step - 1)] = X;
    }
    return out;
}

std::vector<Eigen::MatrixXd> integrate_matrix_ode(const MatrixRhs& rhs,
                                                  const Eigen::MatrixXd& boundary,
                                                  OdeDirection direction, const TimeGrid& grid,
                                                  double blow_up_norm) {
    SystemRhs sys = [&rhs](double t, const SystemState& X) {
        return SystemState{rhs(t, X[0])};
    };
    auto path = integrate_system(sys, SystemState{boundary}, direction, grid, blow_up_norm);
    std::vector<Eigen::MatrixXd> out;
    out.reserve(path.size());
    for (auto& s : path) out.push_back(std::move(s[0]));
    return out;
}

} // namespace mflqg
