#pragma once

#include <stdexcept>

namespace mflqg {

// Uniform time grid on [0, horizon] with step_count cells.
struct TimeGrid {
    double horizon = 1.0;
    int step_count = 1000;
    double step = 1e-3;

    static TimeGrid make(double horizon, int step_count) {
        if (!(horizon > 0.0))
            throw std::invalid_argument("TimeGrid: horizon must be positive");
        if (step_count < 2)
            throw std::invalid_argument("TimeGrid: step_count must be >= 2");
        TimeGrid g;
        g.horizon = horizon;
        g.step_count = step_count;
        g.step = horizon / step_count;
        return g;
    }

    int knots() const { return step_count + 1; }

    // t(0) == 0 and t(step_count) == horizon exactly.
    double t(int i) const { return horizon * (static_cast<double>(i) / step_count); }

    // Index of the cell [t_i, t_{i+1}) containing t; clamped to [0, step_count-1].
    int cell(double t_) const {
        int i = static_cast<int>(t_ / step);
        if (i < 0) i = 0;
        if (i > step_count - 1) i = step_count - 1;
        return i;
    }

    bool operator==(const TimeGrid& o) const {
        return horizon == o.horizon && step_count == o.step_count;
    }
};

} // namespace mflqg
