#pragma once

#include <Eigen/Dense>
#include <vector>

#include "mflqg/time_grid.hpp"

namespace mflqg {

enum class Interp { PiecewiseConstantLeft, PiecewiseLinear };

// A deterministic matrix-valued coefficient sampled at every grid knot.
class CoefficientPath {
public:
    CoefficientPath() = default;

    CoefficientPath(int rows, int cols, const TimeGrid& grid, Interp interp)
        : rows_(rows), cols_(cols), interp_(interp),
          samples_(grid.knots(), Eigen::MatrixXd::Zero(rows, cols)) {}

    static CoefficientPath zero(int rows, int cols, const TimeGrid& grid,
                                Interp interp = Interp::PiecewiseConstantLeft) {
        return CoefficientPath(rows, cols, grid, interp);
    }

    static CoefficientPath constant(const Eigen::MatrixXd& value, const TimeGrid& grid,
                                    Interp interp = Interp::PiecewiseConstantLeft) {
        CoefficientPath p(static_cast<int>(value.rows()), static_cast<int>(value.cols()), grid, interp);
        for (auto& s : p.samples_) s = value;
        return p;
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    Interp interp() const { return interp_; }
    void set_interp(Interp it) { interp_ = it; }
    int knot_count() const { return static_cast<int>(samples_.size()); }

    const Eigen::MatrixXd& at_knot(int i) const { return samples_[static_cast<size_t>(i)]; }
    Eigen::MatrixXd& at_knot(int i) { return samples_[static_cast<size_t>(i)]; }

    // Value at an arbitrary time per the interpolation convention.
    Eigen::MatrixXd value(double t, const TimeGrid& grid) const {
        if (t <= 0.0) return samples_.front();
        if (t >= grid.horizon) return samples_.back();
        int i = grid.cell(t);
        if (interp_ == Interp::PiecewiseConstantLeft) return samples_[static_cast<size_t>(i)];
        double w = (t - grid.t(i)) / grid.step;
        return (1.0 - w) * samples_[static_cast<size_t>(i)] + w * samples_[static_cast<size_t>(i + 1)];
    }

    bool all_finite() const {
        for (const auto& s : samples_)
            if (!s.allFinite()) return false;
        return true;
    }

    bool is_constant() const {
        for (const auto& s : samples_)
            if (s != samples_.front()) return false;
        return true;
    }

    double max_abs() const {
        double m = 0.0;
        for (const auto& s : samples_)
            if (s.size() > 0) m = std::max(m, s.cwiseAbs().maxCoeff());
        return m;
    }

    bool operator==(const CoefficientPath& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_ && samples_ == o.samples_;
    }

private:
    int rows_ = 0, cols_ = 0;
    Interp interp_ = Interp::PiecewiseConstantLeft;
    std::vector<Eigen::MatrixXd> samples_;
};

} // namespace mflqg
