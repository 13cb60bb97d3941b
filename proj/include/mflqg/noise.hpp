#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>

#include "mflqg/time_grid.hpp"

namespace mflqg {

// Philox4x32-10 counter block cipher (Salmon et al. keyed-counter generator).
std::array<uint32_t, 4> philox4x32(std::array<uint32_t, 4> ctr, std::array<uint32_t, 2> key);

// Inverse standard normal CDF (Wichura's PPND16), |rel err| ~ 1e-15.
double inverse_normal_cdf(double u);

// Stateless N(0,1) stream keyed on (seed, path, step, component); identical
// values regardless of evaluation order or worker count.
struct NoiseGen {
    uint64_t seed = 0;

    double normal(uint64_t path, uint32_t step, uint32_t component) const {
        auto w = philox4x32({step, component, static_cast<uint32_t>(path),
                             static_cast<uint32_t>(path >> 32)},
                            {static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32)});
        uint64_t bits = (static_cast<uint64_t>(w[0]) << 32) | w[1];
        double u = (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
        return inverse_normal_cdf(u);
    }
};

// Reserved step index for initial-condition draws.
constexpr uint32_t kInitStep = 0xFFFFFFFFu;

// Materialized Brownian increments for one path: dW is steps x r, dWt steps x rt,
// each entry Normal(0, dt).
struct NoiseSlab {
    uint64_t seed = 0;
    uint64_t path_id = 0;
    double dt = 0.0;
    Eigen::MatrixXd dW;
    Eigen::MatrixXd dWt;
};

NoiseSlab brownian_increments(uint64_t seed, uint64_t path_id, const TimeGrid& grid, int r,
                              int rt);

} // namespace mflqg
