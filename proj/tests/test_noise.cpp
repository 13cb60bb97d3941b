#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mflqg/noise.hpp"

using namespace mflqg;

TEST_CASE("philox4x32-10 known-answer vectors") {
    // reference vectors of the keyed-counter generator
    auto r0 = philox4x32({0u, 0u, 0u, 0u}, {0u, 0u});
    CHECK(r0[0] == 0x6627e8d5u);
    CHECK(r0[1] == 0xe169c58du);
    CHECK(r0[2] == 0xbc57ac4cu);
    CHECK(r0[3] == 0x9b00dbd8u);

    auto r1 = philox4x32({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                         {0xa4093822u, 0x299f31d0u});
    CHECK(r1[0] == 0xd16cfe09u);
    CHECK(r1[1] == 0x94fdccebu);
    CHECK(r1[2] == 0x5001e420u);
    CHECK(r1[3] == 0x24126ea1u);
}

TEST_CASE("inverse normal cdf sanity") {
    CHECK(inverse_normal_cdf(0.5) == 0.0);
    CHECK(std::fabs(inverse_normal_cdf(0.975) - 1.959963984540054) < 1e-12);
    CHECK(std::fabs(inverse_normal_cdf(0.16) + inverse_normal_cdf(0.84)) < 1e-13);
    CHECK(std::fabs(inverse_normal_cdf(1e-10) + 6.361340902404057) < 1e-9);
}

TEST_CASE("slabs regenerate bit-identically") {
    TimeGrid g = TimeGrid::make(1.0, 1000);
    NoiseSlab a = brownian_increments(42, 7, g, 2, 3);
    NoiseSlab b = brownian_increments(42, 7, g, 2, 3);
    CHECK(a.dW == b.dW);
    CHECK(a.dWt == b.dWt);
    NoiseSlab c = brownian_increments(42, 8, g, 2, 3);
    CHECK(a.dW != c.dW);
}

TEST_CASE("increment streams of different paths are uncorrelated") {
    const int n = 100000;
    NoiseGen gen{42};
    double sxy = 0, sx = 0, sy = 0, sxx = 0, syy = 0;
    for (int i = 0; i < n; ++i) {
        double x = gen.normal(0, static_cast<uint32_t>(i), 0);
        double y = gen.normal(1, static_cast<uint32_t>(i), 0);
        sx += x; sy += y; sxx += x * x; syy += y * y; sxy += x * y;
    }
    double cov = sxy / n - (sx / n) * (sy / n);
    double corr = cov / std::sqrt((sxx / n - sx / n * sx / n) * (syy / n - sy / n * sy / n));
    CHECK(std::fabs(corr) < 0.01);
}

TEST_CASE("increment variance approaches dt") {
    TimeGrid g = TimeGrid::make(1.0, 1000);  // dt = 1e-3
    const int paths = 100;
    double ss = 0.0, s = 0.0;
    long long count = 0;
    for (int q = 0; q < paths; ++q) {
        NoiseSlab slab = brownian_increments(123, static_cast<uint64_t>(q), g, 1, 1);
        for (int i = 0; i < g.step_count; ++i) {
            s += slab.dW(i, 0);
            ss += slab.dW(i, 0) * slab.dW(i, 0);
            ++count;
        }
    }
    double mean = s / static_cast<double>(count);
    double var = ss / static_cast<double>(count) - mean * mean;
    CHECK(std::fabs(var - 0.001) < 0.02 * 0.001);
    CHECK(std::fabs(mean) < 3.0 * std::sqrt(0.001 / static_cast<double>(count)));
}
