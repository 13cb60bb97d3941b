#include "mflqg/noise.hpp"

#include <cmath>

namespace mflqg {

std::array<uint32_t, 4> philox4x32(std::array<uint32_t, 4> ctr, std::array<uint32_t, 2> key) {
    constexpr uint32_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
    constexpr uint32_t W0 = 0x9E3779B9u, W1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        uint64_t p0 = static_cast<uint64_t>(M0) * ctr[0];
        uint64_t p1 = static_cast<uint64_t>(M1) * ctr[2];
        std::array<uint32_t, 4> next = {
            static_cast<uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<uint32_t>(p1),
            static_cast<uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<uint32_t>(p0)};
        ctr = next;
        key[0] += W0;
        key[1] += W1;
    }
    return ctr;
}

// AS 241 PPND16.
double inverse_normal_cdf(double u) {
    static const double A[8] = {3.3871328727963666080e0, 1.3314166789178437745e2,
                                1.9715909503065514427e3, 1.3731693765509461125e4,
                                4.5921953931549871457e4, 6.7265770927008700853e4,
                                3.3430575583588128105e4, 2.5090809287301226727e3};
    static const double B[8] = {1.0, 4.2313330701600911252e1, 6.8718700749205790830e2,
                                5.3941960214247511077e3, 2.1213794301586595867e4,
                                3.9307895800092710610e4, 2.8729085735721942674e4,
                                5.2264952788528545610e3};
    static const double C[8] = {1.42343711074968357734e0, 4.63033784615654529590e0,
                                5.76949722146069140550e0, 3.64784832476320460504e0,
                                1.27045825245236838258e0, 2.41780725177450611770e-1,
                                2.27238449892691845833e-2, 7.74545014278341407640e-4};
    static const double Dc[8] = {1.0, 2.05319162663775882187e0, 1.67638483018380384940e0,
                                 6.89767334985100004550e-1, 1.48103976427480074590e-1,
                                 1.51986665636164571966e-2, 5.47593808499534494600e-4,
                                 1.05075007164441684324e-9};
    static const double E[8] = {6.65790464350110377720e0, 5.46378491116411436990e0,
                                1.78482653991729133580e0, 2.96560571828504891230e-1,
                                2.65321895265761230930e-2, 1.24266094738807843860e-3,
                                2.71155556874348757815e-5, 2.01033439929228813265e-7};
    static const double Fc[8] = {1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1,
                                 1.48753612908506148525e-2, 7.86869131145613259100e-4,
                                 1.84631831751005468180e-5, 1.42151175831644588870e-7,
                                 2.04426310338993978564e-15};
    auto poly = [](const double* c, double x) {
        double v = c[7];
        for (int i = 6; i >= 0; --i) v = v * x + c[i];
        return v;
    };
    double q = u - 0.5;
    if (std::fabs(q) <= 0.425) {
        double r = 0.180625 - q * q;
        return q * poly(A, r) / poly(B, r);
    }
    double r = (q < 0.0) ? u : 1.0 - u;
    r = std::sqrt(-std::log(r));
    double z;
    if (r <= 5.0) {
        r -= 1.6;
        z = poly(C, r) / poly(Dc, r);
    } else {
        r -= 5.0;
        z = poly(E, r) / poly(Fc, r);
    }
    return (q < 0.0) ? -z : z;
}

NoiseSlab brownian_increments(uint64_t seed, uint64_t path_id, const TimeGrid& grid, int r,
                              int rt) {
    NoiseSlab slab;
    slab.seed = seed;
    slab.path_id = path_id;
    slab.dt = grid.step;
    const double s = std::sqrt(grid.step);
    const int N = grid.step_count;
    NoiseGen gen{seed};
    slab.dW.resize(N, r);
    slab.dWt.resize(N, rt);
    for (int i = 0; i < N; ++i) {
        for (int j = 0; j < r; ++j)
            slab.dW(i, j) = s * gen.normal(path_id, static_cast<uint32_t>(i),
                                           static_cast<uint32_t>(j));
        for (int j = 0; j < rt; ++j)
            slab.dWt(i, j) = s * gen.normal(path_id, static_cast<uint32_t>(i),
                                            static_cast<uint32_t>(r + j));
    }
    return slab;
}

} // namespace mflqg
