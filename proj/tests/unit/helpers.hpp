#pragma once

#include "slat/gaussian.hpp"

#include <random>

namespace testutil {

inline constexpr int kCases = 1000;

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
inline double normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

template <int N>
slat::Vec<N> random_vec(Rng& rng, double scale = 1.0, int dim = N) {
    slat::Vec<N> v(dim);
    for (int i = 0; i < dim; ++i) v[i] = scale * normal(rng);
    return v;
}

/// Random SPD matrix with eigenvalues in [lo, hi].
template <int N>
slat::Mat<N, N> random_spd(Rng& rng, double lo = 0.1, double hi = 10.0, int dim = N) {
    slat::Mat<N, N> g(dim, dim);
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) g(i, j) = normal(rng);
    Eigen::HouseholderQR<slat::Mat<N, N>> qr(g);
    const slat::Mat<N, N> q = qr.householderQ();
    slat::Vec<N> ev(dim);
    for (int i = 0; i < dim; ++i) ev[i] = uniform(rng, lo, hi);
    slat::Mat<N, N> out = q * ev.asDiagonal() * q.transpose();
    slat::symmetrize(out);
    return out;
}

template <int N>
slat::GaussianDensity<N> random_gaussian(Rng& rng, double mean_scale = 5.0, double lo = 0.1, double hi = 10.0) {
    return {random_vec<N>(rng, mean_scale), random_spd<N>(rng, lo, hi)};
}

/// Textbook 2x2 inverse, independent of Eigen's decompositions.
inline Eigen::Matrix2d inverse2(const Eigen::Matrix2d& s) {
    const double det = s(0, 0) * s(1, 1) - s(0, 1) * s(1, 0);
    Eigen::Matrix2d inv;
    inv << s(1, 1), -s(0, 1), -s(1, 0), s(0, 0);
    return inv / det;
}

/// Kalman update in the covariance-subtraction form with an explicit inverse.
template <int N>
slat::GaussianDensity<N> textbook_kf(const slat::GaussianDensity<N>& prior, const Eigen::Vector2d& z,
                                     const slat::Mat<2, N>& h, const Eigen::Matrix2d& r) {
    const Eigen::Matrix2d s = h * prior.cov * h.transpose() + r;
    const slat::Mat<N, 2> k = prior.cov * h.transpose() * inverse2(s);
    slat::GaussianDensity<N> out{prior.mean + k * (z - h * prior.mean), prior.cov - k * s * k.transpose()};
    return out;
}

} // namespace testutil
