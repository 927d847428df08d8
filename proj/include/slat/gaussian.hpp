#pragma once

#include "slat/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

namespace slat {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

template <int N>
using Vec = Eigen::Matrix<double, N, 1>;
template <int R, int C>
using Mat = Eigen::Matrix<double, R, C>;

using Vec2 = Vec<2>;
using Vec4 = Vec<4>;
using Mat2 = Mat<2, 2>;
using Mat4 = Mat<4, 4>;
using Mat24 = Mat<2, 4>;

/// log(sum(exp(x))) over a range; -inf for an empty or all -inf range.
inline double logsumexp(std::span<const double> xs) {
    double hi = kNegInf;
    for (double x : xs) hi = std::max(hi, x);
    if (!std::isfinite(hi)) return hi;
    double acc = 0.0;
    for (double x : xs) acc += std::exp(x - hi);
    return hi + std::log(acc);
}

inline double logaddexp(double a, double b) {
    if (a == kNegInf) return b;
    if (b == kNegInf) return a;
    const double hi = std::max(a, b);
    return hi + std::log1p(std::exp(-std::abs(a - b)));
}

template <typename Derived>
void symmetrize(Eigen::MatrixBase<Derived>& m) {
    m = (0.5 * (m + m.transpose())).eval();
}

/// True when `m` is symmetric (1e-9 relative) and PSD (eigenvalues >= -1e-9 trace).
template <typename Derived>
bool is_symmetric_psd(const Eigen::MatrixBase<Derived>& m) {
    if (m.rows() != m.cols()) return false;
    if (m.size() == 0) return true;
    if (!m.allFinite()) return false;
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) return false;
    using Plain = typename Derived::PlainObject;
    Eigen::SelfAdjointEigenSolver<Plain> es(Plain(m), Eigen::EigenvaluesOnly);
    const double tol = 1e-9 * std::max(std::abs(m.trace()), 1e-300);
    return es.eigenvalues().minCoeff() >= -tol;
}

/// Mean/covariance pair. N may be Eigen::Dynamic for stacked joint states.
template <int N>
struct GaussianDensity {
    Vec<N> mean;
    Mat<N, N> cov;

    [[nodiscard]] Eigen::Index dim() const { return mean.size(); }

    [[nodiscard]] bool is_valid() const {
        return mean.size() == cov.rows() && is_symmetric_psd(cov) && mean.allFinite();
    }

    bool operator==(const GaussianDensity&) const = default;
};

using Gaussian4 = GaussianDensity<4>;
using GaussianX = GaussianDensity<Eigen::Dynamic>;

template <int N>
struct MixtureComponent {
    double log_weight = 0.0;
    GaussianDensity<N> density;

    bool operator==(const MixtureComponent&) const = default;
};

/// Weighted Gaussian mixture with log-domain weights. Used both as a
/// normalized density and as an unnormalized PPP intensity.
template <int N>
struct GaussianMixture {
    std::vector<MixtureComponent<N>> components;

    [[nodiscard]] bool empty() const { return components.empty(); }
    [[nodiscard]] std::size_t size() const { return components.size(); }

    [[nodiscard]] double log_total_weight() const {
        std::vector<double> lw;
        lw.reserve(components.size());
        for (const auto& c : components) lw.push_back(c.log_weight);
        return logsumexp(lw);
    }
    [[nodiscard]] double total_weight() const { return std::exp(log_total_weight()); }

    void add_log_weight(double delta) {
        for (auto& c : components) c.log_weight += delta;
    }

    bool operator==(const GaussianMixture&) const = default;
};

using Mixture4 = GaussianMixture<4>;

/// log N(x; mean, cov). Throws NumericalDegeneracy when cov is not PD.
template <typename DerivedX, typename DerivedM, typename DerivedC>
double log_normal_pdf(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedM>& mean,
                      const Eigen::MatrixBase<DerivedC>& cov) {
    using Plain = typename DerivedC::PlainObject;
    Eigen::LLT<Plain> llt{Plain(cov)};
    if (llt.info() != Eigen::Success) throw NumericalDegeneracy("log_normal_pdf: covariance not positive definite");
    const auto diff = (x - mean).eval();
    const auto whitened = llt.matrixL().solve(diff).eval();
    const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    const double d = static_cast<double>(diff.size());
    return -0.5 * (d * std::log(2.0 * std::numbers::pi) + log_det + whitened.squaredNorm());
}

namespace detail {

template <typename Derived>
void check_innovation_cov(const Eigen::MatrixBase<Derived>& s, const std::string& who) {
    using Plain = typename Derived::PlainObject;
    Eigen::SelfAdjointEigenSolver<Plain> es(Plain(s), Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    if (!(lo > 0.0) || !std::isfinite(hi) || hi / lo >= 1e12) {
        throw NumericalDegeneracy(who + ": innovation covariance singular or ill-conditioned (eigenvalues " +
                                  std::to_string(lo) + ", " + std::to_string(hi) + ")");
    }
}

} // namespace detail

/// Chapman-Kolmogorov step of a linear-Gaussian transition.
template <int N, typename DerivedA, typename DerivedW>
GaussianDensity<N> kf_predict(const GaussianDensity<N>& prior, const Eigen::MatrixBase<DerivedA>& trans,
                              const Eigen::MatrixBase<DerivedW>& noise) {
    require(trans.rows() == trans.cols(), "kf_predict: transition matrix must be square");
    require(trans.cols() == prior.dim() && noise.rows() == prior.dim() && noise.cols() == prior.dim(),
            "kf_predict: dimension mismatch");
    GaussianDensity<N> out{trans * prior.mean, trans * prior.cov * trans.transpose() + noise};
    symmetrize(out.cov);
    return out;
}

template <int N>
struct KfUpdateResult {
    GaussianDensity<N> posterior;
    double log_likelihood = 0.0;
};

/// Kalman conditioning on z = H x + v, v ~ N(0, R). Joseph-form covariance.
/// `who` names the component in degeneracy errors.
template <int N, typename DerivedZ, typename DerivedH, typename DerivedR>
KfUpdateResult<N> kf_update(const GaussianDensity<N>& prior, const Eigen::MatrixBase<DerivedZ>& z,
                            const Eigen::MatrixBase<DerivedH>& obs, const Eigen::MatrixBase<DerivedR>& noise,
                            const std::string& who = "kf_update") {
    require(obs.cols() == prior.dim() && obs.rows() == z.size() && noise.rows() == z.size() &&
                noise.cols() == z.size(),
            who + ": dimension mismatch");
    using MatS = typename DerivedR::PlainObject;
    const MatS s = (obs * prior.cov * obs.transpose() + noise).eval();
    detail::check_innovation_cov(s, who);
    Eigen::LLT<MatS> llt(s);
    const auto innov = (z - obs * prior.mean).eval();
    // K = P H^T S^-1
    const auto gain = llt.solve(obs * prior.cov).transpose().eval();
    KfUpdateResult<N> out;
    out.posterior.mean = prior.mean + gain * innov;
    const auto ikh = (Mat<N, N>::Identity(prior.dim(), prior.dim()) - gain * obs).eval();
    out.posterior.cov = ikh * prior.cov * ikh.transpose() + gain * noise * gain.transpose();
    symmetrize(out.posterior.cov);
    const auto whitened = llt.matrixL().solve(innov).eval();
    const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    out.log_likelihood = -0.5 * (static_cast<double>(innov.size()) * std::log(2.0 * std::numbers::pi) + log_det +
                                 whitened.squaredNorm());
    return out;
}

/// Mixture with weights renormalized so that logsumexp(log_weights) == 0.
template <int N>
GaussianMixture<N> normalized(GaussianMixture<N> mix) {
    const double total = mix.log_total_weight();
    require(std::isfinite(total), "normalized: mixture has no finite mass");
    mix.add_log_weight(-total);
    return mix;
}

/// Single Gaussian with the same first two moments as a normalized mixture.
template <int N>
GaussianDensity<N> moment_match(const GaussianMixture<N>& mix) {
    require(!mix.empty(), "moment_match: empty mixture");
    require(std::abs(mix.log_total_weight()) <= 1e-9, "moment_match: mixture weights not normalized");
    const auto dim = mix.components.front().density.dim();
    for (const auto& c : mix.components) require(c.density.dim() == dim, "moment_match: dimension mismatch");
    if (mix.size() == 1) return mix.components.front().density;

    GaussianDensity<N> out{Vec<N>::Zero(dim), Mat<N, N>::Zero(dim, dim)};
    for (const auto& c : mix.components) {
        if (c.log_weight == kNegInf) continue;
        out.mean += std::exp(c.log_weight) * c.density.mean;
    }
    for (const auto& c : mix.components) {
        if (c.log_weight == kNegInf) continue;
        const Vec<N> d = c.density.mean - out.mean;
        out.cov += std::exp(c.log_weight) * (c.density.cov + d * d.transpose());
    }
    symmetrize(out.cov);
    return out;
}

struct PruneMergeSettings {
    double prune_log_threshold = std::log(1e-5);
    double merge_threshold = 4.0; // squared Mahalanobis distance
    std::size_t max_components = 30;
};

/// Bounded intensity representation: prune low weights, greedily merge
/// (largest weight first, Mahalanobis gate), then cap the component count.
template <int N>
GaussianMixture<N> gm_prune_merge(const GaussianMixture<N>& mix, const PruneMergeSettings& settings) {
    std::vector<const MixtureComponent<N>*> pool;
    for (const auto& c : mix.components)
        if (c.log_weight >= settings.prune_log_threshold && c.log_weight != kNegInf) pool.push_back(&c);
    std::stable_sort(pool.begin(), pool.end(),
                     [](const auto* a, const auto* b) { return a->log_weight > b->log_weight; });

    GaussianMixture<N> out;
    std::vector<bool> used(pool.size(), false);
    for (std::size_t i = 0; i < pool.size(); ++i) {
        if (used[i]) continue;
        used[i] = true;
        const auto& head = pool[i]->density;
        Eigen::LLT<Mat<N, N>> llt(head.cov);
        const bool can_gate = llt.info() == Eigen::Success;
        GaussianMixture<N> group;
        group.components.push_back(*pool[i]);
        for (std::size_t j = i + 1; j < pool.size(); ++j) {
            if (used[j]) continue;
            const Vec<N> d = pool[j]->density.mean - head.mean;
            const bool same_mean = d.cwiseAbs().maxCoeff() == 0.0;
            const double dist = same_mean ? 0.0 : (can_gate ? d.dot(llt.solve(d)) : std::numeric_limits<double>::infinity());
            if (dist <= settings.merge_threshold) {
                used[j] = true;
                group.components.push_back(*pool[j]);
            }
        }
        const double group_weight = group.log_total_weight();
        if (group.size() == 1) {
            out.components.push_back(group.components.front());
        } else {
            out.components.push_back({group_weight, moment_match(normalized(group))});
        }
    }
    std::stable_sort(out.components.begin(), out.components.end(),
                     [](const auto& a, const auto& b) { return a.log_weight > b.log_weight; });
    if (out.components.size() > settings.max_components) out.components.resize(settings.max_components);
    return out;
}

} // namespace slat
