#pragma once

#include "slat/filter.hpp"
#include "slat/metrics.hpp"

#include <algorithm>
#include <cstdint>
#include <map>
#include <random>
#include <vector>

namespace slat {

struct VehicleSpec {
    int id = 1;
    Vec4 initial_state = Vec4(0.0, 200.0, 0.0, -2.0);
    double sigma_g2 = 5.76e-4;
};

/// Synthetic world: CV vehicles and features, staggered feature births,
/// GNSS and V2F sensors with clutter.
struct ScenarioSpec {
    std::int64_t duration_steps = 351;
    double dt = 0.5;
    double accel_psd = 0.05;
    std::vector<VehicleSpec> vehicles{VehicleSpec{}};
    /// Velocity variance of the filters' vehicle prior; position variance is the vehicle's sigma_g2.
    double vehicle_prior_velocity_var = 1.0;
    int feature_count = 5;
    std::int64_t birth_interval = 20;
    std::int64_t anchor_step = 175;
    double feature_init_var = 0.25;
    double sigma_v2f2 = 0.42;
    double p_detect = 0.9;
    double clutter_rate = 10.0;
    double r_max = 500.0;
    double p_survive = 0.7;
    double birth_weight = 0.05;
    double initial_unknown_weight = 10.0;
    Vec4 intensity_spread_var = Vec4(100.0 * 100.0, 100.0 * 100.0, 1.0, 1.0);

    [[nodiscard]] std::int64_t birth_step(int feature_index) const { return birth_interval * feature_index; }

    [[nodiscard]] CvModel cv() const { return {dt, accel_psd}; }
    [[nodiscard]] V2fModel v2f() const { return {sigma_v2f2, p_detect, clutter_rate, r_max}; }

    [[nodiscard]] SystemModels models() const {
        SystemModels m;
        m.cv = cv();
        m.v2f = v2f();
        const Mat4 spread = intensity_spread_var.asDiagonal();
        m.birth = {single_component_intensity(birth_weight, spread),
                   single_component_intensity(initial_unknown_weight, spread), p_survive};
        for (const auto& v : vehicles) m.gnss[v.id] = GnssModel{v.sigma_g2};
        return m;
    }

    [[nodiscard]] std::map<int, Gaussian4> vehicle_priors() const {
        std::map<int, Gaussian4> out;
        for (const auto& v : vehicles) {
            const Vec4 var(v.sigma_g2, v.sigma_g2, vehicle_prior_velocity_var, vehicle_prior_velocity_var);
            out[v.id] = Gaussian4{v.initial_state, var.asDiagonal()};
        }
        return out;
    }

    [[nodiscard]] std::vector<GenieFeature> genie_features() const {
        std::vector<GenieFeature> out;
        const Mat4 spread = intensity_spread_var.asDiagonal();
        for (int k = 0; k < feature_count; ++k)
            if (birth_step(k) < duration_steps) out.push_back({k + 1, birth_step(k), Gaussian4{Vec4::Zero(), spread}});
        return out;
    }
};

struct FeatureTruth {
    int id = 0;
    std::int64_t birth_step = 0;
    std::vector<Vec4> states; ///< states[t - birth_step]

    [[nodiscard]] bool alive(std::int64_t t) const {
        return t >= birth_step && t - birth_step < static_cast<std::int64_t>(states.size());
    }
    [[nodiscard]] const Vec4& at(std::int64_t t) const { return states[static_cast<std::size_t>(t - birth_step)]; }

    bool operator==(const FeatureTruth&) const = default;
};

struct GroundTruth {
    std::map<int, std::vector<Vec4>> vehicles; ///< per-step states
    std::vector<FeatureTruth> features;

    [[nodiscard]] std::vector<Vec2> feature_positions(std::int64_t t) const {
        std::vector<Vec2> out;
        for (const auto& f : features)
            if (f.alive(t)) out.push_back(f.at(t).head<2>());
        return out;
    }

    bool operator==(const GroundTruth&) const = default;
};

namespace detail {

enum class Stream : std::uint32_t { truth = 1, scan = 2 };

inline std::mt19937_64 make_rng(std::uint64_t seed, Stream stream, std::uint64_t a = 0, std::uint64_t b = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(a),
                      static_cast<std::uint32_t>(b)};
    return std::mt19937_64(seq);
}

template <int N>
Vec<N> sample_gaussian(std::mt19937_64& rng, const Mat<N, N>& cov) {
    std::normal_distribution<double> unit(0.0, 1.0);
    Vec<N> e;
    for (int i = 0; i < N; ++i) e[i] = unit(rng);
    if (cov.isZero(0.0)) return Vec<N>::Zero();
    Eigen::SelfAdjointEigenSolver<Mat<N, N>> es(cov);
    const Vec<N> sd = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * sd.asDiagonal() * e;
}

} // namespace detail

/// Vehicles run the CV model forward from their initial states. Each feature
/// is drawn at the anchor step, propagated forward to the end and backward
/// (x_{t-1} = A^-1 (x_t - w_t), w_t ~ N(0, W)) to its birth step, so that the
/// stored trajectory satisfies x_t = A x_{t-1} + w_t everywhere.
inline GroundTruth generate_trajectories(const ScenarioSpec& spec, std::uint64_t seed) {
    auto rng = detail::make_rng(seed, detail::Stream::truth);
    const auto [a, w] = cv_matrices(spec.cv());
    const Mat4 a_inv = a.inverse();
    const auto steps = spec.duration_steps;
    GroundTruth truth;
    for (const auto& v : spec.vehicles) {
        auto& traj = truth.vehicles[v.id];
        traj.reserve(static_cast<std::size_t>(steps));
        traj.push_back(v.initial_state);
        for (std::int64_t t = 1; t < steps; ++t) traj.push_back(a * traj.back() + detail::sample_gaussian<4>(rng, w));
    }
    const Mat4 init_cov = spec.feature_init_var * Mat4::Identity();
    for (int k = 0; k < spec.feature_count; ++k) {
        const auto birth = spec.birth_step(k);
        if (birth >= steps) break;
        FeatureTruth f;
        f.id = k + 1;
        f.birth_step = birth;
        std::vector<Vec4> all(static_cast<std::size_t>(std::max(steps, spec.anchor_step + 1)));
        const auto anchor = static_cast<std::size_t>(spec.anchor_step);
        all[anchor] = detail::sample_gaussian<4>(rng, init_cov);
        for (std::size_t t = anchor + 1; t < all.size(); ++t) all[t] = a * all[t - 1] + detail::sample_gaussian<4>(rng, w);
        for (std::size_t t = anchor; t > static_cast<std::size_t>(birth); --t)
            all[t - 1] = a_inv * (all[t] - detail::sample_gaussian<4>(rng, w));
        f.states.assign(all.begin() + birth, all.begin() + steps);
        truth.features.push_back(std::move(f));
    }
    return truth;
}

/// Per step, per vehicle (ascending id): one GNSS fix, each alive feature
/// detected with probability p_D, Poisson clutter uniform on the square, and
/// the V2F set shuffled. Each (vehicle, step) draws from its own stream.
inline std::vector<std::vector<ScanRecord>> generate_scans(const GroundTruth& truth, const ScenarioSpec& spec,
                                                           std::uint64_t seed) {
    const Mat2 q = spec.sigma_v2f2 * Mat2::Identity();
    const Mat24 h1 = v2f_vehicle_matrix();
    const Mat24 h2 = v2f_feature_matrix();
    std::vector<std::vector<ScanRecord>> out(static_cast<std::size_t>(spec.duration_steps));
    for (std::int64_t t = 0; t < spec.duration_steps; ++t) {
        for (const auto& v : spec.vehicles) {
            auto rng = detail::make_rng(seed, detail::Stream::scan, static_cast<std::uint64_t>(v.id),
                                        static_cast<std::uint64_t>(t));
            const Vec4& s = truth.vehicles.at(v.id)[static_cast<std::size_t>(t)];
            ScanRecord scan;
            scan.time_step = t;
            scan.vehicle_id = v.id;
            scan.gnss = Vec2(gnss_obs_matrix() * s + detail::sample_gaussian<2>(rng, Mat2(v.sigma_g2 * Mat2::Identity())));
            std::bernoulli_distribution detect(spec.p_detect);
            for (const auto& f : truth.features) {
                if (!f.alive(t)) continue;
                if (!detect(rng)) continue;
                scan.v2f.push_back(h1 * s + h2 * f.at(t) + detail::sample_gaussian<2>(rng, q));
                scan.origins.push_back(f.id);
            }
            if (spec.clutter_rate > 0.0) {
                std::poisson_distribution<int> count(spec.clutter_rate);
                std::uniform_real_distribution<double> coord(-spec.r_max, spec.r_max);
                const int nc = count(rng);
                for (int c = 0; c < nc; ++c) {
                    const double x = coord(rng);
                    const double y = coord(rng);
                    scan.v2f.emplace_back(x, y);
                    scan.origins.push_back(-1);
                }
            }
            std::vector<std::size_t> order(scan.v2f.size());
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            std::shuffle(order.begin(), order.end(), rng);
            ScanRecord shuffled = scan;
            for (std::size_t i = 0; i < order.size(); ++i) {
                shuffled.v2f[i] = scan.v2f[order[i]];
                shuffled.origins[i] = scan.origins[order[i]];
            }
            out[static_cast<std::size_t>(t)].push_back(std::move(shuffled));
        }
    }
    return out;
}

} // namespace slat
