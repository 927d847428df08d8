#pragma once

#include "slat/gaussian.hpp"

#include <cmath>
#include <utility>

namespace slat {

/// Nearly-constant-velocity dynamics over state [px, py, vx, vy].
struct CvModel {
    double dt = 0.5;
    double accel_psd = 0.05;

    [[nodiscard]] bool is_valid() const { return dt > 0.0 && accel_psd >= 0.0; }
};

/// Position fix: z = H_G s + r, r ~ N(0, sigma2 I).
struct GnssModel {
    double sigma2 = 5.76e-4;

    [[nodiscard]] bool is_valid() const { return sigma2 > 0.0; }
    [[nodiscard]] Mat2 noise_cov() const { return sigma2 * Mat2::Identity(); }
};

/// Vehicle-to-feature relative position: z = H1 s + H2 x + q, H1 = H_G, H2 = -H_G.
struct V2fModel {
    double sigma2 = 0.42;
    double p_detect = 0.9;
    double clutter_rate = 10.0;
    double r_max = 500.0;

    [[nodiscard]] bool is_valid() const {
        return sigma2 > 0.0 && p_detect > 0.0 && p_detect <= 1.0 && clutter_rate >= 0.0 && r_max > 0.0;
    }
    [[nodiscard]] Mat2 noise_cov() const { return sigma2 * Mat2::Identity(); }
};

/// Birth intensity, initial undetected intensity and survival probability.
struct BirthSurvivalModel {
    Mixture4 birth_intensity;
    Mixture4 initial_unknown_intensity;
    double p_survive = 0.7;

    [[nodiscard]] bool is_valid() const {
        if (!(p_survive > 0.0 && p_survive <= 1.0)) return false;
        for (const auto* gm : {&birth_intensity, &initial_unknown_intensity})
            for (const auto& c : gm->components)
                if (std::isnan(c.log_weight) || c.log_weight == std::numeric_limits<double>::infinity()) return false;
        return true;
    }
};

/// diag(100^2, 100^2, 1, 1): spatial spread of the undetected-feature intensity.
inline Mat4 default_spread_cov() {
    return Vec4(100.0 * 100.0, 100.0 * 100.0, 1.0, 1.0).asDiagonal();
}

inline Mixture4 single_component_intensity(double weight, const Mat4& cov) {
    Mixture4 gm;
    if (weight > 0.0) gm.components.push_back({std::log(weight), Gaussian4{Vec4::Zero(), cov}});
    return gm;
}

inline BirthSurvivalModel default_birth_survival() {
    return {single_component_intensity(0.05, default_spread_cov()),
            single_component_intensity(10.0, default_spread_cov()), 0.7};
}

/// Position selector [1 0] (x) I2.
inline Mat24 gnss_obs_matrix() {
    Mat24 h = Mat24::Zero();
    h(0, 0) = 1.0;
    h(1, 1) = 1.0;
    return h;
}
inline Mat24 v2f_vehicle_matrix() { return gnss_obs_matrix(); }
inline Mat24 v2f_feature_matrix() { return -gnss_obs_matrix(); }

struct CvMatrices {
    Mat4 transition;
    Mat4 process_noise;
};

/// A = [[1, dt], [0, 1]] (x) I2 and W = r [[dt^3/3, dt^2/2], [dt^2/2, dt]] (x) I2.
inline CvMatrices cv_matrices(const CvModel& model) {
    const double dt = model.dt;
    Eigen::Matrix2d a1;
    a1 << 1.0, dt, 0.0, 1.0;
    Eigen::Matrix2d w1;
    w1 << dt * dt * dt / 3.0, dt * dt / 2.0, dt * dt / 2.0, dt;
    w1 *= model.accel_psd;
    CvMatrices out;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            out.transition.block<2, 2>(2 * i, 2 * j) = a1(i, j) * Mat2::Identity();
            out.process_noise.block<2, 2>(2 * i, 2 * j) = w1(i, j) * Mat2::Identity();
        }
    return out;
}

/// log of p_D N(z; H1 mu_s + H2 mu_x, H1 P_s H1' + H2 P_x H2' + Q): the
/// detection likelihood with both sensor and feature states integrated out.
inline double v2f_effective_likelihood(const Vec2& z, const Gaussian4& vehicle, const Gaussian4& feature,
                                       const V2fModel& model) {
    const Mat24 h1 = v2f_vehicle_matrix();
    const Mat24 h2 = v2f_feature_matrix();
    const Mat2 s = h1 * vehicle.cov * h1.transpose() + h2 * feature.cov * h2.transpose() + model.noise_cov();
    detail::check_innovation_cov(s, "v2f_effective_likelihood");
    return std::log(model.p_detect) + log_normal_pdf(z, Vec2(h1 * vehicle.mean + h2 * feature.mean), s);
}

/// Clutter PPP intensity, uniform on [-r_max, r_max]^2.
inline double clutter_log_intensity(const Vec2& z, const V2fModel& model) {
    if (model.clutter_rate <= 0.0) return kNegInf;
    if (std::abs(z.x()) > model.r_max || std::abs(z.y()) > model.r_max) return kNegInf;
    const double side = 2.0 * model.r_max;
    return std::log(model.clutter_rate / (side * side));
}

} // namespace slat
