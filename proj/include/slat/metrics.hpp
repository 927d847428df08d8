#pragma once

#include "slat/filter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <vector>

namespace slat {

/// Minimum-cost assignment of every row to a distinct column (rows <= cols),
/// Hungarian method with potentials, O(rows^2 cols). Returns the column of each row.
inline std::vector<int> hungarian_assign(const Eigen::MatrixXd& cost) {
    const auto rows = static_cast<int>(cost.rows());
    const auto cols = static_cast<int>(cost.cols());
    require(rows <= cols, "hungarian_assign: more rows than columns");
    if (rows == 0) return {};
    const double inf = std::numeric_limits<double>::infinity();
    // 1-based arrays; column 0 is the virtual start.
    std::vector<double> u(rows + 1, 0.0), v(cols + 1, 0.0);
    std::vector<int> owner(cols + 1, 0), way(cols + 1, 0);
    for (int i = 1; i <= rows; ++i) {
        owner[0] = i;
        int j0 = 0;
        std::vector<double> minv(cols + 1, inf);
        std::vector<bool> used(cols + 1, false);
        do {
            used[j0] = true;
            const int i0 = owner[j0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= cols; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= cols; ++j) {
                if (used[j]) {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (owner[j0] != 0);
        do {
            const int j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> out(rows, -1);
    for (int j = 1; j <= cols; ++j)
        if (owner[j] != 0) out[owner[j] - 1] = j - 1;
    return out;
}

struct OspaParams {
    double cutoff = 20.0;
    double order = 2.0;

    [[nodiscard]] bool is_valid() const { return cutoff > 0.0 && order >= 1.0; }
};

/// OSPA distance between two finite sets of 2-D positions.
inline double ospa(const std::vector<Vec2>& x, const std::vector<Vec2>& y, const OspaParams& params = {}) {
    require(params.is_valid(), "ospa: cutoff must be > 0 and order >= 1");
    const bool x_small = x.size() <= y.size();
    const auto& small = x_small ? x : y;
    const auto& large = x_small ? y : x;
    if (large.empty()) return 0.0;
    if (small.empty()) return params.cutoff;
    const double c = params.cutoff;
    const double p = params.order;
    Eigen::MatrixXd cost(static_cast<Eigen::Index>(small.size()), static_cast<Eigen::Index>(large.size()));
    for (std::size_t i = 0; i < small.size(); ++i)
        for (std::size_t j = 0; j < large.size(); ++j)
            cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                std::pow(std::min((small[i] - large[j]).norm(), c), p);
    double total = 0.0;
    const auto assignment = hungarian_assign(cost);
    for (std::size_t i = 0; i < small.size(); ++i)
        total += cost(static_cast<Eigen::Index>(i), assignment[i]);
    total += std::pow(c, p) * static_cast<double>(large.size() - small.size());
    return std::min(c, std::pow(total / static_cast<double>(large.size()), 1.0 / p));
}

/// Euclidean distance between the true and estimated positions.
inline double position_error(const Vec4& truth, const Vec4& estimate) {
    return (truth.head<2>() - estimate.head<2>()).norm();
}

/// GNSS-only CV Kalman filter of one vehicle. `fixes[t]` is the GNSS fix at
/// step t (if any); `prior` is the belief at step 0 before its measurement.
inline std::vector<Gaussian4> local_kf(const Gaussian4& prior, const std::vector<std::optional<Vec2>>& fixes,
                                       const CvModel& cv, const GnssModel& gnss) {
    const auto [a, w] = cv_matrices(cv);
    std::vector<Gaussian4> out;
    out.reserve(fixes.size());
    Gaussian4 belief = prior;
    for (std::size_t t = 0; t < fixes.size(); ++t) {
        if (t > 0) belief = kf_predict(belief, a, w);
        if (fixes[t]) belief = kf_update(belief, *fixes[t], gnss_obs_matrix(), gnss.noise_cov(), "local_kf").posterior;
        out.push_back(belief);
    }
    return out;
}

/// Joint Gaussian over [vehicles (by id); alive features (by entry order)].
struct GenieState {
    GaussianX joint;
    std::map<int, Eigen::Index> vehicle_offset;
    std::map<int, Eigen::Index> feature_offset;

    [[nodiscard]] Gaussian4 vehicle(int id) const {
        const auto o = vehicle_offset.at(id);
        return {joint.mean.segment<4>(o), joint.cov.block<4, 4>(o, o)};
    }
    [[nodiscard]] Gaussian4 feature(int id) const {
        const auto o = feature_offset.at(id);
        return {joint.mean.segment<4>(o), joint.cov.block<4, 4>(o, o)};
    }
};

/// Feature entering the genie stack at `birth_step` with prior `prior`.
struct GenieFeature {
    int feature_id = 0;
    std::int64_t birth_step = 0;
    Gaussian4 prior;
};

/// Central KF with known association: one joint Gaussian over all vehicles
/// and all true features, clutter measurements dropped via origin labels.
/// `scans_per_step[t]` holds the scans of step t; step 0 is not predicted.
inline std::vector<GenieState> genie_central_kf(const std::map<int, Gaussian4>& vehicle_priors,
                                                const std::vector<GenieFeature>& features,
                                                const std::vector<std::vector<ScanRecord>>& scans_per_step,
                                                const SystemModels& models) {
    const auto [a, w] = cv_matrices(models.cv);
    GenieState st;
    st.joint.mean = Eigen::VectorXd::Zero(0);
    st.joint.cov = Eigen::MatrixXd::Zero(0, 0);
    auto append_block = [&](const Gaussian4& g) {
        const auto o = st.joint.mean.size();
        Eigen::VectorXd mean(o + 4);
        mean << st.joint.mean, g.mean;
        Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(o + 4, o + 4);
        cov.topLeftCorner(o, o) = st.joint.cov;
        cov.block<4, 4>(o, o) = g.cov;
        st.joint = {mean, cov};
        return o;
    };
    for (const auto& [id, g] : vehicle_priors) st.vehicle_offset[id] = append_block(g);

    std::vector<GenieState> out;
    out.reserve(scans_per_step.size());
    for (std::size_t t = 0; t < scans_per_step.size(); ++t) {
        if (t > 0) {
            const auto dim = st.joint.mean.size();
            Eigen::MatrixXd big_a = Eigen::MatrixXd::Zero(dim, dim);
            Eigen::MatrixXd big_w = Eigen::MatrixXd::Zero(dim, dim);
            for (Eigen::Index o = 0; o < dim; o += 4) {
                big_a.block<4, 4>(o, o) = a;
                big_w.block<4, 4>(o, o) = w;
            }
            st.joint = kf_predict(st.joint, big_a, big_w);
        }
        for (const auto& f : features)
            if (f.birth_step == static_cast<std::int64_t>(t)) st.feature_offset[f.feature_id] = append_block(f.prior);

        for (const auto& scan : scans_per_step[t]) {
            require(scan.origins.size() == scan.v2f.size(), "genie_central_kf: scan without origin labels");
            const auto vo = st.vehicle_offset.find(scan.vehicle_id);
            if (vo == st.vehicle_offset.end()) throw ContractViolation("genie_central_kf: unknown vehicle");
            std::vector<std::pair<Vec2, Eigen::Index>> rows; // measurement, feature offset (-1: GNSS)
            if (scan.gnss) rows.emplace_back(*scan.gnss, -1);
            for (std::size_t k = 0; k < scan.v2f.size(); ++k) {
                if (scan.origins[k] < 0) continue;
                const auto fo = st.feature_offset.find(scan.origins[k]);
                if (fo == st.feature_offset.end())
                    throw ContractViolation("genie_central_kf: measurement references unknown feature " +
                                            std::to_string(scan.origins[k]));
                rows.emplace_back(scan.v2f[k], fo->second);
            }
            if (rows.empty()) continue;
            const auto dim = st.joint.mean.size();
            const auto nz = static_cast<Eigen::Index>(2 * rows.size());
            Eigen::VectorXd z(nz);
            Eigen::MatrixXd h = Eigen::MatrixXd::Zero(nz, dim);
            Eigen::MatrixXd r = Eigen::MatrixXd::Zero(nz, nz);
            const double gnss_var = models.gnss_for(scan.vehicle_id).sigma2;
            for (std::size_t q = 0; q < rows.size(); ++q) {
                const auto row = static_cast<Eigen::Index>(2 * q);
                z.segment<2>(row) = rows[q].first;
                h.block<2, 4>(row, vo->second) = v2f_vehicle_matrix();
                if (rows[q].second < 0) {
                    r.block<2, 2>(row, row) = gnss_var * Mat2::Identity();
                } else {
                    h.block<2, 4>(row, rows[q].second) = v2f_feature_matrix();
                    r.block<2, 2>(row, row) = models.v2f.noise_cov();
                }
            }
            st.joint = kf_update(st.joint, z, h, r, "genie_central_kf").posterior;
        }
        out.push_back(st);
    }
    return out;
}

/// Sorted empirical CDF.
class EmpiricalCdf {
public:
    explicit EmpiricalCdf(std::vector<double> samples) : sorted_(std::move(samples)) {
        require(!sorted_.empty(), "error_cdf: empty error list");
        std::sort(sorted_.begin(), sorted_.end());
    }

    /// Fraction of samples <= x.
    [[nodiscard]] double operator()(double x) const {
        const auto it = std::upper_bound(sorted_.begin(), sorted_.end(), x);
        return static_cast<double>(it - sorted_.begin()) / static_cast<double>(sorted_.size());
    }

    /// Smallest sample whose CDF value reaches q.
    [[nodiscard]] double quantile(double q) const {
        require(q >= 0.0 && q <= 1.0, "quantile must be in [0, 1]");
        const auto n = static_cast<double>(sorted_.size());
        auto idx = static_cast<std::size_t>(std::ceil(q * n - 1e-9));
        idx = std::clamp<std::size_t>(idx, 1, sorted_.size());
        return sorted_[idx - 1];
    }

    [[nodiscard]] const std::vector<double>& samples() const { return sorted_; }

private:
    std::vector<double> sorted_;
};

inline EmpiricalCdf error_cdf(std::vector<double> errors) { return EmpiricalCdf(std::move(errors)); }

} // namespace slat
