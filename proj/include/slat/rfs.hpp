#pragma once

#include "slat/gaussian.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

namespace slat {

/// One potentially existing feature: existence probability plus the
/// existence-conditioned state density.
struct BernoulliComponent {
    std::int64_t id = 0;
    double r = 0.0;
    Gaussian4 pdf;

    [[nodiscard]] bool is_valid() const { return r >= 0.0 && r <= 1.0 && pdf.is_valid(); }
    bool operator==(const BernoulliComponent&) const = default;
};

/// Clamps an existence probability that drifted outside [0, 1] by rounding.
inline double clamp_probability(double r) {
    assert(r > -1e-12 && r < 1.0 + 1e-12);
    return std::clamp(r, 0.0, 1.0);
}

/// Intensity of the undetected-feature PPP (weights need not sum to one).
struct PoissonIntensity {
    Mixture4 gm;

    [[nodiscard]] double total_weight() const { return gm.empty() ? 0.0 : gm.total_weight(); }
    bool operator==(const PoissonIntensity&) const = default;
};

struct VehicleBelief {
    int vehicle_id = 0;
    Gaussian4 state;

    bool operator==(const VehicleBelief&) const = default;
};

/// Poisson multi-Bernoulli belief over features plus independent vehicle
/// beliefs. Exactly one global hypothesis is represented.
struct PmbState {
    std::int64_t time_step = 0;
    PoissonIntensity undetected;
    std::vector<BernoulliComponent> detected;
    std::map<int, VehicleBelief> vehicles;
    /// Next Bernoulli id; diagnostics only.
    std::int64_t next_id = 0;

    [[nodiscard]] bool ids_unique() const {
        std::vector<std::int64_t> ids;
        ids.reserve(detected.size());
        for (const auto& b : detected) ids.push_back(b.id);
        std::sort(ids.begin(), ids.end());
        return std::adjacent_find(ids.begin(), ids.end()) == ids.end();
    }

    [[nodiscard]] const VehicleBelief& vehicle(int vehicle_id) const;
    [[nodiscard]] VehicleBelief& vehicle(int vehicle_id);

    bool operator==(const PmbState&) const = default;
};

inline const VehicleBelief& PmbState::vehicle(int vehicle_id) const {
    auto it = vehicles.find(vehicle_id);
    if (it == vehicles.end()) throw LookupError("unknown vehicle id " + std::to_string(vehicle_id));
    return it->second;
}

inline VehicleBelief& PmbState::vehicle(int vehicle_id) {
    auto it = vehicles.find(vehicle_id);
    if (it == vehicles.end()) throw LookupError("unknown vehicle id " + std::to_string(vehicle_id));
    return it->second;
}

/// Log-domain single-hypothesis weights of one scan's association problem.
///  - log_miss[i]      Bernoulli i not detected
///  - log_detect(i, k) Bernoulli i generated measurement k
///  - log_new[k]       measurement k is clutter or a newly detected feature
struct AssociationProblem {
    Eigen::VectorXd log_miss;
    Eigen::MatrixXd log_detect;
    Eigen::VectorXd log_new;

    [[nodiscard]] Eigen::Index n() const { return log_miss.size(); }
    [[nodiscard]] Eigen::Index m() const { return log_new.size(); }

    [[nodiscard]] bool is_consistent() const {
        if (log_detect.rows() != n() || log_detect.cols() != m()) return false;
        auto ok = [](double v) { return !std::isnan(v) && v != std::numeric_limits<double>::infinity(); };
        for (Eigen::Index i = 0; i < n(); ++i) {
            if (!ok(log_miss[i])) return false;
            for (Eigen::Index k = 0; k < m(); ++k)
                if (!ok(log_detect(i, k))) return false;
        }
        for (Eigen::Index k = 0; k < m(); ++k)
            if (!ok(log_new[k])) return false;
        return true;
    }
};

/// Means of every Bernoulli whose existence probability strictly exceeds `r_threshold`.
inline std::vector<Vec4> estimate_features(const PmbState& state, double r_threshold = 0.5) {
    require(r_threshold > 0.0 && r_threshold < 1.0, "estimate_features: threshold must be in (0, 1)");
    std::vector<Vec4> out;
    for (const auto& b : state.detected)
        if (b.r > r_threshold) out.push_back(b.pdf.mean);
    return out;
}

/// Drops Bernoullis with r < r_prune. With `recycle`, their existence mass
/// re-enters the undetected intensity as a component of weight r.
inline PmbState recycle_or_prune(PmbState state, double r_prune, bool recycle = false) {
    require(r_prune >= 0.0 && r_prune < 1.0, "recycle_or_prune: r_prune must be in [0, 1)");
    std::vector<BernoulliComponent> kept;
    kept.reserve(state.detected.size());
    for (auto& b : state.detected) {
        if (b.r < r_prune || b.r == 0.0) {
            if (recycle && b.r > 0.0) state.undetected.gm.components.push_back({std::log(b.r), b.pdf});
        } else {
            kept.push_back(std::move(b));
        }
    }
    state.detected = std::move(kept);
    return state;
}

} // namespace slat
