#pragma once

// JSON records for beliefs, scans, ground truth and scenario parameters.

#include "slat/experiment.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace slat {

using nlohmann::json;

template <typename Derived>
json matrix_to_json(const Eigen::MatrixBase<Derived>& m) {
    if (m.cols() == 1) {
        json out = json::array();
        for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(m(i, 0));
        return out;
    }
    json out = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        out.push_back(std::move(row));
    }
    return out;
}

template <int N>
Vec<N> vec_from_json(const json& j) {
    if (!j.is_array() || (N != Eigen::Dynamic && j.size() != static_cast<std::size_t>(N)))
        throw ContractViolation("expected a numeric array of length " + std::to_string(N));
    Vec<N> v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
    return v;
}

template <int N>
Mat<N, N> mat_from_json(const json& j) {
    if (!j.is_array() || (N != Eigen::Dynamic && j.size() != static_cast<std::size_t>(N)))
        throw ContractViolation("expected a square numeric matrix of size " + std::to_string(N));
    const auto n = static_cast<Eigen::Index>(j.size());
    Mat<N, N> m(n, n);
    for (Eigen::Index r = 0; r < n; ++r) {
        const auto& row = j[static_cast<std::size_t>(r)];
        if (!row.is_array() || row.size() != j.size()) throw ContractViolation("matrix row has wrong length");
        for (Eigen::Index c = 0; c < n; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
    return m;
}

template <int N>
void to_json(json& j, const GaussianDensity<N>& g) {
    j = json{{"mean", matrix_to_json(g.mean)}, {"cov", matrix_to_json(g.cov)}};
}
template <int N>
void from_json(const json& j, GaussianDensity<N>& g) {
    g.mean = vec_from_json<N>(j.at("mean"));
    g.cov = mat_from_json<N>(j.at("cov"));
}

inline void to_json(json& j, const BernoulliComponent& b) {
    j = json{{"id", b.id}, {"r", b.r}, {"pdf", b.pdf}};
}
inline void from_json(const json& j, BernoulliComponent& b) {
    b.id = j.at("id").get<std::int64_t>();
    b.r = j.at("r").get<double>();
    b.pdf = j.at("pdf").get<Gaussian4>();
}

inline void to_json(json& j, const PoissonIntensity& d) {
    j = json::array();
    for (const auto& c : d.gm.components) {
        // -inf is not representable in JSON; such components carry no mass.
        if (c.log_weight == kNegInf) continue;
        j.push_back(json{{"log_weight", c.log_weight}, {"density", c.density}});
    }
}
inline void from_json(const json& j, PoissonIntensity& d) {
    d.gm.components.clear();
    for (const auto& c : j) d.gm.components.push_back({c.at("log_weight").get<double>(), c.at("density").get<Gaussian4>()});
}

/// Self-describing PMB record: fields `time_step, undetected, detected, vehicles`.
inline void to_json(json& j, const PmbState& s) {
    json vehicles = json::array();
    for (const auto& [id, v] : s.vehicles) vehicles.push_back(json{{"vehicle_id", id}, {"state", v.state}});
    j = json{{"time_step", s.time_step}, {"undetected", s.undetected}, {"detected", s.detected}, {"vehicles", vehicles}};
}
inline void from_json(const json& j, PmbState& s) {
    s.time_step = j.at("time_step").get<std::int64_t>();
    s.undetected = j.at("undetected").get<PoissonIntensity>();
    s.detected = j.at("detected").get<std::vector<BernoulliComponent>>();
    s.vehicles.clear();
    for (const auto& v : j.at("vehicles")) {
        const int id = v.at("vehicle_id").get<int>();
        s.vehicles.emplace(id, VehicleBelief{id, v.at("state").get<Gaussian4>()});
    }
    s.next_id = 0;
    for (const auto& b : s.detected) s.next_id = std::max(s.next_id, b.id + 1);
}

inline void to_json(json& j, const ScanRecord& s) {
    json v2f = json::array();
    for (const auto& z : s.v2f) v2f.push_back(matrix_to_json(z));
    j = json{{"time_step", s.time_step},
             {"vehicle_id", s.vehicle_id},
             {"gnss", s.gnss ? matrix_to_json(*s.gnss) : json(nullptr)},
             {"v2f", v2f},
             {"origins", s.origins}};
}
inline void from_json(const json& j, ScanRecord& s) {
    s.time_step = j.at("time_step").get<std::int64_t>();
    s.vehicle_id = j.at("vehicle_id").get<int>();
    const auto& g = j.at("gnss");
    s.gnss = g.is_null() ? std::nullopt : std::optional<Vec2>(vec_from_json<2>(g));
    s.v2f.clear();
    for (const auto& z : j.at("v2f")) s.v2f.push_back(vec_from_json<2>(z));
    s.origins = j.value("origins", std::vector<int>{});
    if (!s.origins.empty() && s.origins.size() != s.v2f.size())
        throw ContractViolation("scan origins do not match its V2F measurements");
}

inline void to_json(json& j, const GroundTruth& t) {
    json vehicles = json::array();
    for (const auto& [id, traj] : t.vehicles) {
        json states = json::array();
        for (const auto& s : traj) states.push_back(matrix_to_json(s));
        vehicles.push_back(json{{"id", id}, {"states", states}});
    }
    json features = json::array();
    for (const auto& f : t.features) {
        json states = json::array();
        for (const auto& s : f.states) states.push_back(matrix_to_json(s));
        features.push_back(json{{"id", f.id}, {"birth_step", f.birth_step}, {"states", states}});
    }
    j = json{{"vehicles", vehicles}, {"features", features}};
}
inline void from_json(const json& j, GroundTruth& t) {
    t.vehicles.clear();
    for (const auto& v : j.at("vehicles")) {
        auto& traj = t.vehicles[v.at("id").get<int>()];
        for (const auto& s : v.at("states")) traj.push_back(vec_from_json<4>(s));
    }
    t.features.clear();
    for (const auto& f : j.at("features")) {
        FeatureTruth ft;
        ft.id = f.at("id").get<int>();
        ft.birth_step = f.at("birth_step").get<std::int64_t>();
        for (const auto& s : f.at("states")) ft.states.push_back(vec_from_json<4>(s));
        t.features.push_back(std::move(ft));
    }
}

inline json scenario_to_json(const ScenarioSpec& s) {
    json vehicles = json::array();
    for (const auto& v : s.vehicles)
        vehicles.push_back(json{{"id", v.id}, {"initial_state", matrix_to_json(v.initial_state)}, {"sigma_g2", v.sigma_g2}});
    return json{{"duration_steps", s.duration_steps},
                {"dt", s.dt},
                {"accel_psd", s.accel_psd},
                {"vehicles", vehicles},
                {"vehicle_prior_velocity_var", s.vehicle_prior_velocity_var},
                {"feature_count", s.feature_count},
                {"birth_interval", s.birth_interval},
                {"anchor_step", s.anchor_step},
                {"feature_init_var", s.feature_init_var},
                {"sigma_v2f2", s.sigma_v2f2},
                {"p_detect", s.p_detect},
                {"clutter_rate", s.clutter_rate},
                {"r_max", s.r_max},
                {"p_survive", s.p_survive},
                {"birth_weight", s.birth_weight},
                {"initial_unknown_weight", s.initial_unknown_weight},
                {"intensity_spread_var", matrix_to_json(s.intensity_spread_var)}};
}

inline json filter_to_json(const NamedFilter& f) {
    const auto& c = f.config;
    return json{{"name", f.name},
                {"variant", std::string(to_string(c.variant))},
                {"sensor_update", c.sensor_update_enabled},
                {"r_certain", c.r_certain},
                {"gating_threshold", c.gating_threshold},
                {"bp_max_iters", c.bp.max_iters},
                {"bp_tol", c.bp.tol},
                {"exact_association_max", c.exact_association_max},
                {"r_prune", c.r_prune},
                {"recycle", c.recycle},
                {"ppp_prune_weight", std::exp(c.ppp.prune_log_threshold)},
                {"ppp_merge_threshold", c.ppp.merge_threshold},
                {"ppp_max_components", c.ppp.max_components}};
}

} // namespace slat
