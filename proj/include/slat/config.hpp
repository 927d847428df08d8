#pragma once

#include "slat/io.hpp"

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace slat {

/// Invalid configuration; `line` is 1-based, 0 when unknown.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string field, int line, const std::string& message)
        : std::runtime_error(message), field_(std::move(field)), line_(line) {}
    [[nodiscard]] const std::string& field() const { return field_; }
    [[nodiscard]] int line() const { return line_; }

private:
    std::string field_;
    int line_;
};

struct ExperimentConfig {
    ScenarioSpec scenario;
    std::vector<NamedFilter> variants;
    Baselines baselines;
    int n_runs = 1;
    std::optional<std::uint64_t> seed;
    std::vector<std::uint64_t> seeds; ///< explicit list; overrides seed/n_runs when non-empty
    bool seed_derived = false;
    Sweep sweep;
    OspaParams ospa;
    double r_estimate = 0.5;
    std::string output_dir = "out";

    /// Seeds actually used: the explicit list, or seed, seed + 1, ...
    [[nodiscard]] std::vector<std::uint64_t> seed_list() const {
        if (!seeds.empty()) return seeds;
        std::vector<std::uint64_t> out;
        for (int i = 0; i < n_runs; ++i) out.push_back(seed.value_or(0) + static_cast<std::uint64_t>(i));
        return out;
    }

    [[nodiscard]] MonteCarloSpec monte_carlo() const {
        return {scenario, variants, baselines, sweep, seed_list(), ospa, r_estimate};
    }
};

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string sweep_parameter_name(SweepParameter p) {
    switch (p) {
    case SweepParameter::none: return "none";
    case SweepParameter::sigma_g2: return "sigma_g2";
    case SweepParameter::sigma_v2f2: return "sigma_v2f2";
    }
    return "none";
}

/// Fully defaulted record of everything that affects results (no output
/// location, no parallelism). Equal configs give equal canonical records.
inline json canonical_json(const ExperimentConfig& c, bool with_seeds = true) {
    json variants = json::array();
    for (const auto& f : c.variants) variants.push_back(filter_to_json(f));
    json sweep{{"parameter", sweep_parameter_name(c.sweep.parameter)}, {"values", c.sweep.values}};
    sweep["vehicle_id"] = c.sweep.vehicle_id ? json(*c.sweep.vehicle_id) : json(nullptr);
    json out{{"scenario", scenario_to_json(c.scenario)},
             {"variants", variants},
             {"baselines", {{"local_kf", c.baselines.local_kf}, {"genie_kf", c.baselines.genie_kf}}},
             {"sweep", sweep},
             {"ospa", {{"cutoff", c.ospa.cutoff}, {"order", c.ospa.order}}},
             {"r_estimate", c.r_estimate}};
    if (with_seeds) out["seeds"] = c.seed_list();
    return out;
}

inline std::uint64_t config_hash(const ExperimentConfig& c) { return fnv1a64(canonical_json(c).dump()); }

inline std::string hex64(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    return s;
}

namespace detail {

/// 1-based line of the character at `offset`.
inline int line_at(const std::string& text, std::size_t offset) {
    offset = std::min(offset, text.size());
    return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

/// Best-effort source line of a dotted field path such as
/// "variants[1].r_certain": each key is searched after its parent's position.
inline int line_of_field(const std::string& text, const std::string& path) {
    std::size_t pos = 0;
    std::size_t start = 0;
    bool found = false;
    while (start <= path.size()) {
        auto end = path.find('.', start);
        if (end == std::string::npos) end = path.size();
        std::string part = path.substr(start, end - start);
        int index = -1;
        if (auto br = part.find('['); br != std::string::npos) {
            index = std::stoi(part.substr(br + 1));
            part = part.substr(0, br);
        }
        const auto hit = text.find("\"" + part + "\"", pos);
        if (hit == std::string::npos) break;
        pos = hit + part.size() + 2;
        found = true;
        // Array elements are flat objects: the index-th '{' after the key opens element `index`.
        for (int i = 0; i <= index; ++i) {
            const auto brace = text.find('{', pos);
            if (brace == std::string::npos) break;
            pos = brace + 1;
        }
        start = end + 1;
    }
    return found ? line_at(text, pos) : 0;
}

class ConfigReader {
public:
    explicit ConfigReader(const std::string& text) : text_(text) {}

    [[noreturn]] void fail(const std::string& field, const std::string& what) const {
        const int line = line_of_field(text_, field);
        throw ConfigError(field, line, (line > 0 ? "line " + std::to_string(line) + ": " : std::string()) + field + ": " + what);
    }

    void check_keys(const json& obj, const std::string& prefix, std::initializer_list<const char*> allowed) const {
        if (!obj.is_object()) fail(prefix.empty() ? "config" : prefix, "expected an object");
        std::set<std::string> ok(allowed.begin(), allowed.end());
        for (const auto& [key, value] : obj.items())
            if (!ok.count(key)) fail(join(prefix, key), "unknown field");
    }

    static std::string join(const std::string& prefix, const std::string& key) {
        return prefix.empty() ? key : prefix + "." + key;
    }

    template <typename T>
    void read(const json& obj, const std::string& prefix, const char* key, T& out) const {
        if (!obj.contains(key)) return;
        try {
            out = obj.at(key).get<T>();
        } catch (const json::exception&) {
            fail(join(prefix, key), "wrong type");
        }
    }

    void read_number(const json& obj, const std::string& prefix, const char* key, double& out) const {
        if (!obj.contains(key)) return;
        if (!obj.at(key).is_number()) fail(join(prefix, key), "expected a number");
        out = obj.at(key).get<double>();
    }

    template <int N>
    void read_vec(const json& obj, const std::string& prefix, const char* key, Vec<N>& out) const {
        if (!obj.contains(key)) return;
        const auto& j = obj.at(key);
        if (!j.is_array() || j.size() != static_cast<std::size_t>(N))
            fail(join(prefix, key), "expected an array of " + std::to_string(N) + " numbers");
        for (std::size_t i = 0; i < j.size(); ++i) {
            if (!j[i].is_number()) fail(join(prefix, key), "expected numbers");
            out[static_cast<Eigen::Index>(i)] = j[i].get<double>();
        }
    }

    void require_that(bool ok, const std::string& field, const std::string& what) const {
        if (!ok) fail(field, what);
    }

private:
    const std::string& text_;
};

inline std::string fmt_value(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

} // namespace detail

/// Parses and validates an experiment configuration. Throws ConfigError with
/// a line-anchored message on malformed JSON, unknown fields, wrong types or
/// out-of-range values.
inline ExperimentConfig parse_config(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        const int line = detail::line_at(text, e.byte == 0 ? 0 : e.byte - 1);
        throw ConfigError("config", line, "line " + std::to_string(line) + ": malformed JSON (byte " +
                                              std::to_string(e.byte) + "): " + e.what());
    }
    const detail::ConfigReader rd(text);
    rd.check_keys(root, "", {"scenario", "variants", "baselines", "n_runs", "seed", "seeds", "sweep", "ospa",
                             "r_estimate", "output_dir"});
    ExperimentConfig c;

    if (root.contains("scenario")) {
        const auto& s = root.at("scenario");
        rd.check_keys(s, "scenario",
                      {"duration_steps", "dt", "accel_psd", "vehicles", "vehicle_prior_velocity_var", "feature_count",
                       "birth_interval", "anchor_step", "feature_init_var", "sigma_v2f2", "p_detect", "clutter_rate",
                       "r_max", "p_survive", "birth_weight", "initial_unknown_weight", "intensity_spread_var"});
        auto& sc = c.scenario;
        rd.read(s, "scenario", "duration_steps", sc.duration_steps);
        rd.read_number(s, "scenario", "dt", sc.dt);
        rd.read_number(s, "scenario", "accel_psd", sc.accel_psd);
        rd.read_number(s, "scenario", "vehicle_prior_velocity_var", sc.vehicle_prior_velocity_var);
        rd.read(s, "scenario", "feature_count", sc.feature_count);
        rd.read(s, "scenario", "birth_interval", sc.birth_interval);
        rd.read(s, "scenario", "anchor_step", sc.anchor_step);
        rd.read_number(s, "scenario", "feature_init_var", sc.feature_init_var);
        rd.read_number(s, "scenario", "sigma_v2f2", sc.sigma_v2f2);
        rd.read_number(s, "scenario", "p_detect", sc.p_detect);
        rd.read_number(s, "scenario", "clutter_rate", sc.clutter_rate);
        rd.read_number(s, "scenario", "r_max", sc.r_max);
        rd.read_number(s, "scenario", "p_survive", sc.p_survive);
        rd.read_number(s, "scenario", "birth_weight", sc.birth_weight);
        rd.read_number(s, "scenario", "initial_unknown_weight", sc.initial_unknown_weight);
        rd.read_vec<4>(s, "scenario", "intensity_spread_var", sc.intensity_spread_var);
        if (s.contains("vehicles")) {
            const auto& vs = s.at("vehicles");
            rd.require_that(vs.is_array() && !vs.empty(), "scenario.vehicles", "expected a non-empty array");
            sc.vehicles.clear();
            std::set<int> ids;
            for (std::size_t i = 0; i < vs.size(); ++i) {
                const std::string p = "scenario.vehicles[" + std::to_string(i) + "]";
                rd.check_keys(vs[i], p, {"id", "initial_state", "sigma_g2"});
                VehicleSpec v;
                v.id = static_cast<int>(i) + 1;
                rd.read(vs[i], p, "id", v.id);
                rd.read_vec<4>(vs[i], p, "initial_state", v.initial_state);
                rd.read_number(vs[i], p, "sigma_g2", v.sigma_g2);
                rd.require_that(v.sigma_g2 > 0.0, p + ".sigma_g2", "must be > 0, got " + detail::fmt_value(v.sigma_g2));
                rd.require_that(ids.insert(v.id).second, p + ".id", "duplicate vehicle id");
                sc.vehicles.push_back(v);
            }
        }
        rd.require_that(sc.duration_steps >= 1, "scenario.duration_steps", "must be >= 1");
        rd.require_that(sc.dt > 0.0, "scenario.dt", "must be > 0, got " + detail::fmt_value(sc.dt));
        rd.require_that(sc.accel_psd >= 0.0, "scenario.accel_psd", "must be >= 0");
        rd.require_that(sc.vehicle_prior_velocity_var > 0.0, "scenario.vehicle_prior_velocity_var", "must be > 0");
        rd.require_that(sc.feature_count >= 0, "scenario.feature_count", "must be >= 0");
        rd.require_that(sc.birth_interval >= 0, "scenario.birth_interval", "must be >= 0");
        rd.require_that(sc.feature_count == 0 || sc.birth_step(sc.feature_count - 1) < sc.duration_steps,
                        "scenario.birth_interval", "every feature birth step must fall within duration_steps");
        rd.require_that(sc.anchor_step >= 0, "scenario.anchor_step", "must be >= 0");
        rd.require_that(sc.feature_init_var > 0.0, "scenario.feature_init_var", "must be > 0");
        rd.require_that(sc.sigma_v2f2 > 0.0, "scenario.sigma_v2f2", "must be > 0, got " + detail::fmt_value(sc.sigma_v2f2));
        rd.require_that(sc.p_detect > 0.0 && sc.p_detect <= 1.0, "scenario.p_detect",
                        "must be in (0, 1], got " + detail::fmt_value(sc.p_detect));
        rd.require_that(sc.clutter_rate >= 0.0, "scenario.clutter_rate", "must be >= 0");
        rd.require_that(sc.r_max > 0.0, "scenario.r_max", "must be > 0");
        rd.require_that(sc.p_survive > 0.0 && sc.p_survive <= 1.0, "scenario.p_survive",
                        "must be in (0, 1], got " + detail::fmt_value(sc.p_survive));
        rd.require_that(sc.birth_weight >= 0.0, "scenario.birth_weight", "must be >= 0");
        rd.require_that(sc.initial_unknown_weight >= 0.0, "scenario.initial_unknown_weight", "must be >= 0");
        rd.require_that((sc.intensity_spread_var.array() > 0.0).all(), "scenario.intensity_spread_var",
                        "entries must be > 0");
    }

    if (root.contains("variants")) {
        const auto& vs = root.at("variants");
        rd.require_that(vs.is_array(), "variants", "expected an array");
        std::set<std::string> names;
        for (std::size_t i = 0; i < vs.size(); ++i) {
            const std::string p = "variants[" + std::to_string(i) + "]";
            rd.check_keys(vs[i], p,
                          {"name", "variant", "sensor_update", "r_certain", "gating_threshold", "bp_max_iters", "bp_tol",
                           "exact_association_max", "r_prune", "recycle", "ppp_prune_weight", "ppp_merge_threshold",
                           "ppp_max_components"});
            NamedFilter f;
            std::string kind = "proposed";
            rd.read(vs[i], p, "variant", kind);
            const auto v = parse_variant(kind);
            rd.require_that(v.has_value(), p + ".variant", "must be one of proposed, tombp1, tombp2; got '" + kind + "'");
            f.config.variant = *v;
            f.name = kind;
            rd.read(vs[i], p, "name", f.name);
            rd.require_that(!f.name.empty() && f.name.find_first_of(",\"\n") == std::string::npos, p + ".name",
                            "must be a non-empty name without commas or quotes");
            rd.require_that(f.name != "local_kf" && f.name != "genie_kf", p + ".name", "reserved for baselines");
            rd.require_that(names.insert(f.name).second, p + ".name", "duplicate variant name");
            auto& fc = f.config;
            rd.read(vs[i], p, "sensor_update", fc.sensor_update_enabled);
            rd.read_number(vs[i], p, "r_certain", fc.r_certain);
            rd.read_number(vs[i], p, "gating_threshold", fc.gating_threshold);
            rd.read(vs[i], p, "bp_max_iters", fc.bp.max_iters);
            rd.read_number(vs[i], p, "bp_tol", fc.bp.tol);
            rd.read(vs[i], p, "exact_association_max", fc.exact_association_max);
            rd.read_number(vs[i], p, "r_prune", fc.r_prune);
            rd.read(vs[i], p, "recycle", fc.recycle);
            double prune_w = std::exp(fc.ppp.prune_log_threshold);
            rd.read_number(vs[i], p, "ppp_prune_weight", prune_w);
            rd.require_that(prune_w >= 0.0, p + ".ppp_prune_weight", "must be >= 0");
            fc.ppp.prune_log_threshold = prune_w > 0.0 ? std::log(prune_w) : kNegInf;
            rd.read_number(vs[i], p, "ppp_merge_threshold", fc.ppp.merge_threshold);
            int max_components = static_cast<int>(fc.ppp.max_components);
            rd.read(vs[i], p, "ppp_max_components", max_components);
            rd.require_that(max_components > 0, p + ".ppp_max_components", "must be > 0");
            fc.ppp.max_components = static_cast<std::size_t>(max_components);
            rd.require_that(fc.r_certain > 0.0 && fc.r_certain < 1.0, p + ".r_certain", "must be in (0, 1)");
            rd.require_that(fc.gating_threshold > 0.0, p + ".gating_threshold", "must be > 0");
            rd.require_that(fc.bp.max_iters > 0, p + ".bp_max_iters", "must be > 0");
            rd.require_that(fc.bp.tol > 0.0, p + ".bp_tol", "must be > 0");
            rd.require_that(fc.exact_association_max >= 0 && fc.exact_association_max <= kExactMaxSize,
                            p + ".exact_association_max", "must be in [0, 10]");
            rd.require_that(fc.r_prune >= 0.0 && fc.r_prune < 1.0, p + ".r_prune", "must be in [0, 1)");
            rd.require_that(fc.ppp.merge_threshold >= 0.0, p + ".ppp_merge_threshold", "must be >= 0");
            rd.require_that(!(fc.sensor_update_enabled && fc.variant != Variant::proposed), p + ".sensor_update",
                            "only the proposed variant updates the vehicle state from V2F measurements");
            c.variants.push_back(std::move(f));
        }
    }

    if (root.contains("baselines")) {
        const auto& b = root.at("baselines");
        rd.check_keys(b, "baselines", {"local_kf", "genie_kf"});
        rd.read(b, "baselines", "local_kf", c.baselines.local_kf);
        rd.read(b, "baselines", "genie_kf", c.baselines.genie_kf);
    }
    rd.require_that(!c.variants.empty() || c.baselines.local_kf || c.baselines.genie_kf, "variants",
                    "at least one variant or baseline must be enabled");

    rd.read(root, "", "n_runs", c.n_runs);
    rd.require_that(c.n_runs >= 1, "n_runs", "must be >= 1");
    if (root.contains("seed")) {
        std::uint64_t s = 0;
        rd.read(root, "", "seed", s);
        c.seed = s;
    }
    rd.read(root, "", "seeds", c.seeds);
    if (!c.seeds.empty()) c.n_runs = static_cast<int>(c.seeds.size());

    if (root.contains("sweep")) {
        const auto& s = root.at("sweep");
        rd.check_keys(s, "sweep", {"parameter", "values", "vehicle_id"});
        std::string param = "none";
        rd.read(s, "sweep", "parameter", param);
        if (param == "none") c.sweep.parameter = SweepParameter::none;
        else if (param == "sigma_g2") c.sweep.parameter = SweepParameter::sigma_g2;
        else if (param == "sigma_v2f2") c.sweep.parameter = SweepParameter::sigma_v2f2;
        else rd.fail("sweep.parameter", "must be one of none, sigma_g2, sigma_v2f2; got '" + param + "'");
        rd.read(s, "sweep", "values", c.sweep.values);
        if (s.contains("vehicle_id")) {
            int id = 0;
            rd.read(s, "sweep", "vehicle_id", id);
            c.sweep.vehicle_id = id;
        }
        rd.require_that(c.sweep.parameter == SweepParameter::none || !c.sweep.values.empty(), "sweep.values",
                        "a sweep needs at least one value");
        for (double v : c.sweep.values) rd.require_that(v > 0.0, "sweep.values", "variances must be > 0");
    }

    if (root.contains("ospa")) {
        const auto& o = root.at("ospa");
        rd.check_keys(o, "ospa", {"cutoff", "order"});
        rd.read_number(o, "ospa", "cutoff", c.ospa.cutoff);
        rd.read_number(o, "ospa", "order", c.ospa.order);
        rd.require_that(c.ospa.cutoff > 0.0, "ospa.cutoff", "must be > 0");
        rd.require_that(c.ospa.order >= 1.0, "ospa.order", "must be >= 1");
    }
    rd.read_number(root, "", "r_estimate", c.r_estimate);
    rd.require_that(c.r_estimate > 0.0 && c.r_estimate < 1.0, "r_estimate", "must be in (0, 1)");
    rd.read(root, "", "output_dir", c.output_dir);

    if (!c.seed && c.seeds.empty()) {
        // Derived from everything else, so it is stable for a given config.
        c.seed = fnv1a64(canonical_json(c, false).dump()) & 0xffffffffULL;
        c.seed_derived = true;
    }
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("config", 0, "cannot read config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

} // namespace slat
