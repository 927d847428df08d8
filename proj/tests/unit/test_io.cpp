#include "helpers.hpp"
#include "slat/config.hpp"
#include "slat/report.hpp"

#include <catch_amalgamated.hpp>

using namespace slat;
using testutil::kCases;

namespace {

PmbState random_state(testutil::Rng& rng) {
    PmbState s;
    s.time_step = static_cast<std::int64_t>(rng() % 400);
    const int n = static_cast<int>(rng() % 5);
    for (int i = 0; i < n; ++i)
        s.detected.push_back({i * 3 + 1, testutil::uniform(rng, 0.0, 1.0), testutil::random_gaussian<4>(rng, 100.0, 1e-4, 1e4)});
    s.next_id = n == 0 ? 0 : s.detected.back().id + 1;
    const int m = static_cast<int>(rng() % 4);
    for (int c = 0; c < m; ++c)
        s.undetected.gm.components.push_back({testutil::uniform(rng, -30.0, 3.0), testutil::random_gaussian<4>(rng, 100.0, 1e-2, 1e4)});
    for (int id = 1; id <= 1 + static_cast<int>(rng() % 3); ++id)
        s.vehicles.emplace(id, VehicleBelief{id, testutil::random_gaussian<4>(rng, 100.0, 1e-6, 20.0)});
    return s;
}

const char* const kMinimalConfig = R"({
  "scenario": {"duration_steps": 30, "feature_count": 2, "p_detect": 0.9},
  "variants": [{"name": "proposed", "variant": "proposed"}],
  "n_runs": 2,
  "seed": 7
})";

std::vector<std::string> csv_header(const std::string& csv) { return {csv.substr(0, csv.find('\n'))}; }

} // namespace

TEST_CASE("PmbState record", "[io]") {
    testutil::Rng rng(301);
    const auto s = random_state(rng);
    const json j = s;
    std::vector<std::string> keys;
    for (const auto& [k, v] : j.items()) keys.push_back(k);
    std::sort(keys.begin(), keys.end());
    CHECK(keys == std::vector<std::string>{"detected", "time_step", "undetected", "vehicles"});
    CHECK(json::parse(j.dump()).get<PmbState>() == s);
}

TEST_CASE("scan and truth records round-trip", "[io]") {
    ScenarioSpec spec;
    spec.duration_steps = 30;
    const auto truth = generate_trajectories(spec, 3);
    const auto scans = generate_scans(truth, spec, 3);
    CHECK(json::parse(json(truth).dump()).get<GroundTruth>() == truth);
    for (const auto& step : scans)
        for (const auto& s : step) REQUIRE(json::parse(json(s).dump()).get<ScanRecord>() == s);
    ScanRecord no_fix{4, 2, std::nullopt, {}, {}};
    CHECK(json(no_fix).at("gnss").is_null());
    CHECK(json(no_fix).get<ScanRecord>() == no_fix);
}

TEST_CASE("parse_config", "[io][config]") {
    SECTION("minimal config") {
        const auto c = parse_config(kMinimalConfig);
        CHECK(c.scenario.duration_steps == 30);
        CHECK(c.seed_list() == std::vector<std::uint64_t>{7, 8});
        CHECK_FALSE(c.seed_derived);
        CHECK(c.variants.size() == 1);
        CHECK(c.baselines.local_kf);
    }
    SECTION("out-of-range value names the field and its line") {
        const std::string text = "{\n  \"scenario\": {\n    \"feature_count\": 2,\n    \"p_detect\": 1.3\n  }\n}";
        try {
            parse_config(text);
            FAIL("no error");
        } catch (const ConfigError& e) {
            CHECK(e.field() == "scenario.p_detect");
            CHECK(e.line() == 4);
            CHECK_THAT(e.what(), Catch::Matchers::ContainsSubstring("p_detect"));
            CHECK_THAT(e.what(), Catch::Matchers::ContainsSubstring("line 4"));
        }
    }
    SECTION("unknown keys are rejected") {
        CHECK_THROWS_AS(parse_config(R"({"scenario": {"p_detec": 0.9}})"), ConfigError);
        CHECK_THROWS_AS(parse_config(R"({"runs": 3})"), ConfigError);
    }
    SECTION("type errors and structural rules") {
        CHECK_THROWS_AS(parse_config(R"({"n_runs": "three"})"), ConfigError);
        CHECK_THROWS_AS(parse_config(R"({"variants": [{"variant": "tombp1", "sensor_update": true}]})"), ConfigError);
        CHECK_THROWS_AS(parse_config(R"({"variants": [{"name": "a"}, {"name": "a"}]})"), ConfigError);
        CHECK_THROWS_AS(parse_config(R"({"variants": [{"name": "local_kf"}]})"), ConfigError);
        CHECK_THROWS_AS(parse_config(R"({"variants": [], "baselines": {"local_kf": false}})"), ConfigError);
        CHECK_THROWS_AS(parse_config(R"({"sweep": {"parameter": "sigma_g2", "values": []}})"), ConfigError);
        CHECK_THROWS_AS(parse_config(R"({"variants": [{"ppp_max_components": -1}]})"), ConfigError);
    }
    SECTION("malformed JSON reports a line") {
        try {
            parse_config("{\n  \"n_runs\": 2,\n  \"seed\": \n}");
            FAIL("no error");
        } catch (const ConfigError& e) {
            CHECK(e.line() == 4);
        }
    }
    SECTION("missing seed is derived from the config") {
        const auto a = parse_config(R"({"n_runs": 2})");
        const auto b = parse_config(R"({"n_runs": 2})");
        REQUIRE(a.seed.has_value());
        CHECK(a.seed_derived);
        CHECK(a.seed == b.seed);
        CHECK(parse_config(R"({"n_runs": 2, "scenario": {"clutter_rate": 5}})").seed != a.seed);
        CHECK(manifest_json(a).at("seed_derived") == true);
        CHECK(manifest_json(a).at("seeds") == json(a.seed_list()));
    }
}

TEST_CASE("config hash", "[io][config]") {
    const auto base = parse_config(kMinimalConfig);
    CHECK(config_hash(parse_config(kMinimalConfig)) == config_hash(base));
    // Formatting, key order, defaults spelled out and the output location do not matter.
    const auto reordered = parse_config(
        R"({"seed": 7, "n_runs": 2, "output_dir": "elsewhere", "variants": [{"variant": "proposed", "name": "proposed", "r_certain": 0.6}],
            "scenario": {"p_detect": 0.9, "feature_count": 2, "duration_steps": 30, "dt": 0.5}})");
    CHECK(config_hash(reordered) == config_hash(base));
    CHECK(config_hash(parse_config(R"({"scenario": {"duration_steps": 30, "feature_count": 2, "p_detect": 0.9}, "variants": [{"name": "proposed"}], "n_runs": 2, "seed": 8})")) !=
          config_hash(base));
    CHECK(hex64(0xabcULL) == "0000000000000abc");
}

TEST_CASE("property: every meaningful field change moves the config hash", "[io][config][property]") {
    testutil::Rng rng(307);
    const json base = json::parse(kMinimalConfig);
    const auto base_hash = config_hash(parse_config(base.dump()));
    const std::vector<std::string> scenario_fields{"dt", "accel_psd", "vehicle_prior_velocity_var", "feature_init_var",
                                                   "sigma_v2f2", "clutter_rate", "r_max", "birth_weight",
                                                   "initial_unknown_weight"};
    const std::vector<std::string> variant_fields{"r_certain", "gating_threshold", "bp_tol", "r_prune",
                                                  "ppp_merge_threshold"};
    std::set<std::uint64_t> seen{base_hash};
    for (int c = 0; c < kCases; ++c) {
        json j = base;
        const double v = testutil::uniform(rng, 0.01, 0.99);
        switch (rng() % 5) {
        case 0: j["scenario"][scenario_fields[rng() % scenario_fields.size()]] = v; break;
        case 1: j["variants"][0][variant_fields[rng() % variant_fields.size()]] = v; break;
        case 2: j["scenario"]["p_detect"] = v; break;
        case 3: j["seed"] = 8 + rng() % 100000; break;
        default: j["r_estimate"] = v; break;
        }
        const auto h = config_hash(parse_config(j.dump()));
        REQUIRE(h != base_hash);
        seen.insert(h);
        j["output_dir"] = "run_" + std::to_string(c);
        REQUIRE(config_hash(parse_config(j.dump(static_cast<int>(rng() % 4)))) == h);
    }
    CHECK(seen.size() > kCases / 2);
}

TEST_CASE("property: PmbState records round-trip exactly", "[io][property]") {
    testutil::Rng rng(311);
    for (int c = 0; c < kCases; ++c) {
        const auto s = random_state(rng);
        REQUIRE(json::parse(json(s).dump()).get<PmbState>() == s);
    }
}

TEST_CASE("CSV schemas", "[io][report]") {
    auto c = parse_config(kMinimalConfig);
    c.scenario.duration_steps = 5;
    c.n_runs = 1;
    const auto results = run_monte_carlo(c.monte_carlo());
    std::ostringstream ospa_os, err_os, cdf_os;
    write_ospa_csv(ospa_os, results, c);
    write_vehicle_error_csv(err_os, results, c);
    write_cdf_csv(cdf_os, results, c);
    const auto ospa_csv = ospa_os.str(), err_csv = err_os.str(), cdf_csv = cdf_os.str();
    const auto lines = [](const std::string& text) { return std::count(text.begin(), text.end(), '\n'); };
    CHECK(csv_header(ospa_os.str())[0] == "sweep_index,sweep_value,variant,run_id,t,ospa_m");
    CHECK(csv_header(err_os.str())[0] == "sweep_index,sweep_value,filter,run_id,t,vehicle_id,pos_error_m");
    CHECK(csv_header(cdf_os.str())[0] == "sweep_index,sweep_value,filter,vehicle_id,quantile,error_m");
    // 5 per-step rows plus one aggregate row.
    CHECK(lines(ospa_csv) == 1 + 5 + 1);
    // proposed and local_kf, one vehicle, 5 steps.
    CHECK(lines(err_csv) == 1 + 2 * 5);
    CHECK(lines(cdf_csv) == 1 + 2 * 100);
    CHECK(ospa_csv.find("0,none,proposed,all,all,") != std::string::npos);
}
