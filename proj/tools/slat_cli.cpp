// Command-line runner: Monte-Carlo batches, scan replay and config validation.

#include "slat/report.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;

/// Bad input from the user (config, scan file, arguments).
struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

unsigned resolve_jobs(int requested) {
    unsigned jobs = requested > 0 ? static_cast<unsigned>(requested) : std::max(1u, std::thread::hardware_concurrency());
    if (const char* cap = std::getenv("SLAT_MAX_JOBS")) {
        const long v = std::strtol(cap, nullptr, 10);
        if (v > 0) jobs = std::min(jobs, static_cast<unsigned>(v));
    }
    return jobs;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

slat::json parse_json_file(const std::string& path) {
    const std::string text = read_file(path);
    try {
        return slat::json::parse(text);
    } catch (const slat::json::parse_error& e) {
        throw InputError(path + ": malformed or truncated JSON at byte " + std::to_string(e.byte) + " of " +
                         std::to_string(text.size()));
    }
}

slat::json scan_file_json(const slat::ExperimentConfig& c, const slat::ScenarioSpec& spec, std::size_t sweep_index,
                          std::size_t run_id, std::uint64_t seed, const slat::GroundTruth& truth,
                          const std::vector<std::vector<slat::ScanRecord>>& scans) {
    slat::json variants = slat::json::array();
    for (const auto& f : c.variants) variants.push_back(slat::filter_to_json(f));
    slat::json steps = slat::json::array();
    for (const auto& step : scans) steps.push_back(step);
    return slat::json{{"format", "slat-scans/1"},
                      {"sweep_index", sweep_index},
                      {"sweep_value", slat::sweep_value_str(c.sweep, sweep_index)},
                      {"run_id", run_id},
                      {"seed", seed},
                      {"scenario", slat::scenario_to_json(spec)},
                      {"variants", variants},
                      {"ospa", {{"cutoff", c.ospa.cutoff}, {"order", c.ospa.order}}},
                      {"r_estimate", c.r_estimate},
                      {"truth", truth},
                      {"scans", steps}};
}

int cmd_validate(const std::string& path) {
    const auto c = slat::load_config(path);
    std::cout << "ok: " << path << " (config hash " << slat::hex64(slat::config_hash(c)) << ", "
              << c.sweep.points() * c.seed_list().size() << " runs)\n";
    return kExitOk;
}

int cmd_run(const std::string& path, int jobs_flag, const std::string& out_flag, bool export_scans) {
    const auto c = slat::load_config(path);
    const fs::path out = out_flag.empty() ? fs::path(c.output_dir) : fs::path(out_flag);
    const unsigned jobs = resolve_jobs(jobs_flag);
    const auto results = slat::run_monte_carlo(c.monte_carlo(), jobs);
    slat::write_reports(out, results, c);
    if (export_scans) {
        const fs::path dir = out / "scans";
        fs::create_directories(dir);
        const auto seeds = c.seed_list();
        for (std::size_t p = 0; p < c.sweep.points(); ++p) {
            const auto spec = slat::apply_sweep(c.scenario, c.sweep, p);
            for (std::size_t r = 0; r < seeds.size(); ++r) {
                const auto truth = slat::generate_trajectories(spec, seeds[r]);
                const auto scans = slat::generate_scans(truth, spec, seeds[r]);
                const auto name = "sweep" + std::to_string(p) + "_run" + std::to_string(r) + ".json";
                slat::write_file(dir / name, scan_file_json(c, spec, p, r, seeds[r], truth, scans).dump() + "\n");
            }
        }
    }
    std::cout << "wrote " << results.size() << " runs to " << out.string() << " (config hash "
              << slat::hex64(slat::config_hash(c)) << ")\n";
    return kExitOk;
}

slat::ScenarioSpec scenario_from_json(const slat::json& j) {
    // Reuse the config parser so scan files get the same validation.
    const auto c = slat::parse_config(slat::json{{"scenario", j}, {"seed", 0}}.dump(1));
    return c.scenario;
}

slat::NamedFilter lookup_variant(const slat::json& file, const std::string& name) {
    for (const auto& v : file.value("variants", slat::json::array())) {
        if (v.value("name", "") != name) continue;
        const auto c = slat::parse_config(slat::json{{"variants", slat::json::array({v})}, {"seed", 0}}.dump(1));
        return c.variants.front();
    }
    const auto base = slat::parse_variant(name);
    if (!base) throw InputError("unknown variant '" + name + "': not in the scan file and not a base variant");
    slat::NamedFilter f;
    f.name = name;
    f.config.variant = *base;
    return f;
}

int cmd_replay(const std::string& path, const std::string& variant, const std::string& out_flag) {
    const auto file = parse_json_file(path);
    slat::ScenarioSpec spec;
    slat::GroundTruth truth;
    std::vector<std::vector<slat::ScanRecord>> scans;
    slat::OspaParams ospa_params;
    double r_estimate = 0.5;
    std::size_t sweep_index = 0;
    std::size_t run_id = 0;
    std::string sweep_val = "none";
    try {
        if (file.value("format", "") != "slat-scans/1") throw InputError(path + ": not a scan file (format field)");
        spec = scenario_from_json(file.at("scenario"));
        truth = file.at("truth").get<slat::GroundTruth>();
        scans = file.at("scans").get<std::vector<std::vector<slat::ScanRecord>>>();
        if (file.contains("ospa")) {
            ospa_params.cutoff = file.at("ospa").at("cutoff").get<double>();
            ospa_params.order = file.at("ospa").at("order").get<double>();
        }
        r_estimate = file.value("r_estimate", 0.5);
        sweep_index = file.value("sweep_index", std::size_t{0});
        run_id = file.value("run_id", std::size_t{0});
        sweep_val = file.value("sweep_value", std::string("none"));
    } catch (const slat::json::exception& e) {
        throw InputError(path + ": " + e.what());
    } catch (const slat::ContractViolation& e) {
        throw InputError(path + ": " + e.what());
    }
    if (static_cast<std::int64_t>(scans.size()) > spec.duration_steps)
        throw InputError(path + ": more scan steps than scenario.duration_steps");
    for (const auto& [id, traj] : truth.vehicles)
        if (traj.size() < scans.size()) throw InputError(path + ": truth shorter than the scan stream");
    const auto filter = lookup_variant(file, variant);

    const fs::path out = out_flag.empty() ? fs::path("replay_out") : fs::path(out_flag);
    fs::create_directories(out);
    std::ofstream snapshots(out / "snapshots.jsonl", std::ios::binary);
    const auto trace = slat::run_pmb_filter(spec, truth, scans, filter, ospa_params, r_estimate,
                                            [&](std::int64_t, const slat::PmbState& s) {
                                                snapshots << slat::json(s).dump() << '\n';
                                            });
    std::ostringstream ospa_os, err_os, order_os;
    slat::write_ospa_header(ospa_os);
    slat::write_vehicle_error_header(err_os);
    slat::write_trace_rows(ospa_os, err_os, sweep_index, sweep_val, run_id, trace);
    order_os << "t,position,vehicle_id,n_v2f,has_gnss\n";
    for (std::size_t t = 0; t < scans.size(); ++t)
        for (std::size_t i = 0; i < scans[t].size(); ++i)
            order_os << t << ',' << i << ',' << scans[t][i].vehicle_id << ',' << scans[t][i].v2f.size() << ','
                     << (scans[t][i].gnss ? 1 : 0) << '\n';
    slat::write_file(out / "ospa.csv", ospa_os.str());
    slat::write_file(out / "vehicle_error.csv", err_os.str());
    slat::write_file(out / "scan_order.csv", order_os.str());
    std::cout << "replayed " << scans.size() << " steps with " << filter.name << " into " << out.string() << "\n";
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-vehicle PMB feature mapping with uncertain vehicle states"};
    app.set_version_flag("--version", std::string(SLAT_VERSION));
    app.require_subcommand(1);

    std::string config_path;
    int jobs = 0;
    std::string out_dir;
    bool export_scans = false;
    auto* run = app.add_subcommand("run", "Run a Monte-Carlo batch from a JSON config");
    run->add_option("--config", config_path, "Experiment config (JSON)")->required();
    run->add_option("--jobs", jobs, "Worker threads (default: hardware threads, capped by SLAT_MAX_JOBS)");
    run->add_option("--out", out_dir, "Output directory (default: the config's output_dir)");
    run->add_flag("--export-scans", export_scans, "Also write each run's truth and scans as JSON");

    std::string scans_path;
    std::string variant;
    std::string replay_out;
    auto* replay = app.add_subcommand("replay", "Re-run one filter variant on an exported scan file");
    replay->add_option("--scans", scans_path, "Scan file written by run --export-scans")->required();
    replay->add_option("--variant", variant, "Variant name from the file, or proposed/tombp1/tombp2")->required();
    replay->add_option("--out", replay_out, "Output directory (default: replay_out)");

    std::string validate_path;
    auto* validate = app.add_subcommand("validate", "Check a config without running it");
    validate->add_option("--config", validate_path, "Experiment config (JSON)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitInput;
    }

    try {
        if (*run) return cmd_run(config_path, jobs, out_dir, export_scans);
        if (*replay) return cmd_replay(scans_path, variant, replay_out);
        if (*validate) return cmd_validate(validate_path);
    } catch (const slat::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const slat::RunFailure& e) {
        std::cerr << "error: numerical failure in " << e.what() << "\n";
        return kExitNumerical;
    } catch (const slat::NumericalDegeneracy& e) {
        std::cerr << "error: numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    }
    return kExitInput;
}
