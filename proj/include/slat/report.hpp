#pragma once

// CSV and manifest writers for Monte-Carlo results.

#include "slat/config.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#ifndef SLAT_VERSION
#define SLAT_VERSION "0.0.0"
#endif

namespace slat {

inline std::string fmt_num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

inline std::string sweep_value_str(const Sweep& sweep, std::size_t index) {
    return sweep.parameter == SweepParameter::none ? std::string("none") : fmt_num(sweep.values.at(index));
}

inline void write_ospa_header(std::ostream& os) { os << "sweep_index,sweep_value,variant,run_id,t,ospa_m\n"; }
inline void write_vehicle_error_header(std::ostream& os) {
    os << "sweep_index,sweep_value,filter,run_id,t,vehicle_id,pos_error_m\n";
}

inline void write_trace_rows(std::ostream& ospa_os, std::ostream& err_os, std::size_t sweep_index,
                             const std::string& sweep_val, std::size_t run_id, const FilterTrace& tr) {
    for (std::size_t t = 0; t < tr.ospa.size(); ++t)
        ospa_os << sweep_index << ',' << sweep_val << ',' << tr.name << ',' << run_id << ',' << t << ','
                << fmt_num(tr.ospa[t]) << '\n';
    for (const auto& [vid, errs] : tr.position_error)
        for (std::size_t t = 0; t < errs.size(); ++t)
            err_os << sweep_index << ',' << sweep_val << ',' << tr.name << ',' << run_id << ',' << t << ',' << vid
                   << ',' << fmt_num(errs[t]) << '\n';
}

/// Per-run rows, then one `run_id=all,t=all` row per (sweep point, variant)
/// holding the time-and-run average.
inline void write_ospa_csv(std::ostream& os, const std::vector<RunResult>& results, const ExperimentConfig& c) {
    write_ospa_header(os);
    for (const auto& r : results)
        for (const auto& tr : r.traces)
            for (std::size_t t = 0; t < tr.ospa.size(); ++t)
                os << r.sweep_index << ',' << sweep_value_str(c.sweep, r.sweep_index) << ',' << tr.name << ','
                   << r.run_index << ',' << t << ',' << fmt_num(tr.ospa[t]) << '\n';
    for (std::size_t p = 0; p < c.sweep.points(); ++p)
        for (const auto& f : c.variants)
            os << p << ',' << sweep_value_str(c.sweep, p) << ',' << f.name << ",all,all,"
               << fmt_num(average_ospa(results, p, f.name)) << '\n';
}

inline void write_vehicle_error_csv(std::ostream& os, const std::vector<RunResult>& results, const ExperimentConfig& c) {
    write_vehicle_error_header(os);
    for (const auto& r : results)
        for (const auto& tr : r.traces)
            for (const auto& [vid, errs] : tr.position_error)
                for (std::size_t t = 0; t < errs.size(); ++t)
                    os << r.sweep_index << ',' << sweep_value_str(c.sweep, r.sweep_index) << ',' << tr.name << ','
                       << r.run_index << ',' << t << ',' << vid << ',' << fmt_num(errs[t]) << '\n';
}

inline std::vector<std::string> filter_names(const ExperimentConfig& c) {
    std::vector<std::string> out;
    for (const auto& f : c.variants) out.push_back(f.name);
    if (c.baselines.local_kf) out.emplace_back("local_kf");
    if (c.baselines.genie_kf) out.emplace_back("genie_kf");
    return out;
}

/// Empirical CDF of pooled vehicle position errors at quantiles 0.01..1.00.
inline void write_cdf_csv(std::ostream& os, const std::vector<RunResult>& results, const ExperimentConfig& c) {
    os << "sweep_index,sweep_value,filter,vehicle_id,quantile,error_m\n";
    for (std::size_t p = 0; p < c.sweep.points(); ++p)
        for (const auto& name : filter_names(c))
            for (const auto& v : c.scenario.vehicles) {
                const auto errs = pooled_errors(results, p, name, v.id);
                if (errs.empty()) continue;
                const EmpiricalCdf cdf(errs);
                for (int k = 1; k <= 100; ++k) {
                    const double q = k / 100.0;
                    os << p << ',' << sweep_value_str(c.sweep, p) << ',' << name << ',' << v.id << ','
                       << fmt_num(q) << ',' << fmt_num(cdf.quantile(q)) << '\n';
                }
            }
}

inline json manifest_json(const ExperimentConfig& c) {
    return json{{"software", "slat"},
                {"version", SLAT_VERSION},
                {"config_hash", hex64(config_hash(c))},
                {"seeds", c.seed_list()},
                {"seed_derived", c.seed_derived},
                {"config", canonical_json(c)}};
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << content;
    if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

/// Writes ospa.csv, vehicle_error.csv, cdf.csv and manifest.json into `dir`.
inline void write_reports(const std::filesystem::path& dir, const std::vector<RunResult>& results,
                          const ExperimentConfig& c) {
    std::filesystem::create_directories(dir);
    std::ostringstream ospa_os, err_os, cdf_os;
    write_ospa_csv(ospa_os, results, c);
    write_vehicle_error_csv(err_os, results, c);
    write_cdf_csv(cdf_os, results, c);
    write_file(dir / "ospa.csv", ospa_os.str());
    write_file(dir / "vehicle_error.csv", err_os.str());
    write_file(dir / "cdf.csv", cdf_os.str());
    write_file(dir / "manifest.json", manifest_json(c).dump(2) + "\n");
}

} // namespace slat
