#pragma once

#include "slat/metrics.hpp"
#include "slat/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace slat {

struct NamedFilter {
    std::string name;
    FilterConfig config;
};

struct Baselines {
    bool local_kf = true;
    bool genie_kf = false;
};

/// Which scenario parameter a Monte-Carlo batch sweeps.
enum class SweepParameter { none, sigma_g2, sigma_v2f2 };

struct Sweep {
    SweepParameter parameter = SweepParameter::none;
    std::vector<double> values;
    /// sigma_g2 sweeps apply to this vehicle only; all vehicles when unset.
    std::optional<int> vehicle_id;

    [[nodiscard]] std::size_t points() const { return parameter == SweepParameter::none ? 1 : values.size(); }
};

inline ScenarioSpec apply_sweep(ScenarioSpec spec, const Sweep& sweep, std::size_t index) {
    if (sweep.parameter == SweepParameter::sigma_v2f2) {
        spec.sigma_v2f2 = sweep.values.at(index);
    } else if (sweep.parameter == SweepParameter::sigma_g2) {
        for (auto& v : spec.vehicles)
            if (!sweep.vehicle_id || *sweep.vehicle_id == v.id) v.sigma_g2 = sweep.values.at(index);
    }
    return spec;
}

/// Per-step metrics of one filter on one world realization.
struct FilterTrace {
    std::string name;
    std::vector<double> ospa;                           ///< empty for the KF baselines
    std::map<int, std::vector<double>> position_error;  ///< per vehicle, per step
};

struct RunResult {
    std::size_t sweep_index = 0;
    std::size_t run_index = 0;
    std::uint64_t seed = 0;
    std::vector<FilterTrace> traces; ///< variants in config order, then local_kf, genie_kf
};

/// Optional per-step observer for a PMB filter run (used by replay).
using StepObserver = std::function<void(std::int64_t, const PmbState&)>;

/// Runs one PMB filter variant over a recorded scan stream.
inline FilterTrace run_pmb_filter(const ScenarioSpec& spec, const GroundTruth& truth,
                                  const std::vector<std::vector<ScanRecord>>& scans, const NamedFilter& filter,
                                  const OspaParams& ospa_params, double r_estimate,
                                  const StepObserver& observer = {}) {
    const auto models = spec.models();
    FilterTrace trace{filter.name, {}, {}};
    PmbState state = initial_state(spec.vehicle_priors(), models.birth);
    for (std::size_t t = 0; t < scans.size(); ++t) {
        if (t > 0) state = predict(std::move(state), models.cv, models.birth);
        state = update_scans(std::move(state), scans[t], models, filter.config);
        state = prune(std::move(state), filter.config);
        state.time_step = static_cast<std::int64_t>(t);
        std::vector<Vec2> estimates;
        for (const auto& x : estimate_features(state, r_estimate)) estimates.push_back(x.head<2>());
        trace.ospa.push_back(ospa(estimates, truth.feature_positions(static_cast<std::int64_t>(t)), ospa_params));
        for (const auto& [id, v] : state.vehicles)
            trace.position_error[id].push_back(position_error(truth.vehicles.at(id)[t], v.state.mean));
        if (observer) observer(static_cast<std::int64_t>(t), state);
    }
    return trace;
}

inline FilterTrace run_local_kf(const ScenarioSpec& spec, const GroundTruth& truth,
                                const std::vector<std::vector<ScanRecord>>& scans) {
    const auto models = spec.models();
    const auto priors = spec.vehicle_priors();
    FilterTrace trace{"local_kf", {}, {}};
    for (const auto& [id, prior] : priors) {
        std::vector<std::optional<Vec2>> fixes(scans.size());
        for (std::size_t t = 0; t < scans.size(); ++t)
            for (const auto& s : scans[t])
                if (s.vehicle_id == id) fixes[t] = s.gnss;
        const auto traj = local_kf(prior, fixes, models.cv, models.gnss_for(id));
        auto& err = trace.position_error[id];
        for (std::size_t t = 0; t < traj.size(); ++t) err.push_back(position_error(truth.vehicles.at(id)[t], traj[t].mean));
    }
    return trace;
}

inline FilterTrace run_genie_kf(const ScenarioSpec& spec, const GroundTruth& truth,
                                const std::vector<std::vector<ScanRecord>>& scans) {
    const auto models = spec.models();
    FilterTrace trace{"genie_kf", {}, {}};
    const auto states = genie_central_kf(spec.vehicle_priors(), spec.genie_features(), scans, models);
    for (std::size_t t = 0; t < states.size(); ++t)
        for (const auto& [id, offset] : states[t].vehicle_offset)
            trace.position_error[id].push_back(position_error(truth.vehicles.at(id)[t], states[t].vehicle(id).mean));
    return trace;
}

/// Generates one world from `seed` and runs every filter on the identical scan stream.
inline RunResult run_single(const ScenarioSpec& spec, const std::vector<NamedFilter>& filters,
                            const Baselines& baselines, std::uint64_t seed, const OspaParams& ospa_params = {},
                            double r_estimate = 0.5) {
    RunResult out;
    out.seed = seed;
    const auto truth = generate_trajectories(spec, seed);
    const auto scans = generate_scans(truth, spec, seed);
    for (const auto& f : filters) out.traces.push_back(run_pmb_filter(spec, truth, scans, f, ospa_params, r_estimate));
    if (baselines.local_kf) out.traces.push_back(run_local_kf(spec, truth, scans));
    if (baselines.genie_kf) out.traces.push_back(run_genie_kf(spec, truth, scans));
    return out;
}

/// Thrown by run_monte_carlo when a run fails numerically; names the run.
class RunFailure : public std::runtime_error {
public:
    RunFailure(std::size_t sweep_index, std::size_t run_index, std::uint64_t seed, const std::string& what)
        : std::runtime_error("run " + std::to_string(run_index) + " (sweep point " + std::to_string(sweep_index) +
                             ", seed " + std::to_string(seed) + "): " + what),
          seed_(seed) {}
    [[nodiscard]] std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
};

struct MonteCarloSpec {
    ScenarioSpec scenario;
    std::vector<NamedFilter> filters;
    Baselines baselines;
    Sweep sweep;
    std::vector<std::uint64_t> seeds;
    OspaParams ospa;
    double r_estimate = 0.5;
};

/// Every (sweep point, seed) job, results ordered by sweep point then seed
/// position regardless of the number of worker threads.
inline std::vector<RunResult> run_monte_carlo(const MonteCarloSpec& mc, unsigned jobs = 1) {
    require(!mc.seeds.empty(), "run_monte_carlo: need at least one run");
    const std::size_t points = mc.sweep.points();
    const std::size_t total = points * mc.seeds.size();
    std::vector<RunResult> results(total);
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr first_error;
    auto worker = [&] {
        for (;;) {
            const std::size_t job = next.fetch_add(1);
            if (job >= total) return;
            const std::size_t p = job / mc.seeds.size();
            const std::size_t r = job % mc.seeds.size();
            try {
                const auto spec = apply_sweep(mc.scenario, mc.sweep, p);
                auto res = run_single(spec, mc.filters, mc.baselines, mc.seeds[r], mc.ospa, mc.r_estimate);
                res.sweep_index = p;
                res.run_index = r;
                results[job] = std::move(res);
            } catch (const std::exception& e) {
                std::lock_guard lock(error_mutex);
                if (!first_error) first_error = std::make_exception_ptr(RunFailure(p, r, mc.seeds[r], e.what()));
                next.store(total);
            }
        }
    };
    jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(total)));
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (first_error) std::rethrow_exception(first_error);
    return results;
}

/// Time-and-run average of the OSPA trace of `filter` at one sweep point.
inline double average_ospa(const std::vector<RunResult>& results, std::size_t sweep_index, const std::string& filter) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& r : results) {
        if (r.sweep_index != sweep_index) continue;
        for (const auto& tr : r.traces)
            if (tr.name == filter)
                for (double v : tr.ospa) {
                    sum += v;
                    ++count;
                }
    }
    require(count > 0, "average_ospa: no OSPA samples for " + filter);
    return sum / static_cast<double>(count);
}

/// Pooled position errors (all runs and steps) of one vehicle under one filter.
inline std::vector<double> pooled_errors(const std::vector<RunResult>& results, std::size_t sweep_index,
                                         const std::string& filter, int vehicle_id) {
    std::vector<double> out;
    for (const auto& r : results) {
        if (r.sweep_index != sweep_index) continue;
        for (const auto& tr : r.traces) {
            if (tr.name != filter) continue;
            auto it = tr.position_error.find(vehicle_id);
            if (it != tr.position_error.end()) out.insert(out.end(), it->second.begin(), it->second.end());
        }
    }
    return out;
}

} // namespace slat
