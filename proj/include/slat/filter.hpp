#pragma once

#include "slat/association.hpp"
#include "slat/models.hpp"
#include "slat/rfs.hpp"

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace slat {

/// How the V2F update treats the sensor state.
///  - proposed: full uncertain-state path (sensor density marginalized out)
///  - tombp1:   GNSS fix taken as the exact sensor position
///  - tombp2:   as tombp1, V2F noise inflated by the GNSS variance
enum class Variant { proposed, tombp1, tombp2 };

inline std::string_view to_string(Variant v) {
    switch (v) {
    case Variant::proposed: return "proposed";
    case Variant::tombp1: return "tombp1";
    case Variant::tombp2: return "tombp2";
    }
    return "?";
}

inline std::optional<Variant> parse_variant(std::string_view name) {
    if (name == "proposed") return Variant::proposed;
    if (name == "tombp1") return Variant::tombp1;
    if (name == "tombp2") return Variant::tombp2;
    return std::nullopt;
}

struct FilterConfig {
    Variant variant = Variant::proposed;
    bool sensor_update_enabled = false;
    double r_certain = 0.6;
    double gating_threshold = 13.8;
    BpSettings bp;
    /// Association problems with n and m at most this size are solved by enumeration.
    int exact_association_max = 3;
    double r_prune = 1e-3;
    bool recycle = false;
    PruneMergeSettings ppp;

    [[nodiscard]] bool is_valid() const {
        return r_certain > 0.0 && r_certain < 1.0 && gating_threshold > 0.0 && bp.max_iters > 0 && bp.tol > 0.0 &&
               exact_association_max >= 0 && exact_association_max <= kExactMaxSize && r_prune >= 0.0 &&
               r_prune < 1.0 && ppp.max_components > 0;
    }
};

/// Everything the filter needs to know about the world.
struct SystemModels {
    CvModel cv;
    V2fModel v2f;
    BirthSurvivalModel birth = default_birth_survival();
    std::map<int, GnssModel> gnss; ///< per vehicle

    [[nodiscard]] const GnssModel& gnss_for(int vehicle_id) const {
        auto it = gnss.find(vehicle_id);
        if (it == gnss.end()) throw LookupError("no GNSS model for vehicle " + std::to_string(vehicle_id));
        return it->second;
    }
};

/// One vehicle's measurements at one time step.
struct ScanRecord {
    std::int64_t time_step = 0;
    int vehicle_id = 0;
    std::optional<Vec2> gnss;
    std::vector<Vec2> v2f;
    /// Simulator origin labels aligned with `v2f`: feature id, or -1 for clutter. Empty when unknown.
    std::vector<int> origins;

    bool operator==(const ScanRecord&) const = default;
};

/// Sensor position as seen by the V2F update: z = p + H2 x + q with
/// p ~ N(position, position_cov) and q ~ N(0, noise).
struct SensorView {
    Vec2 position;
    Mat2 position_cov;
    Mat2 noise;
};

inline SensorView sensor_view(const Gaussian4& vehicle, const std::optional<Vec2>& gnss_fix, const V2fModel& v2f,
                              const GnssModel& gnss, Variant variant) {
    const Mat24 h1 = v2f_vehicle_matrix();
    if (variant == Variant::proposed)
        return {h1 * vehicle.mean, h1 * vehicle.cov * h1.transpose(), v2f.noise_cov()};
    const Vec2 position = gnss_fix ? *gnss_fix : Vec2(h1 * vehicle.mean);
    Mat2 noise = v2f.noise_cov();
    if (variant == Variant::tombp2) noise += gnss.noise_cov();
    return {position, Mat2::Zero(), noise};
}

/// CV prediction of vehicles, undetected intensity (survival-thinned plus
/// birth) and Bernoullis (r scaled by the survival probability).
inline PmbState predict(PmbState state, const CvModel& cv, const BirthSurvivalModel& bs) {
    const auto [a, w] = cv_matrices(cv);
    for (auto& [id, v] : state.vehicles) v.state = kf_predict(v.state, a, w);
    const double log_ps = std::log(bs.p_survive);
    for (auto& c : state.undetected.gm.components) {
        c.density = kf_predict(c.density, a, w);
        c.log_weight += log_ps;
    }
    for (const auto& c : bs.birth_intensity.components)
        if (c.log_weight != kNegInf) state.undetected.gm.components.push_back(c);
    for (auto& b : state.detected) {
        b.pdf = kf_predict(b.pdf, a, w);
        b.r = clamp_probability(b.r * bs.p_survive);
    }
    ++state.time_step;
    return state;
}

/// Conditions one vehicle on a GNSS fix. Features are untouched.
inline PmbState update_gnss(PmbState state, int vehicle_id, const Vec2& z, const GnssModel& model) {
    auto& v = state.vehicle(vehicle_id);
    v.state = kf_update(v.state, z, gnss_obs_matrix(), model.noise_cov(),
                        "update_gnss(vehicle " + std::to_string(vehicle_id) + ")")
                  .posterior;
    return state;
}

struct FeatureUpdateResult {
    PmbState state;
    MarginalAssociation marginals;
    AssociationProblem problem;
};

namespace detail {

/// Innovation statistics shared by every measurement for one prior component.
struct Innovation2 {
    Vec2 predicted;
    Mat2 cov;
    Eigen::LLT<Mat2> llt;
    double log_norm = 0.0; ///< -0.5 (2 log 2pi + log det S)
    Mat<4, 2> gain;
    Mat4 posterior_cov;

    Innovation2(const Gaussian4& prior, const Mat24& obs, const Mat2& noise, const std::string& who)
        : predicted(obs * prior.mean), cov(obs * prior.cov * obs.transpose() + noise) {
        symmetrize(cov);
        check_innovation_cov(cov, who);
        llt.compute(cov);
        const Mat2 l = llt.matrixL();
        log_norm = -std::log(2.0 * std::numbers::pi) - std::log(l(0, 0)) - std::log(l(1, 1));
        gain = llt.solve(obs * prior.cov).transpose();
        const Mat4 ikh = Mat4::Identity() - gain * obs;
        posterior_cov = ikh * prior.cov * ikh.transpose() + gain * noise * gain.transpose();
        symmetrize(posterior_cov);
    }

    [[nodiscard]] double mahalanobis2(const Vec2& y) const {
        return llt.matrixL().solve(Vec2(y - predicted)).squaredNorm();
    }
    [[nodiscard]] double log_pdf(const Vec2& y) const { return log_norm - 0.5 * mahalanobis2(y); }
    [[nodiscard]] Gaussian4 posterior(const Gaussian4& prior, const Vec2& y) const {
        return {prior.mean + gain * (y - predicted), posterior_cov};
    }
};

} // namespace detail

/// Builds the association problem of one V2F scan against the current
/// Bernoullis and undetected intensity, with the sensor state integrated out.
inline AssociationProblem build_association_problem(const PmbState& state, const SensorView& view,
                                                    const std::vector<Vec2>& z, const V2fModel& model,
                                                    double gating_threshold) {
    const auto n = static_cast<Eigen::Index>(state.detected.size());
    const auto m = static_cast<Eigen::Index>(z.size());
    const Mat24 h2 = v2f_feature_matrix();
    const Mat2 noise = view.position_cov + view.noise;
    const double log_pd = std::log(model.p_detect);
    AssociationProblem prob{Eigen::VectorXd(n), Eigen::MatrixXd(n, m), Eigen::VectorXd(m)};
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& b = state.detected[i];
        const detail::Innovation2 inn(b.pdf, h2, noise, "bernoulli " + std::to_string(b.id));
        const double miss = 1.0 - model.p_detect * b.r;
        prob.log_miss[i] = miss > 0.0 ? std::log(miss) : kNegInf;
        const double log_pd_r = b.r > 0.0 ? log_pd + std::log(b.r) : kNegInf;
        for (Eigen::Index k = 0; k < m; ++k) {
            const Vec2 y = z[k] - view.position;
            const double d2 = inn.mahalanobis2(y);
            prob.log_detect(i, k) = d2 > gating_threshold ? kNegInf : log_pd_r + inn.log_norm - 0.5 * d2;
        }
    }
    std::vector<detail::Innovation2> ppp;
    ppp.reserve(state.undetected.gm.size());
    for (const auto& c : state.undetected.gm.components) ppp.emplace_back(c.density, h2, noise, "undetected intensity");
    std::vector<double> terms;
    for (Eigen::Index k = 0; k < m; ++k) {
        const Vec2 y = z[k] - view.position;
        terms.clear();
        for (std::size_t c = 0; c < ppp.size(); ++c)
            terms.push_back(state.undetected.gm.components[c].log_weight + ppp[c].log_pdf(y));
        const double log_e = log_pd + logsumexp(terms);
        prob.log_new[k] = logaddexp(clutter_log_intensity(z[k], model), log_e);
    }
    return prob;
}

/// V2F update of the feature PMB for one vehicle's scan: undetected intensity
/// thinned by (1 - p_D), one new Bernoulli per measurement, existing
/// Bernoullis updated under every hypothesis and then collapsed with the
/// marginal association probabilities. Vehicle beliefs are not modified.
inline FeatureUpdateResult update_v2f_features(const PmbState& prior, int vehicle_id, const std::vector<Vec2>& z,
                                               const V2fModel& model, const FilterConfig& cfg,
                                               const SensorView& view) {
    require(model.is_valid(), "update_v2f_features: invalid V2F model");
    (void)prior.vehicle(vehicle_id);
    const Mat24 h2 = v2f_feature_matrix();
    const Mat2 noise = view.position_cov + view.noise;
    const double pd = model.p_detect;

    FeatureUpdateResult out;
    out.problem = build_association_problem(prior, view, z, model, cfg.gating_threshold);
    const auto n = out.problem.n();
    const auto m = out.problem.m();
    if (n <= cfg.exact_association_max && m <= cfg.exact_association_max)
        out.marginals = exact_marginals(out.problem);
    else
        out.marginals = bp_marginals(out.problem, cfg.bp);
    const auto& marg = out.marginals;

    PmbState& post = out.state;
    post.time_step = prior.time_step;
    post.vehicles = prior.vehicles;
    post.next_id = prior.next_id;

    // Existing Bernoullis: miss hypothesis keeps the pdf, detections are KF updates.
    post.detected.reserve(prior.detected.size() + z.size());
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& b = prior.detected[i];
        const double r_miss = b.r * (1.0 - pd) / (1.0 - pd * b.r);
        const double w_miss = pd * b.r < 1.0 ? marg.p_miss[i] * r_miss : 0.0;
        Mixture4 hyps;
        if (w_miss > 0.0) hyps.components.push_back({std::log(w_miss), b.pdf});
        std::optional<detail::Innovation2> inn;
        for (Eigen::Index k = 0; k < m; ++k) {
            const double w = marg.p_assoc(i, k);
            if (w <= 0.0 || out.problem.log_detect(i, k) == kNegInf) continue;
            if (!inn) inn.emplace(b.pdf, h2, noise, "bernoulli " + std::to_string(b.id));
            hyps.components.push_back({std::log(w), inn->posterior(b.pdf, z[k] - view.position)});
        }
        BernoulliComponent nb{b.id, 0.0, b.pdf};
        if (!hyps.empty()) {
            nb.r = clamp_probability(std::min(1.0, hyps.total_weight()));
            nb.pdf = moment_match(normalized(std::move(hyps)));
        }
        post.detected.push_back(std::move(nb));
    }

    // New Bernoullis, one per measurement.
    std::vector<detail::Innovation2> ppp;
    ppp.reserve(prior.undetected.gm.size());
    for (const auto& c : prior.undetected.gm.components)
        ppp.emplace_back(c.density, h2, noise, "undetected intensity");
    for (Eigen::Index k = 0; k < m; ++k) {
        if (!(marg.p_new[k] > 0.0) || out.problem.log_new[k] == kNegInf) continue;
        const Vec2 y = z[k] - view.position;
        Mixture4 comps;
        for (std::size_t c = 0; c < ppp.size(); ++c) {
            const double lw = std::log(pd) + prior.undetected.gm.components[c].log_weight + ppp[c].log_pdf(y);
            if (lw == kNegInf) continue;
            comps.components.push_back({lw, ppp[c].posterior(prior.undetected.gm.components[c].density, y)});
        }
        if (comps.empty()) continue;
        const double log_e = comps.log_total_weight();
        if (log_e == kNegInf) continue;
        const double r = marg.p_new[k] * std::exp(log_e - out.problem.log_new[k]);
        if (!(r > 0.0)) continue;
        post.detected.push_back({post.next_id++, clamp_probability(std::min(r, 1.0)), moment_match(normalized(comps))});
    }

    // Undetected intensity: thinned by the miss probability.
    if (pd < 1.0) {
        post.undetected = prior.undetected;
        post.undetected.gm.add_log_weight(std::log1p(-pd));
    }
    return out;
}

/// Convenience overload deriving the sensor view from the state and the scan.
inline FeatureUpdateResult update_v2f_features(const PmbState& prior, const ScanRecord& scan,
                                               const SystemModels& models, const FilterConfig& cfg) {
    const auto view = sensor_view(prior.vehicle(scan.vehicle_id).state, scan.gnss, models.v2f,
                                  models.gnss_for(scan.vehicle_id), cfg.variant);
    return update_v2f_features(prior, scan.vehicle_id, scan.v2f, models.v2f, cfg, view);
}

/// V2F update of one vehicle's state from previously detected, near-certain
/// features. For each such feature the hypotheses (miss, or measurement k)
/// are weighted by the association marginals of the feature update, each
/// detection hypothesis is a KF update of the vehicle, and the mixture is
/// collapsed by moment matching before moving to the next feature.
inline PmbState update_v2f_vehicle(PmbState state, int vehicle_id, const std::vector<Vec2>& z,
                                   const MarginalAssociation& marg,
                                   const std::vector<BernoulliComponent>& pre_update_bernoullis,
                                   const V2fModel& model, const FilterConfig& cfg) {
    if (!cfg.sensor_update_enabled || cfg.variant != Variant::proposed) return state;
    const auto n = static_cast<Eigen::Index>(pre_update_bernoullis.size());
    const auto m = static_cast<Eigen::Index>(z.size());
    require(marg.p_miss.size() == n && marg.p_assoc.rows() == n && marg.p_assoc.cols() == m,
            "update_v2f_vehicle: marginals do not match the Bernoulli list / measurement set");
    auto& vehicle = state.vehicle(vehicle_id).state;
    const Mat24 h1 = v2f_vehicle_matrix();
    const Mat24 h2 = v2f_feature_matrix();
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& b = pre_update_bernoullis[i];
        if (!(b.r > cfg.r_certain)) continue;
        Mixture4 hyps;
        if (marg.p_miss[i] > 0.0) hyps.components.push_back({std::log(marg.p_miss[i]), vehicle});
        bool any_detection = false;
        const Mat2 noise = model.noise_cov() + h2 * b.pdf.cov * h2.transpose();
        std::optional<detail::Innovation2> inn;
        for (Eigen::Index k = 0; k < m; ++k) {
            const double w = marg.p_assoc(i, k);
            if (!(w > 0.0)) continue;
            if (!inn) inn.emplace(vehicle, h1, noise, "vehicle " + std::to_string(vehicle_id));
            hyps.components.push_back({std::log(w), inn->posterior(vehicle, Vec2(z[k] - h2 * b.pdf.mean))});
            any_detection = true;
        }
        if (!any_detection) continue;
        vehicle = moment_match(normalized(std::move(hyps)));
    }
    return state;
}

/// Drops unlikely Bernoullis and bounds the undetected intensity.
inline PmbState prune(PmbState state, const FilterConfig& cfg) {
    state = recycle_or_prune(std::move(state), cfg.r_prune, cfg.recycle);
    state.undetected.gm = gm_prune_merge(state.undetected.gm, cfg.ppp);
    return state;
}

/// Applies the scans of one time step in arrival order: GNSS, feature
/// update, then (if enabled) the vehicle update. Later scans see the feature
/// posterior of earlier ones.
inline PmbState update_scans(PmbState state, const std::vector<ScanRecord>& scans, const SystemModels& models,
                             const FilterConfig& cfg) {
    for (const auto& scan : scans) {
        (void)state.vehicle(scan.vehicle_id);
        const auto& gnss = models.gnss_for(scan.vehicle_id);
        if (scan.gnss) state = update_gnss(std::move(state), scan.vehicle_id, *scan.gnss, gnss);
        auto fu = update_v2f_features(state, scan, models, cfg);
        const std::vector<BernoulliComponent> pre = std::move(state.detected);
        state = update_v2f_vehicle(std::move(fu.state), scan.vehicle_id, scan.v2f, fu.marginals, pre, models.v2f,
                                   cfg);
    }
    return state;
}

/// One full time step: predict, sequential per-scan updates, pruning.
inline PmbState step_sequential(PmbState state, const std::vector<ScanRecord>& scans, const SystemModels& models,
                                const FilterConfig& cfg) {
    state = predict(std::move(state), models.cv, models.birth);
    state = update_scans(std::move(state), scans, models, cfg);
    return prune(std::move(state), cfg);
}

/// Initial belief: given vehicle priors, the initial undetected intensity, no Bernoullis.
inline PmbState initial_state(const std::map<int, Gaussian4>& vehicle_priors, const BirthSurvivalModel& bs) {
    PmbState s;
    s.undetected.gm = bs.initial_unknown_intensity;
    for (const auto& [id, g] : vehicle_priors) s.vehicles.emplace(id, VehicleBelief{id, g});
    return s;
}

} // namespace slat
