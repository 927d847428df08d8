#include "helpers.hpp"
#include "slat/experiment.hpp"

#include <catch_amalgamated.hpp>

#include <numeric>

using namespace slat;
using Catch::Approx;
using testutil::kCases;

namespace {

std::vector<Vec2> random_set(testutil::Rng& rng, int n, double scale) {
    std::vector<Vec2> out;
    for (int i = 0; i < n; ++i) out.push_back(testutil::random_vec<2>(rng, scale));
    return out;
}

/// OSPA by trying every injection of the smaller set into the larger one.
double ospa_brute_force(const std::vector<Vec2>& x, const std::vector<Vec2>& y, double c, double p) {
    const auto& small = x.size() <= y.size() ? x : y;
    const auto& large = x.size() <= y.size() ? y : x;
    if (large.empty()) return 0.0;
    std::vector<std::size_t> perm(large.size());
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double cost = 0.0;
        for (std::size_t i = 0; i < small.size(); ++i) cost += std::pow(std::min((small[i] - large[perm[i]]).norm(), c), p);
        best = std::min(best, cost);
    } while (std::next_permutation(perm.begin(), perm.end()));
    best += std::pow(c, p) * static_cast<double>(large.size() - small.size());
    return std::pow(best / static_cast<double>(large.size()), 1.0 / p);
}

/// Per-axis steady-state posterior position variance of the CV/GNSS filter,
/// iterating the scalar-form Riccati recursion to its fixed point.
double steady_state_position_var(double dt, double q, double r) {
    double p00 = 1.0, p01 = 0.0, p11 = 1.0;
    for (int it = 0; it < 100000; ++it) {
        // Predict with A = [[1, dt], [0, 1]].
        const double a00 = p00 + 2 * dt * p01 + dt * dt * p11 + q * dt * dt * dt / 3.0;
        const double a01 = p01 + dt * p11 + q * dt * dt / 2.0;
        const double a11 = p11 + q * dt;
        // Update with H = [1, 0].
        const double s = a00 + r;
        const double n00 = a00 - a00 * a00 / s;
        const double n01 = a01 - a00 * a01 / s;
        const double n11 = a11 - a01 * a01 / s;
        const bool done = std::abs(n00 - p00) < 1e-15 && std::abs(n11 - p11) < 1e-15;
        p00 = n00;
        p01 = n01;
        p11 = n11;
        if (done) break;
    }
    return p00;
}

} // namespace

TEST_CASE("ospa examples", "[metrics]") {
    const std::vector<Vec2> x{Vec2(0, 0)};
    CHECK(ospa(x, x) == 0.0);
    CHECK(ospa(x, {}) == 20.0);
    CHECK(ospa({}, x) == 20.0);
    CHECK(ospa(x, {Vec2(3, 4)}) == Approx(5.0).epsilon(1e-15));
    CHECK(ospa({}, {}) == 0.0);
    CHECK(ospa(x, {Vec2(300, 0)}) == 20.0);
    CHECK_THROWS_AS(ospa(x, x, OspaParams{0.0, 2.0}), ContractViolation);
    CHECK_THROWS_AS(ospa(x, x, OspaParams{20.0, 0.5}), ContractViolation);
}

TEST_CASE("hungarian_assign", "[metrics]") {
    Eigen::MatrixXd cost(3, 3);
    cost << 4, 1, 3, 2, 0, 5, 3, 2, 2;
    const auto a = hungarian_assign(cost);
    CHECK(a == std::vector<int>{1, 0, 2});
    CHECK(hungarian_assign(Eigen::MatrixXd(0, 3)).empty());
    CHECK_THROWS_AS(hungarian_assign(Eigen::MatrixXd::Zero(3, 2)), ContractViolation);
}

TEST_CASE("error_cdf", "[metrics]") {
    const auto flat = error_cdf({1.0, 1.0, 1.0});
    CHECK(flat(0.999) == 0.0);
    CHECK(flat(1.0) == 1.0);
    CHECK(error_cdf({5, 3, 1, 2, 4}).quantile(0.8) == 4.0);
    CHECK(error_cdf({5, 3, 1, 2, 4}).quantile(1.0) == 5.0);
    CHECK(error_cdf({5, 3, 1, 2, 4}).quantile(0.0) == 1.0);
    CHECK_THROWS_AS(error_cdf({}), ContractViolation);
}

TEST_CASE("local_kf", "[metrics]") {
    const Gaussian4 prior{Vec4(0, 200, 0, -2), Mat4::Identity()};
    const CvModel cv;
    const auto [a, w] = cv_matrices(cv);

    SECTION("missing fixes are pure predictions") {
        const auto traj = local_kf(prior, {std::nullopt, std::nullopt, std::nullopt}, cv, GnssModel{});
        REQUIRE(traj.size() == 3);
        CHECK(traj[0] == prior);
        CHECK(traj[2] == kf_predict(kf_predict(prior, a, w), a, w));
    }
    SECTION("vanishing GNSS noise pins the position to the fix") {
        const auto traj = local_kf(prior, {Vec2(0.5, 199.0)}, cv, GnssModel{1e-14});
        CHECK((traj[0].mean.head<2>() - Vec2(0.5, 199.0)).norm() < 1e-10);
    }
    SECTION("steady-state RMSE matches the Riccati fixed point") {
        ScenarioSpec spec;
        spec.vehicles[0].sigma_g2 = 12.96;
        spec.feature_count = 0;
        const double per_axis = steady_state_position_var(spec.dt, spec.accel_psd, 12.96);
        const double expected = std::sqrt(2.0 * per_axis);
        double sq = 0.0;
        int count = 0;
        for (std::uint64_t seed = 1; seed <= 40; ++seed) {
            const auto truth = generate_trajectories(spec, seed);
            const auto scans = generate_scans(truth, spec, seed);
            const auto trace = run_local_kf(spec, truth, scans);
            const auto& err = trace.position_error.at(1);
            for (std::size_t t = 100; t < err.size(); ++t) {
                sq += err[t] * err[t];
                ++count;
            }
        }
        CHECK(std::sqrt(sq / count) == Approx(expected).epsilon(0.10));
    }
}

TEST_CASE("genie_central_kf", "[metrics]") {
    ScenarioSpec spec;
    spec.duration_steps = 12;
    spec.feature_count = 1;
    spec.clutter_rate = 0.0;
    spec.anchor_step = 6;
    spec.vehicles[0].sigma_g2 = 2.0736;
    const auto models = spec.models();
    const auto truth = generate_trajectories(spec, 5);
    const auto scans = generate_scans(truth, spec, 5);
    const auto priors = spec.vehicle_priors();

    SECTION("single vehicle and feature equals a hand-built joint KF") {
        const auto got = genie_central_kf(priors, spec.genie_features(), scans, models);
        const auto [a, w] = cv_matrices(models.cv);
        Mat<8, 8> big_a = Mat<8, 8>::Zero(), big_w = Mat<8, 8>::Zero();
        big_a.topLeftCorner<4, 4>() = big_a.bottomRightCorner<4, 4>() = a;
        big_w.topLeftCorner<4, 4>() = big_w.bottomRightCorner<4, 4>() = w;
        GaussianDensity<8> joint;
        joint.mean << priors.at(1).mean, Vec4::Zero();
        joint.cov = Mat<8, 8>::Zero();
        joint.cov.topLeftCorner<4, 4>() = priors.at(1).cov;
        joint.cov.bottomRightCorner<4, 4>() = Vec4(spec.intensity_spread_var).asDiagonal();
        Mat<2, 8> h_gnss = Mat<2, 8>::Zero(), h_v2f = Mat<2, 8>::Zero();
        h_gnss.leftCols<4>() = gnss_obs_matrix();
        h_v2f.leftCols<4>() = gnss_obs_matrix();
        h_v2f.rightCols<4>() = -gnss_obs_matrix();
        for (std::size_t t = 0; t < scans.size(); ++t) {
            if (t > 0) joint = {big_a * joint.mean, big_a * joint.cov * big_a.transpose() + big_w};
            const auto& scan = scans[t].at(0);
            joint = testutil::textbook_kf<8>(joint, *scan.gnss, h_gnss, 2.0736 * Mat2::Identity());
            for (const auto& z : scan.v2f) joint = testutil::textbook_kf<8>(joint, z, h_v2f, 0.42 * Mat2::Identity());
            const double scale = 1.0 + joint.cov.cwiseAbs().maxCoeff();
            REQUIRE((got[t].joint.mean - joint.mean).cwiseAbs().maxCoeff() < 1e-7 * (1.0 + joint.mean.norm()));
            REQUIRE((got[t].joint.cov - joint.cov).cwiseAbs().maxCoeff() < 1e-9 * scale);
        }
        CHECK(got.back().joint.cov.block<4, 4>(0, 4).cwiseAbs().maxCoeff() > 0.0);
    }
    SECTION("without V2F scans the vehicle block equals the local KF") {
        auto gnss_only = scans;
        for (auto& step : gnss_only)
            for (auto& s : step) {
                s.v2f.clear();
                s.origins.clear();
            }
        const auto got = genie_central_kf(priors, spec.genie_features(), gnss_only, models);
        std::vector<std::optional<Vec2>> fixes;
        for (const auto& step : gnss_only) fixes.push_back(step.at(0).gnss);
        const auto local = local_kf(priors.at(1), fixes, models.cv, models.gnss_for(1));
        for (std::size_t t = 0; t < got.size(); ++t) {
            REQUIRE((got[t].vehicle(1).mean - local[t].mean).cwiseAbs().maxCoeff() < 1e-12 * (1.0 + local[t].mean.norm()));
            REQUIRE((got[t].vehicle(1).cov - local[t].cov).cwiseAbs().maxCoeff() < 1e-12);
            REQUIRE(got[t].joint.cov.block<4, 4>(0, 4).isZero(0.0));
        }
    }
    SECTION("labels must reference known features") {
        auto bad = scans;
        bad[0].at(0).v2f.push_back(Vec2::Zero());
        bad[0].at(0).origins.push_back(9);
        CHECK_THROWS_AS(genie_central_kf(priors, spec.genie_features(), bad, models), ContractViolation);
    }
}

TEST_CASE("property: ospa axioms", "[metrics][property]") {
    testutil::Rng rng(201);
    for (int c = 0; c < kCases; ++c) {
        const OspaParams params{testutil::uniform(rng, 1.0, 50.0), testutil::uniform(rng, 1.0, 3.0)};
        const auto x = random_set(rng, static_cast<int>(rng() % 6), 20.0);
        const auto y = random_set(rng, static_cast<int>(rng() % 6), 20.0);
        const double d = ospa(x, y, params);
        REQUIRE(d >= 0.0);
        REQUIRE(d <= params.cutoff);
        REQUIRE(d == Approx(ospa(y, x, params)).margin(1e-12));
        REQUIRE(d == Approx(ospa_brute_force(x, y, params.cutoff, params.order)).margin(1e-9));

        auto shuffled = x;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        REQUIRE(ospa(x, shuffled, params) <= 1e-12);
        if (!x.empty()) {
            auto moved = x;
            moved[rng() % moved.size()] += Vec2(1e-3, 0.0);
            REQUIRE(ospa(x, moved, params) > 0.0);
            REQUIRE(ospa(x, {}, params) == params.cutoff);
        }
    }
}

TEST_CASE("property: a V2F row never increases the observed block traces", "[metrics][property]") {
    testutil::Rng rng(211);
    SystemModels models;
    models.gnss[1] = GnssModel{testutil::uniform(rng, 1e-3, 13.0)};
    for (int c = 0; c < kCases; ++c) {
        models.v2f.sigma2 = testutil::uniform(rng, 0.05, 2.0);
        const auto vehicle = testutil::random_gaussian<4>(rng, 50.0, 0.01, 13.0);
        const auto feature = testutil::random_gaussian<4>(rng, 50.0, 0.01, 13.0);
        const std::vector<GenieFeature> features{{1, 0, feature}};
        const Vec2 fix = vehicle.mean.head<2>() + testutil::random_vec<2>(rng, 1.0);
        const Vec2 z = vehicle.mean.head<2>() - feature.mean.head<2>() + testutil::random_vec<2>(rng, 1.0);
        const ScanRecord without{0, 1, fix, {}, {}};
        const ScanRecord with{0, 1, fix, {z}, {1}};
        const auto a = genie_central_kf({{1, vehicle}}, features, {{without}}, models).back();
        const auto b = genie_central_kf({{1, vehicle}}, features, {{with}}, models).back();
        REQUIRE(b.vehicle(1).cov.trace() <= a.vehicle(1).cov.trace() * (1.0 + 1e-12));
        REQUIRE(b.feature(1).cov.trace() <= a.feature(1).cov.trace() * (1.0 + 1e-12));
        REQUIRE(is_symmetric_psd(b.joint.cov));
    }
}
