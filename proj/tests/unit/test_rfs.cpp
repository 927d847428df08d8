#include "helpers.hpp"
#include "slat/filter.hpp"

#include <catch_amalgamated.hpp>

using namespace slat;
using Catch::Approx;
using testutil::kCases;

namespace {

BernoulliComponent bern(std::int64_t id, double r, const Vec4& mean = Vec4::Zero()) {
    return {id, r, Gaussian4{mean, Mat4::Identity()}};
}

} // namespace

TEST_CASE("estimate_features", "[rfs]") {
    PmbState s;
    s.detected = {bern(0, 0.9, Vec4(1, 2, 0, 0)), bern(1, 0.3, Vec4(5, 5, 0, 0))};
    const auto est = estimate_features(s, 0.5);
    REQUIRE(est.size() == 1);
    CHECK(est[0] == Vec4(1, 2, 0, 0));

    CHECK(estimate_features(PmbState{}, 0.5).empty());

    PmbState at;
    at.detected = {bern(0, 0.5), bern(1, 0.5)};
    CHECK(estimate_features(at, 0.5).empty());

    CHECK_THROWS_AS(estimate_features(s, 1.0), ContractViolation);
}

TEST_CASE("recycle_or_prune", "[rfs]") {
    PmbState s;
    s.undetected.gm = single_component_intensity(2.0, Mat4::Identity());
    s.detected = {bern(0, 0.0), bern(1, 0.4), bern(2, 0.05)};

    const auto off = recycle_or_prune(s, 0.1, false);
    REQUIRE(off.detected.size() == 1);
    CHECK(off.detected[0].id == 1);
    CHECK(off.undetected == s.undetected);

    const auto on = recycle_or_prune(s, 0.1, true);
    REQUIRE(on.detected.size() == 1);
    CHECK(on.undetected.total_weight() == Approx(2.05).epsilon(1e-15));
    CHECK(on.undetected.gm.size() == 2);

    CHECK_THROWS_AS(recycle_or_prune(s, 1.0), ContractViolation);
}

TEST_CASE("PmbState bookkeeping", "[rfs]") {
    PmbState s;
    s.detected = {bern(0, 0.5), bern(1, 0.5)};
    CHECK(s.ids_unique());
    s.detected.push_back(bern(1, 0.2));
    CHECK_FALSE(s.ids_unique());
    CHECK_THROWS_AS(s.vehicle(3), LookupError);
    CHECK(clamp_probability(1.0 + 1e-13) == 1.0);
    CHECK(clamp_probability(-1e-13) == 0.0);
}

TEST_CASE("property: association problem shape follows the belief", "[rfs][property]") {
    testutil::Rng rng(53);
    const V2fModel model{0.42, 0.9, 10.0, 500.0};
    for (int c = 0; c < kCases; ++c) {
        PmbState s;
        const int n = static_cast<int>(rng() % 6);
        const int m = static_cast<int>(rng() % 8);
        for (int i = 0; i < n; ++i)
            s.detected.push_back({i, testutil::uniform(rng, 0.0, 1.0), testutil::random_gaussian<4>(rng, 20.0, 0.1, 4.0)});
        s.undetected.gm = single_component_intensity(testutil::uniform(rng, 0.0, 10.0), default_spread_cov());
        s.vehicles.emplace(1, VehicleBelief{1, testutil::random_gaussian<4>(rng, 5.0, 0.01, 2.0)});
        std::vector<Vec2> z;
        for (int k = 0; k < m; ++k) z.push_back(testutil::random_vec<2>(rng, 30.0));
        const auto view = sensor_view(s.vehicle(1).state, std::nullopt, model, GnssModel{}, Variant::proposed);
        const auto prob = build_association_problem(s, view, z, model, 13.8);
        REQUIRE(prob.n() == n);
        REQUIRE(prob.m() == m);
        REQUIRE(prob.log_detect.rows() == n);
        REQUIRE(prob.log_detect.cols() == m);
        REQUIRE(prob.is_consistent());
        for (int k = 0; k < m; ++k) REQUIRE(prob.log_new[k] > kNegInf);
    }
}
