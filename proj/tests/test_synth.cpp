#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "curves/synth.hpp"
#include "support.hpp"

using namespace curves;
using Catch::Approx;

namespace {

TruthSpec small_market(std::uint64_t seed) {
    TruthSpec spec;
    spec.seed = seed;
    spec.start = UtcTime::at(Date::from_ymd(2024, 2, 1));
    spec.days = 2;
    spec.step_hours = 6;
    spec.rate_ref = TermStructure{{{0.1, 0.04}, {0.5, 0.06}}};
    spec.rate_crypto = TermStructure{{{0.1, -0.01}, {0.5, 0.02}}};
    spec.expiries = {UtcTime::at(Date::from_ymd(2024, 3, 29), 8), UtcTime::at(Date::from_ymd(2024, 6, 28), 8)};
    spec.moneyness = test::linspace(0.5, 1.8, 30);
    return spec;
}

} // namespace

TEST_CASE("generated futures ratio", "[synth]") {
    const auto gen = test::generated_slice(test::rates_slice(0.10, 0.0, 0.25), 1);
    // exp(0.025), to 22 digits.
    CHECK(*gen.slice.futures_ratio == Approx(1.025315120524428840678).epsilon(1e-14));
}

TEST_CASE("noiseless markets are recovered exactly", "[synth]") {
    const auto spec = small_market(3);
    const auto data = generate_market(spec);
    CHECK(data.excluded.empty());
    const auto slices = assemble_slices(data.quotes).slices;
    REQUIRE(slices.size() == 2 * 8);
    for (const auto& s : slices) {
        const auto e = std::get<ZcEstimate>(estimate_slice(s, RansacConfig{}));
        const double tau = year_fraction(s.timestamp, s.expiry);
        REQUIRE(std::abs(*e.rate_ref - spec.rate_ref(tau)) <= 1e-10);
        REQUIRE(std::abs(*e.rate_crypto - spec.rate_crypto(tau)) <= 1e-10);
    }
    REQUIRE(data.truth.size() == 2 * 2);
    CHECK(data.truth[0].date == Date::from_ymd(2024, 2, 1));
}

TEST_CASE("generate_market is deterministic", "[synth]") {
    auto spec = small_market(9);
    spec.noise_sd = 0.002;
    spec.outlier_fraction = 0.1;
    const auto a = generate_market(spec);
    const auto b = generate_market(spec);
    CHECK(a.quotes == b.quotes);
    CHECK(a.labels == b.labels);
    spec.seed = 10;
    CHECK_FALSE(generate_market(spec).quotes == a.quotes);
}

TEST_CASE("clean quotes satisfy both parity relations", "[synth][property]") {
    auto spec = small_market(4);
    spec.noise_sd = 0.003;
    spec.moneyness = test::linspace(0.2, 3.0, 40);
    const auto data = generate_market(spec);
    const auto slices = assemble_slices(data.quotes).slices;
    for (const auto& s : slices) {
        const double tau = year_fraction(s.timestamp, s.expiry);
        const double zc_ref = std::exp(-spec.rate_ref(tau) * tau);
        const double zc_crypto = std::exp(-spec.rate_crypto(tau) * tau);
        REQUIRE(std::abs(*s.futures_ratio - zc_crypto / zc_ref) <= 1e-12);
        for (const auto& o : s.observations) {
            REQUIRE(o.call_mid() > 0.0);
            REQUIRE(o.put_mid() > 0.0);
            REQUIRE(o.call_bid >= 0.0);
            REQUIRE(o.put_bid >= 0.0);
            // |C - P - (F - K)/S ZC_ref| is the planted noise, at most ~5 sd.
            const double parity = (*s.futures_mid - o.strike) / s.index_price * zc_ref;
            REQUIRE(std::abs(o.y - parity) <= 5.0 * spec.noise_sd + 1e-12);
            // Clean spread points sit on the planted line.
            const auto p = to_spread_point(o);
            REQUIRE(std::abs(p.y - (spec.spread.zeta + spec.spread.xi * p.x)) <= 1e-12);
        }
    }
}

TEST_CASE("skeleton feasibility", "[synth]") {
    auto spec = small_market(1);
    spec.skeleton.floor = 0.0;
    CHECK_THROWS_MATCHES(generate_market(spec), Error, Catch::Matchers::Predicate<Error>([](const Error& e) {
                             return e.code() == ErrorCode::InfeasibleSkeleton;
                         }));
    spec.skeleton.floor = 0.02;
    spec.outlier_fraction = 1.0;
    CHECK_THROWS_AS(generate_market(spec), Error);
}

TEST_CASE("inject_outliers", "[synth]") {
    const auto base = test::generated_slice(test::rates_slice(0.05, 0.0, 0.5), 1).dataset;
    REQUIRE(base.labels.size() == 30);

    const auto same = inject_outliers(base, 0.0, 0.25, 7);
    CHECK(same.quotes == base.quotes);
    CHECK(same.outlier_count() == 0);

    const auto half = inject_outliers(base, 0.5, 0.25, 7);
    CHECK(half.outlier_count() == 15);
    CHECK(inject_outliers(base, 0.5, 0.25, 7).quotes == half.quotes);
    CHECK_FALSE(inject_outliers(base, 0.5, 0.25, 8).quotes == half.quotes);

    CHECK(outlier_count_for(30, 0.1) == 3);
    CHECK(outlier_count_for(30, 0.2) == 6);
    CHECK(outlier_count_for(25, 0.1) == 3); // 2.5 rounds half up
    CHECK(outlier_count_for(7, 0.0) == 0);
    CHECK_THROWS_AS(inject_outliers(base, 1.0, 0.25, 7), Error);
}

TEST_CASE("labelled outliers match the spread screen", "[synth][screen]") {
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        auto spec = test::rates_slice(0.1, 0.0, 0.25);
        spec.noise_sd = 0.002;
        const auto gen = test::generated_slice(spec, seed, 0.2, 3.0 * std::sqrt(0.004));
        RansacConfig cfg;
        cfg.seed = seed;
        const auto out = spread_screen(gen.slice.observations, cfg);
        REQUIRE(std::holds_alternative<ScreenKept>(out));
        const auto mask = test::outlier_mask(gen.dataset);
        const auto& flags = std::get<ScreenKept>(out).fit.inlier_flags;
        REQUIRE(gen.dataset.outlier_count() == 6);
        for (std::size_t i = 0; i < mask.size(); ++i) REQUIRE(flags[i] == !mask[i]);
    }
}

TEST_CASE("brute_force_minimize", "[synth][oracle]") {
    SECTION("noiseless data") {
        const double a0 = 0.995, b0 = 0.97;
        EstimatorInput in;
        for (double m : test::linspace(0.6, 1.5, 12)) {
            in.moneyness.push_back(m);
            in.y.push_back(a0 - b0 * m);
        }
        in.futures_ratio = a0 / b0;
        in.lambda = 12.0;
        const auto g = brute_force_minimize(in);
        CHECK(std::abs(g.alpha - a0) <= 1e-7);
        CHECK(std::abs(g.beta - b0) <= 1e-7);
    }

    SECTION("random instances agree with the closed form") {
        std::mt19937_64 rng(21);
        std::uniform_real_distribution<double> m(0.2, 3.0), y(-1.0, 1.0), q(0.8, 1.3);
        for (int trial = 0; trial < 20; ++trial) {
            EstimatorInput in;
            const std::size_t n = 2 + rng() % 49;
            for (std::size_t i = 0; i < n; ++i) {
                in.moneyness.push_back(m(rng));
                in.y.push_back(y(rng));
            }
            in.futures_ratio = q(rng);
            in.lambda = std::vector<double>{0.0, 1.0, double(n), 10.0 * double(n)}[rng() % 4];
            const auto g = brute_force_minimize(in);
            const auto e = solve_closed_form(in);
            REQUIRE(std::abs(g.alpha - e.zc_crypto) <= 1e-6);
            REQUIRE(std::abs(g.beta - e.zc_ref) <= 1e-6);
            const double f_closed = objective(in, e.zc_crypto, e.zc_ref);
            REQUIRE(g.f_value >= f_closed - 1e-12 * std::max(1.0, f_closed));
            REQUIRE(g.f_value <= f_closed + 1e-9 * std::max(1.0, f_closed));
        }
    }

    SECTION("large lambda") {
        EstimatorInput in;
        std::mt19937_64 rng(2);
        std::normal_distribution<double> noise(0.0, 0.01);
        for (double m : test::linspace(0.5, 1.8, 20)) {
            in.moneyness.push_back(m);
            in.y.push_back(0.99 - 0.95 * m + noise(rng));
        }
        in.futures_ratio = 1.07;
        in.lambda = 1e8;
        const auto g = brute_force_minimize(in);
        CHECK(std::abs(g.alpha / g.beta - 1.07) <= 1e-5);
    }

    SECTION("box too small") {
        const EstimatorInput in{{0.9, 1.1}, {0.1, -0.1}, std::nullopt, 0.0};
        GridConfig grid;
        grid.alpha_lo = 2.0;
        grid.alpha_hi = 3.0;
        CHECK_THROWS_MATCHES(brute_force_minimize(in, grid), Error,
                             Catch::Matchers::Predicate<Error>([](const Error& e) {
                                 return e.code() == ErrorCode::BoxTooSmall;
                             }));
    }
}
