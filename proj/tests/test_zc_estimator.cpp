#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "curves/zc_estimator.hpp"
#include "support.hpp"

using namespace curves;
using Catch::Approx;

namespace {

bool has_code(const std::function<void()>& fn, ErrorCode code) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code() == code;
    }
    return false;
}

EstimatorInput random_input(std::mt19937_64& rng, std::size_t n, double lambda) {
    std::uniform_real_distribution<double> m(0.2, 3.0), y(-1.0, 1.0), ratio(0.8, 1.3);
    EstimatorInput in;
    for (std::size_t i = 0; i < n; ++i) {
        in.moneyness.push_back(m(rng));
        in.y.push_back(y(rng));
    }
    in.futures_ratio = ratio(rng);
    in.lambda = lambda;
    return in;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); }

} // namespace

TEST_CASE("objective", "[estimator]") {
    EstimatorInput exact;
    const double a0 = 0.99, b0 = 0.97;
    for (double m : test::linspace(0.6, 1.6, 9)) {
        exact.moneyness.push_back(m);
        exact.y.push_back(a0 - b0 * m);
    }
    exact.futures_ratio = a0 / b0;
    exact.lambda = 9.0;
    CHECK(objective(exact, a0, b0) == Approx(0.0).margin(1e-28));

    const EstimatorInput single{{1.0}, {0.0}, std::nullopt, 0.0};
    CHECK(objective(single, 1.0, 1.0) == 0.0);

    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> ab(-2.0, 2.0);
    for (int i = 0; i < 200; ++i) {
        const auto in = random_input(rng, 2 + rng() % 49, static_cast<double>(rng() % 4) * 3.0);
        const double a = ab(rng), b = ab(rng);
        const long double oracle = detail::objective_extended(in, a, b);
        REQUIRE(std::abs(objective(in, a, b) - static_cast<double>(oracle)) <= 1e-12 * static_cast<double>(oracle));
    }

    const EstimatorInput missing{{1.0, 1.1}, {0.0, 0.1}, std::nullopt, 1.0};
    CHECK(has_code([&] { objective(missing, 1.0, 1.0); }, ErrorCode::MissingFuturesRatio));
}

TEST_CASE("solve_closed_form examples", "[estimator]") {
    const EstimatorInput in{{0.8, 1.0, 1.2}, {1.0 - 0.8, 1.0 - 1.0, 1.0 - 1.2}, 1.0, 1.0};
    const auto e = solve_closed_form(in);
    CHECK(e.zc_crypto == Approx(1.0).margin(1e-14));
    CHECK(e.zc_ref == Approx(1.0).margin(1e-14));
    CHECK(e.determinant > 0.0);

    const EstimatorInput one{{1.1}, {0.05}, std::nullopt, 0.0};
    CHECK(has_code([&] { solve_closed_form(one); }, ErrorCode::DegenerateSystem));

    const EstimatorInput no_ratio{{0.9, 1.1}, {0.1, -0.1}, std::nullopt, 2.0};
    CHECK(has_code([&] { solve_closed_form(no_ratio); }, ErrorCode::MissingFuturesRatio));

    const EstimatorInput same_m{{1.1, 1.1, 1.1}, {0.0, 0.1, 0.2}, std::nullopt, 0.0};
    CHECK(has_code([&] { solve_closed_form(same_m); }, ErrorCode::DegenerateSystem));
}

TEST_CASE("solve_closed_form matches the grid-search oracle", "[estimator][oracle]") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> noise(0.0, 0.002);
    for (int trial = 0; trial < 5; ++trial) {
        EstimatorInput in;
        const double zc_ref = std::exp(-0.07 * 0.4), zc_crypto = std::exp(-0.01 * 0.4);
        for (double m : test::linspace(0.5, 1.8, 30)) {
            in.moneyness.push_back(m);
            in.y.push_back(zc_crypto - m * zc_ref + noise(rng));
        }
        in.futures_ratio = zc_crypto / zc_ref;
        in.lambda = 30.0;
        const auto e = solve_closed_form(in);
        const auto g = brute_force_minimize(in);
        REQUIRE(std::abs(e.zc_crypto - g.alpha) <= 1e-6);
        REQUIRE(std::abs(e.zc_ref - g.beta) <= 1e-6);
    }
}

TEST_CASE("zc_to_rate", "[estimator]") {
    CHECK(zc_to_rate(1.0, 0.7) == 0.0);
    CHECK(zc_to_rate(std::exp(-0.05 * 0.5), 0.5) == Approx(0.05).margin(1e-15));
    // -ln(0.98) * 365 / 90, evaluated to 40 digits independently.
    CHECK(zc_to_rate(0.98, 90.0 / 365.0) == Approx(0.08193320189882887409929).margin(1e-15));
    CHECK(has_code([] { zc_to_rate(0.0, 1.0); }, ErrorCode::NonPositiveDiscount));
    CHECK(has_code([] { zc_to_rate(-0.5, 1.0); }, ErrorCode::NonPositiveDiscount));
    CHECK(has_code([] { zc_to_rate(0.9, 0.0); }, ErrorCode::NonPositiveTenor));

    ZcEstimate e;
    e.zc_crypto = -0.1;
    e.zc_ref = 0.95;
    attach_rates(e, 0.5);
    CHECK_FALSE(e.rate_crypto.has_value());
    CHECK(e.rate_ref.has_value());
    CHECK((e.flags & kFlagCryptoRateUndefined) != 0);
    CHECK(flags_to_string(e.flags) == "crypto_rate_undefined");
}

TEST_CASE("estimator properties", "[estimator][property]") {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + rng() % 49;
        const double lambdas[] = {0.0, 1.0, static_cast<double>(n), 10.0 * static_cast<double>(n)};
        const auto in = random_input(rng, n, lambdas[rng() % 4]);
        const auto e = solve_closed_form(in);
        const auto s = normal_sums(in);

        // Stationarity of the displayed gradient.
        const auto [ga, gb] = objective_gradient(in, e.zc_crypto, e.zc_ref);
        const double scale = 2.0 * (std::abs(s.sum_y) + std::abs(s.sum_my) + s.h_aa() + s.h_bb());
        REQUIRE(std::abs(ga) <= 1e-9 * scale);
        REQUIRE(std::abs(gb) <= 1e-9 * scale);

        // Determinant formula.
        const double q = in.lambda > 0.0 ? *in.futures_ratio : 0.0;
        const double d = (s.sum_m2 + in.lambda * q * q) * (static_cast<double>(n) + in.lambda) -
                         (in.lambda * q + s.sum_m) * (in.lambda * q + s.sum_m);
        REQUIRE(rel_err(e.determinant, d) <= 1e-12 * std::max(1.0, std::abs(s.h_aa() * s.h_bb())));

        // Strict minimum.
        const double f0 = objective(in, e.zc_crypto, e.zc_ref);
        for (int k = 0; k < 5; ++k) {
            const double da = 1e-3 * unit(rng), db = 1e-3 * unit(rng);
            REQUIRE(objective(in, e.zc_crypto + da, e.zc_ref + db) > f0);
        }

        // Finite-difference gradient at a random point.
        const double a = unit(rng), b = unit(rng), h = 1e-6;
        const auto [pa, pb] = objective_gradient(in, a, b);
        const double fa = (objective(in, a + h, b) - objective(in, a - h, b)) / (2 * h);
        const double fb = (objective(in, a, b + h) - objective(in, a, b - h)) / (2 * h);
        REQUIRE(std::abs(fa - pa) <= 1e-6 * std::max(1.0, std::abs(pa)));
        REQUIRE(std::abs(fb - pb) <= 1e-6 * std::max(1.0, std::abs(pb)));

        // Linearity in y.
        auto in2 = in;
        auto sum = in;
        for (std::size_t i = 0; i < n; ++i) {
            in2.y[i] = unit(rng);
            sum.y[i] = in.y[i] + in2.y[i];
        }
        const auto e2 = solve_closed_form(in2);
        const auto es = solve_closed_form(sum);
        REQUIRE(std::abs(es.zc_crypto - (e.zc_crypto + e2.zc_crypto)) <=
                1e-12 * std::max({1.0, std::abs(e.zc_crypto), std::abs(e2.zc_crypto)}) * (1.0 + s.h_aa() * s.h_bb() / d));
        REQUIRE(std::abs(es.zc_ref - (e.zc_ref + e2.zc_ref)) <=
                1e-12 * std::max({1.0, std::abs(e.zc_ref), std::abs(e2.zc_ref)}) * (1.0 + s.h_aa() * s.h_bb() / d));

        // lambda = 0 reduces to OLS of y on (1, -m).
        auto plain = in;
        plain.lambda = 0.0;
        std::vector<SpreadPoint> pts;
        for (std::size_t i = 0; i < n; ++i) pts.push_back({in.moneyness[i], in.y[i], 0.0});
        const auto ols = fit_line_ols(pts);
        const auto ep = solve_closed_form(plain);
        const double cond = 1.0 + s.h_aa() * s.h_bb() / d;
        REQUIRE(std::abs(ep.zc_crypto - ols.intercept) <= 1e-12 * cond * std::max(1.0, std::abs(ols.intercept)));
        REQUIRE(std::abs(ep.zc_ref + ols.slope) <= 1e-12 * cond * std::max(1.0, std::abs(ols.slope)));
    }
}

TEST_CASE("large lambda pins the futures ratio", "[estimator]") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> zc(0.7, 1.1), m(0.2, 3.0), shift(0.95, 1.05);
    std::normal_distribution<double> noise(0.0, 0.01);
    for (int trial = 0; trial < 50; ++trial) {
        // Parity data whose futures ratio disagrees with the option-implied one.
        const double a0 = zc(rng), b0 = zc(rng);
        EstimatorInput in;
        const std::size_t n = 2 + rng() % 49;
        for (std::size_t i = 0; i < n; ++i) {
            in.moneyness.push_back(m(rng));
            in.y.push_back(a0 - b0 * in.moneyness.back() + noise(rng));
        }
        in.futures_ratio = a0 / b0 * shift(rng);
        in.lambda = 1e8;
        const auto e = solve_closed_form(in);
        REQUIRE(std::abs(e.zc_crypto / e.zc_ref - *in.futures_ratio) <= 1e-6 * *in.futures_ratio);
    }
}

TEST_CASE("single observation with the futures term", "[estimator]") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> m(0.3, 2.5), y(-0.5, 0.5), q(0.9, 1.2), lam(0.1, 10.0);
    for (int trial = 0; trial < 100; ++trial) {
        EstimatorInput in{{m(rng)}, {y(rng)}, q(rng), lam(rng)};
        const double gap = in.moneyness[0] - *in.futures_ratio;
        if (std::abs(gap) < 0.05) continue;
        const auto e = solve_closed_form(in);
        // Both parity relations hold exactly.
        REQUIRE(std::abs(in.y[0] - (e.zc_crypto - in.moneyness[0] * e.zc_ref)) <= 1e-12 / (gap * gap));
        REQUIRE(std::abs(e.zc_crypto - *in.futures_ratio * e.zc_ref) <= 1e-12 / (gap * gap));
        const double d = in.lambda * gap * gap;
        REQUIRE(std::abs(e.determinant - d) <= 1e-12 * (1.0 + in.lambda) * (1.0 + in.lambda) * 16.0);
    }
    // m = F/S makes the system singular.
    EstimatorInput singular{{1.05}, {0.01}, 1.05, 3.0};
    CHECK(has_code([&] { solve_closed_form(singular); }, ErrorCode::DegenerateSystem));
}

TEST_CASE("parse_lambda_policy", "[estimator]") {
    CHECK(parse_lambda_policy("n").lambda_for(30) == 30.0);
    CHECK(parse_lambda_policy("n:0.5").lambda_for(30) == 15.0);
    CHECK(parse_lambda_policy("const:2.5").lambda_for(30) == 2.5);
    CHECK(parse_lambda_policy("const:0").lambda_for(7) == 0.0);
    CHECK_THROWS_AS(parse_lambda_policy("const:-1"), Error);
    CHECK_THROWS_AS(parse_lambda_policy("sqrt"), Error);
}

TEST_CASE("estimate_slice", "[estimator][slice]") {
    RansacConfig cfg;

    SECTION("exact recovery") {
        const auto gen = test::generated_slice(test::rates_slice(0.10, 0.0, 0.25), 1);
        REQUIRE(gen.slice.futures_ratio.has_value());
        CHECK(*gen.slice.futures_ratio == Approx(1.025315120524428840678).epsilon(1e-14));
        const auto r = estimate_slice(gen.slice, cfg);
        REQUIRE(std::holds_alternative<ZcEstimate>(r));
        const auto& e = std::get<ZcEstimate>(r);
        CHECK(std::abs(*e.rate_ref - 0.10) <= 1e-10);
        CHECK(std::abs(*e.rate_crypto - 0.0) <= 1e-10);
        CHECK(e.n_used == 30);
        CHECK(e.lambda_used == 30.0);
        CHECK(e.tau_years == Approx(0.25).margin(1e-12));
        CHECK(e.flags == kFlagNone);
    }

    SECTION("steep spread slope is rejected") {
        auto spec = test::rates_slice(0.08, 0.02, 0.3);
        spec.moneyness = test::linspace(0.8, 1.5, 30);
        spec.spread = {0.2, -1.2};
        const auto gen = test::generated_slice(spec, 2);
        const auto r = estimate_slice(gen.slice, cfg);
        REQUIRE(std::holds_alternative<SliceRejected>(r));
        CHECK(std::get<SliceRejected>(r).reason == RejectReason::SlopeDeviation);
        CHECK(to_string(std::get<SliceRejected>(r).reason) == "slope deviation");
    }

    SECTION("missing futures falls back to lambda 0") {
        auto gen = test::generated_slice(test::rates_slice(0.05, 0.01, 0.5), 3);
        gen.slice.futures_ratio.reset();
        gen.slice.futures_mid.reset();
        const auto r = estimate_slice(gen.slice, cfg);
        REQUIRE(std::holds_alternative<ZcEstimate>(r));
        const auto& e = std::get<ZcEstimate>(r);
        CHECK((e.flags & kFlagNoFutures) != 0);
        CHECK(e.lambda_used == 0.0);
        CHECK(std::abs(*e.rate_ref - 0.05) <= 1e-10);
    }

    SECTION("too few points") {
        auto gen = test::generated_slice(test::rates_slice(0.05, 0.01, 0.5, 3), 3);
        const auto r = estimate_slice(gen.slice, cfg);
        REQUIRE(std::holds_alternative<SliceRejected>(r));
        CHECK(std::get<SliceRejected>(r).reason == RejectReason::TooFewPoints);
    }

    SECTION("noisy slices with outliers") {
        int ok = 0;
        const int seeds = 100;
        for (int seed = 1; seed <= seeds; ++seed) {
            auto spec = test::rates_slice(0.10, 0.0, 0.25);
            spec.noise_sd = 0.002;
            const auto gen = test::generated_slice(spec, static_cast<std::uint64_t>(seed), 0.2);
            RansacConfig c;
            c.seed = static_cast<std::uint64_t>(seed);
            const auto r = estimate_slice(gen.slice, c);
            if (const auto* e = std::get_if<ZcEstimate>(&r)) {
                if (std::abs(e->zc_crypto - spec.zc_crypto) <= 0.005 && std::abs(e->zc_ref - spec.zc_ref) <= 0.005) ++ok;
            }
        }
        CHECK(ok >= 95);
    }
}
