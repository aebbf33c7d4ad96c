#pragma once

// Closed-form zero-coupon estimation from call-put parity and the futures
// basis.
//
// For one (t, T), with y_i = C_i - P_i (crypto units), m_i = K_i / S and
// q = F / S, the estimator minimises
//
//     f(a, b) = sum_i (y_i - a + b m_i)^2 + lambda (a - q b)^2
//
// where a is the crypto zero-coupon price and b the reference-currency one.
// The futures term is the squared gap in ZC_crypto = (F / S) ZC_ref, so it
// vanishes on arbitrage-consistent prices. Setting the gradient to zero gives
// a 2x2 linear system; its determinant is
//
//     d = (sum m^2 + lambda q^2)(n + lambda) - (lambda q + sum m)^2.

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "curves/core/error.hpp"
#include "curves/core/seed.hpp"
#include "curves/core/time.hpp"
#include "curves/market_data.hpp"
#include "curves/ransac.hpp"

namespace curves {

struct EstimatorInput {
    std::vector<double> moneyness;
    std::vector<double> y;
    std::optional<double> futures_ratio;
    double lambda = 0.0;

    void validate() const {
        require(moneyness.size() == y.size(), ErrorCode::InvalidArgument, "moneyness and y differ in length");
        require(!y.empty(), ErrorCode::InvalidArgument, "estimator input is empty");
        require(lambda >= 0.0, ErrorCode::InvalidArgument, "lambda must be nonnegative");
        for (double m : moneyness) require(m > 0.0, ErrorCode::InvalidArgument, "moneyness must be positive");
        if (futures_ratio) require(*futures_ratio > 0.0, ErrorCode::InvalidArgument, "futures ratio must be positive");
        if (lambda > 0.0) require(futures_ratio.has_value(), ErrorCode::MissingFuturesRatio, "lambda > 0 needs F/S");
    }
};

/// Sufficient statistics of the normal equations.
struct NormalSums {
    double n = 0.0;
    double sum_m = 0.0;
    double sum_m2 = 0.0;
    double sum_y = 0.0;
    double sum_my = 0.0;
    double lambda = 0.0;
    double ratio = 0.0; // F / S, zero when the futures term is off

    // [[h_aa, -h_ab], [-h_ab, h_bb]] is half the Hessian of f.
    double h_aa() const { return n + lambda; }
    double h_bb() const { return sum_m2 + lambda * ratio * ratio; }
    double h_ab() const { return lambda * ratio + sum_m; }
    double determinant() const { return h_bb() * h_aa() - h_ab() * h_ab(); }
};

inline NormalSums normal_sums(const EstimatorInput& input) {
    input.validate();
    NormalSums s;
    s.n = static_cast<double>(input.y.size());
    for (std::size_t i = 0; i < input.y.size(); ++i) {
        const double m = input.moneyness[i];
        s.sum_m += m;
        s.sum_m2 += m * m;
        s.sum_y += input.y[i];
        s.sum_my += m * input.y[i];
    }
    s.lambda = input.lambda;
    s.ratio = input.lambda > 0.0 ? *input.futures_ratio : 0.0;
    return s;
}

inline double objective(const EstimatorInput& input, double alpha, double beta) {
    input.validate();
    double f = 0.0;
    for (std::size_t i = 0; i < input.y.size(); ++i) {
        const double r = input.y[i] - alpha + beta * input.moneyness[i];
        f += r * r;
    }
    if (input.lambda > 0.0) {
        const double g = alpha - *input.futures_ratio * beta;
        f += input.lambda * g * g;
    }
    return f;
}

/// Analytic gradient of `objective`.
inline std::pair<double, double> objective_gradient(const EstimatorInput& input, double alpha, double beta) {
    const auto s = normal_sums(input);
    const double da = 2.0 * alpha * s.h_aa() - 2.0 * beta * s.h_ab() - 2.0 * s.sum_y;
    const double db = -2.0 * alpha * s.h_ab() + 2.0 * beta * s.h_bb() + 2.0 * s.sum_my;
    return {da, db};
}

enum EstimateFlag : unsigned {
    kFlagNone = 0,
    kFlagNoFutures = 1u << 0,          // futures absent, solved with lambda = 0
    kFlagNegativeIntercept = 1u << 1,  // spread screen intercept < 0
    kFlagCryptoRateUndefined = 1u << 2,
    kFlagRefRateUndefined = 1u << 3,
};

inline std::string flags_to_string(unsigned flags) {
    std::string out;
    auto add = [&](unsigned bit, const char* name) {
        if (flags & bit) {
            if (!out.empty()) out += '|';
            out += name;
        }
    };
    add(kFlagNoFutures, "no_futures");
    add(kFlagNegativeIntercept, "negative_intercept");
    add(kFlagCryptoRateUndefined, "crypto_rate_undefined");
    add(kFlagRefRateUndefined, "ref_rate_undefined");
    return out;
}

struct ScreenDiagnostics {
    double slope = 0.0;
    double intercept = 0.0;
    std::size_t inliers = 0;
    std::size_t candidates = 0;
};

struct ZcEstimate {
    double zc_crypto = 0.0; // alpha*
    double zc_ref = 0.0;    // beta*
    double determinant = 0.0;
    std::size_t n_used = 0;
    double lambda_used = 0.0;
    std::optional<double> rate_crypto;
    std::optional<double> rate_ref;
    double tau_years = 0.0;
    unsigned flags = kFlagNone;
    std::optional<ScreenDiagnostics> screen;
};

inline constexpr double kDegeneracyTolerance = 1e-12;

/// Solves grad f = 0. Throws DegenerateSystem when d is below
/// 1e-12 * trace(H)^2.
inline ZcEstimate solve_closed_form(const EstimatorInput& input) {
    const auto s = normal_sums(input);
    const double d = s.determinant();
    const double trace = s.h_aa() + s.h_bb();
    if (!(d > kDegeneracyTolerance * trace * trace)) {
        throw Error(ErrorCode::DegenerateSystem, "normal matrix is singular (d = " + csv::format_double(d) + ")");
    }
    ZcEstimate e;
    e.zc_crypto = (s.h_bb() * s.sum_y - s.h_ab() * s.sum_my) / d;
    e.zc_ref = (s.h_ab() * s.sum_y - s.h_aa() * s.sum_my) / d;
    e.determinant = d;
    e.n_used = input.y.size();
    e.lambda_used = input.lambda;
    return e;
}

/// Continuously compounded rate implied by a discount factor.
inline double zc_to_rate(double zc, double tau_years) {
    require(zc > 0.0, ErrorCode::NonPositiveDiscount, "zero-coupon price must be positive");
    require(tau_years > 0.0, ErrorCode::NonPositiveTenor, "year fraction must be positive");
    return -std::log(zc) / tau_years;
}

/// Fills the rate fields; a non-positive zero-coupon leaves its rate empty.
inline void attach_rates(ZcEstimate& e, double tau_years) {
    require(tau_years > 0.0, ErrorCode::NonPositiveTenor, "year fraction must be positive");
    e.tau_years = tau_years;
    e.rate_crypto.reset();
    e.rate_ref.reset();
    e.flags &= ~(kFlagCryptoRateUndefined | kFlagRefRateUndefined);
    if (e.zc_crypto > 0.0) e.rate_crypto = zc_to_rate(e.zc_crypto, tau_years);
    else e.flags |= kFlagCryptoRateUndefined;
    if (e.zc_ref > 0.0) e.rate_ref = zc_to_rate(e.zc_ref, tau_years);
    else e.flags |= kFlagRefRateUndefined;
}

// ---------------------------------------------------------------------------
// Slice pipeline

/// Weight of the futures term as a function of the number of strikes used.
struct LambdaPolicy {
    enum class Kind { Constant, ProportionalToN };
    Kind kind = Kind::ProportionalToN;
    double value = 1.0;

    static LambdaPolicy constant(double c) { return {Kind::Constant, c}; }
    static LambdaPolicy proportional(double c = 1.0) { return {Kind::ProportionalToN, c}; }

    double lambda_for(std::size_t n) const {
        return kind == Kind::Constant ? value : value * static_cast<double>(n);
    }

    std::string to_string() const {
        return kind == Kind::Constant ? "const:" + csv::format_double(value)
                                      : (value == 1.0 ? std::string("n") : "n:" + csv::format_double(value));
    }
};

/// Parses `n`, `n:<c>` or `const:<v>`.
inline LambdaPolicy parse_lambda_policy(std::string_view text) {
    auto number = [&](std::string_view s) {
        const auto v = csv::parse_double(s);
        require(v.has_value() && *v >= 0.0, ErrorCode::ConfigError,
                "bad lambda policy '" + std::string(text) + "'");
        return *v;
    };
    if (text == "n") return LambdaPolicy::proportional(1.0);
    if (text.starts_with("n:")) return LambdaPolicy::proportional(number(text.substr(2)));
    if (text.starts_with("const:")) return LambdaPolicy::constant(number(text.substr(6)));
    throw Error(ErrorCode::ConfigError, "bad lambda policy '" + std::string(text) + "'");
}

enum class RejectReason {
    SlopeDeviation,
    NoConsensus,
    TooFewPoints,
    DegenerateSystem,
    EmptyDay,
    Other,
};

inline std::string_view to_string(RejectReason r) {
    switch (r) {
    case RejectReason::SlopeDeviation: return "slope deviation";
    case RejectReason::NoConsensus: return "no consensus";
    case RejectReason::TooFewPoints: return "too few points";
    case RejectReason::DegenerateSystem: return "degenerate system";
    case RejectReason::EmptyDay: return "empty day";
    case RejectReason::Other: return "other";
    }
    return "other";
}

struct SliceRejected {
    RejectReason reason = RejectReason::Other;
    std::string detail;
};

using SliceResult = std::variant<ZcEstimate, SliceRejected>;

inline RejectReason reason_for(ErrorCode code) {
    switch (code) {
    case ErrorCode::NoConsensus: return RejectReason::NoConsensus;
    case ErrorCode::TooFewPoints: return RejectReason::TooFewPoints;
    case ErrorCode::DegenerateSystem:
    case ErrorCode::DegenerateX: return RejectReason::DegenerateSystem;
    default: return RejectReason::Other;
    }
}

/// Builds the solver input from screened observations. Returns the input and
/// whether the futures term had to be dropped.
inline std::pair<EstimatorInput, bool> make_estimator_input(std::span<const PairedObservation> observations,
                                                            std::optional<double> futures_ratio,
                                                            const LambdaPolicy& policy) {
    EstimatorInput in;
    in.moneyness.reserve(observations.size());
    in.y.reserve(observations.size());
    for (const auto& o : observations) {
        in.moneyness.push_back(o.moneyness);
        in.y.push_back(o.y);
    }
    const bool no_futures = !futures_ratio.has_value();
    in.futures_ratio = futures_ratio;
    in.lambda = no_futures ? 0.0 : policy.lambda_for(observations.size());
    return {std::move(in), no_futures};
}

/// Screen, solve and annualise one (t, T) slice. The RANSAC seed is derived
/// from `ransac_cfg.seed` and the slice key.
inline SliceResult estimate_slice(const MarketSlice& slice, const RansacConfig& ransac_cfg,
                                  const LambdaPolicy& lambda_policy = {},
                                  double days_per_year = kDefaultDaysPerYear) {
    RansacConfig cfg = ransac_cfg;
    cfg.seed = slice_seed(ransac_cfg.seed, slice.timestamp, slice.expiry);
    try {
        auto screened = spread_screen(slice.observations, cfg);
        if (auto* rejected = std::get_if<ScreenRejected>(&screened)) {
            return SliceRejected{RejectReason::SlopeDeviation,
                                 "slope " + csv::format_double(rejected->fit.slope)};
        }
        auto& kept = std::get<ScreenKept>(screened);
        auto [input, no_futures] = make_estimator_input(kept.observations, slice.futures_ratio, lambda_policy);
        auto est = solve_closed_form(input);
        if (no_futures) est.flags |= kFlagNoFutures;
        if (kept.negative_intercept) est.flags |= kFlagNegativeIntercept;
        est.screen = ScreenDiagnostics{kept.fit.slope, kept.fit.intercept, kept.observations.size(),
                                       slice.observations.size()};
        attach_rates(est, year_fraction(slice.timestamp, slice.expiry, days_per_year));
        return est;
    } catch (const Error& e) {
        if (e.code() == ErrorCode::InvalidArgument) throw;
        return SliceRejected{reason_for(e.code()), e.what()};
    }
}

} // namespace curves
