#pragma once

// Synthetic inverse-option markets with known zero-coupon curves, plus a
// brute-force minimiser used as an independent oracle for the closed form.
//
// Construction for one (t, T) with ZC_ref = exp(-r_ref tau) and
// ZC_crypto = exp(-r_crypto tau):
//
//   F            = S * ZC_crypto / ZC_ref
//   y(m)         = ZC_crypto - m * ZC_ref + eps,      eps ~ N(0, noise_sd)
//   put mid      = max(m ZC_ref - ZC_crypto, 0) + tv(m)
//   call mid     = put mid + y(m)
//   tv(m)        = floor + atm * ZC_crypto * min(m, 1/m)
//
// Half-spreads: with total spread h = call half-spread + put half-spread,
// x = call_ask - put_bid = y + h and Y = put_ask - call_bid = -y + h, so
// Y = zeta + xi * x holds exactly when
//
//   h = (zeta + (1 + xi) y) / (1 - xi),
//
// split between the legs in proportion to their mids. A planted outlier raises
// the ask of one leg, which moves its spread point vertically off the line.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "curves/core/error.hpp"
#include "curves/core/seed.hpp"
#include "curves/core/time.hpp"
#include "curves/market_data.hpp"
#include "curves/zc_estimator.hpp"

namespace curves {

/// Piecewise-linear rate as a function of year fraction, flat outside the
/// knots.
struct TermStructure {
    std::vector<std::pair<double, double>> knots; // (tau, rate), increasing tau

    static TermStructure flat(double rate) { return {{{0.0, rate}}}; }

    double operator()(double tau) const {
        require(!knots.empty(), ErrorCode::InvalidArgument, "term structure has no knots");
        if (tau <= knots.front().first) return knots.front().second;
        if (tau >= knots.back().first) return knots.back().second;
        const auto hi = std::upper_bound(knots.begin(), knots.end(), tau,
                                         [](double t, const auto& k) { return t < k.first; });
        const auto lo = hi - 1;
        const double w = (tau - lo->first) / (hi->first - lo->first);
        return lo->second + w * (hi->second - lo->second);
    }
};

struct SpreadModel {
    double zeta = 0.02;
    double xi = -1.01;
};

struct Skeleton {
    double floor = 0.02;
    double atm = 0.05;
};

struct TruthSpec {
    TermStructure rate_ref = TermStructure::flat(0.10);
    TermStructure rate_crypto = TermStructure::flat(0.0);
    double spot_initial = 60000.0;
    double spot_vol = 0.6; // annualised, hourly GBM steps
    UtcTime start = UtcTime::at(Date::from_ymd(2024, 1, 1));
    int days = 1;
    int step_hours = 1;
    std::vector<UtcTime> expiries;
    double list_min_days = 0.0; // an expiry is quoted while list_min_days <= T - t < list_max_days
    double list_max_days = std::numeric_limits<double>::infinity();
    std::vector<double> moneyness;
    double strike_step = 1.0;
    double noise_sd = 0.0;
    double futures_noise_sd = 0.0; // relative
    SpreadModel spread;
    Skeleton skeleton;
    double outlier_fraction = 0.0;
    double outlier_magnitude = 0.25; // minimum displacement of one ask, crypto units
    double quote_size = 10.0;
    std::uint64_t seed = 1;

    void validate() const {
        require(!rate_ref.knots.empty() && !rate_crypto.knots.empty(), ErrorCode::InvalidArgument,
                "rate curves need knots");
        for (const auto* ts : {&rate_ref, &rate_crypto}) {
            for (std::size_t i = 0; i < ts->knots.size(); ++i) {
                require(std::isfinite(ts->knots[i].first) && std::isfinite(ts->knots[i].second),
                        ErrorCode::InvalidArgument, "rates must be finite");
                if (i > 0) {
                    require(ts->knots[i].first > ts->knots[i - 1].first, ErrorCode::InvalidArgument,
                            "rate knots must have increasing tau");
                }
            }
        }
        require(spot_initial > 0.0 && spot_vol >= 0.0, ErrorCode::InvalidArgument, "bad spot parameters");
        require(days >= 1 && step_hours >= 1, ErrorCode::InvalidArgument, "days and step_hours must be >= 1");
        require(!moneyness.empty(), ErrorCode::InvalidArgument, "moneyness grid is empty");
        for (double m : moneyness) require(m > 0.0, ErrorCode::InvalidArgument, "moneyness must be positive");
        require(strike_step > 0.0, ErrorCode::InvalidArgument, "strike step must be positive");
        require(noise_sd >= 0.0 && futures_noise_sd >= 0.0, ErrorCode::InvalidArgument, "noise must be >= 0");
        require(outlier_fraction >= 0.0 && outlier_fraction < 1.0, ErrorCode::InvalidArgument,
                "outlier fraction must lie in [0, 1)");
        require(outlier_magnitude >= 0.0, ErrorCode::InvalidArgument, "outlier magnitude must be >= 0");
        require(spread.xi < 1.0, ErrorCode::InvalidArgument, "spread slope must be below 1");
        require(skeleton.floor > 0.0 && skeleton.atm >= 0.0, ErrorCode::InfeasibleSkeleton,
                "skeleton time value must be positive (floor > 0, atm >= 0)");
    }
};

enum class Label { Clean, Outlier };

struct PairLabel {
    std::size_t call_index = 0; // index into LabeledDataset::quotes
    std::size_t put_index = 0;
    UtcTime timestamp;
    UtcTime expiry;
    double strike = 0.0;
    Label label = Label::Clean;

    friend bool operator==(const PairLabel&, const PairLabel&) = default;
};

struct ExcludedStrike {
    UtcTime timestamp;
    UtcTime expiry;
    double strike = 0.0;
    std::string reason;
};

struct TruthRow {
    Date date;
    UtcTime expiry;
    double rate_ref = 0.0;
    double rate_crypto = 0.0;
};

struct LabeledDataset {
    std::vector<Quote> quotes;
    std::vector<PairLabel> labels;
    std::vector<ExcludedStrike> excluded;
    std::vector<TruthRow> truth;
    TruthSpec spec;

    std::size_t outlier_count() const {
        return static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(),
                                                      [](const PairLabel& l) { return l.label == Label::Outlier; }));
    }
};

/// One generated (t, T) market: the inputs a caller can pin directly.
struct SliceSpec {
    UtcTime timestamp = UtcTime::at(Date::from_ymd(2024, 1, 1));
    UtcTime expiry = UtcTime::at(Date::from_ymd(2024, 4, 1), 8);
    double spot = 60000.0;
    double zc_crypto = 1.0;
    double zc_ref = 1.0;
    std::vector<double> moneyness;
    double strike_step = 1.0;
    double noise_sd = 0.0;
    double futures_noise_sd = 0.0;
    SpreadModel spread;
    Skeleton skeleton;
    double quote_size = 10.0;
};

/// Appends the quotes of one slice to `dataset` (index, future, then
/// call/put per strike) and records clean labels for every emitted pair.
inline void append_slice(LabeledDataset& dataset, const SliceSpec& s, std::mt19937_64& rng, bool emit_index = true) {
    std::normal_distribution<double> normal(0.0, 1.0);
    if (emit_index) dataset.quotes.emplace_back(IndexPoint{s.timestamp, s.spot});

    double fut = s.spot * s.zc_crypto / s.zc_ref;
    if (s.futures_noise_sd > 0.0) fut *= 1.0 + s.futures_noise_sd * normal(rng);
    dataset.quotes.emplace_back(
        FuturesQuote{s.timestamp, s.expiry, fut * (1.0 - 1e-4), fut * (1.0 + 1e-4), s.quote_size, s.quote_size});

    const auto& sp = s.spread;
    double last_strike = -1.0;
    for (double target_m : s.moneyness) {
        const double strike = std::round(target_m * s.spot / s.strike_step) * s.strike_step;
        // Noise is drawn for every grid point so exclusions do not shift the
        // stream for later strikes.
        const double eps = s.noise_sd > 0.0 ? s.noise_sd * normal(rng) : 0.0;
        auto exclude = [&](const char* why) { dataset.excluded.push_back({s.timestamp, s.expiry, strike, why}); };
        if (!(strike > 0.0) || strike <= last_strike) {
            exclude("strike collision after rounding");
            continue;
        }
        last_strike = strike;
        const double m = strike / s.spot;
        const double y = s.zc_crypto - m * s.zc_ref + eps;
        const double tv = s.skeleton.floor + s.skeleton.atm * s.zc_crypto * std::min(m, 1.0 / m);
        const double put = std::max(m * s.zc_ref - s.zc_crypto, 0.0) + tv;
        const double call = put + y;
        if (!(call > 0.0) || !(put > 0.0)) {
            exclude("non-positive mid");
            continue;
        }
        const double h = (sp.zeta + (1.0 + sp.xi) * y) / (1.0 - sp.xi);
        if (!(h >= 0.0) || h > call + put) {
            exclude("infeasible spread");
            continue;
        }
        const double hc = h * call / (call + put);
        const double hp = h - hc;
        const std::size_t call_index = dataset.quotes.size();
        dataset.quotes.emplace_back(OptionQuote{s.timestamp, s.expiry, strike, OptionSide::Call, call - hc, call + hc,
                                                s.quote_size, s.quote_size});
        dataset.quotes.emplace_back(OptionQuote{s.timestamp, s.expiry, strike, OptionSide::Put, put - hp, put + hp,
                                                s.quote_size, s.quote_size});
        dataset.labels.push_back({call_index, call_index + 1, s.timestamp, s.expiry, strike, Label::Clean});
    }
}

/// Nearest-integer count of pairs to displace: round(n * fraction), halves up.
inline std::size_t outlier_count_for(std::size_t n, double fraction) {
    return static_cast<std::size_t>(std::floor(static_cast<double>(n) * fraction + 0.5));
}

/// In every (t, T) group, displaces round(n * fraction) seeded pairs by
/// raising one leg's ask by magnitude * (1 + u), u ~ U[0, 1), and relabels
/// them as outliers.
inline LabeledDataset inject_outliers(LabeledDataset dataset, double fraction, double magnitude, std::uint64_t seed) {
    require(fraction >= 0.0 && fraction < 1.0, ErrorCode::InvalidArgument, "outlier fraction must lie in [0, 1)");
    if (fraction == 0.0) return dataset;

    std::map<std::pair<std::int64_t, std::int64_t>, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < dataset.labels.size(); ++i) {
        const auto& l = dataset.labels[i];
        groups[{l.timestamp.seconds_since_epoch(), l.expiry.seconds_since_epoch()}].push_back(i);
    }
    for (auto& [key, members] : groups) {
        std::mt19937_64 rng(slice_seed(seed, UtcTime(key.first), UtcTime(key.second)));
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::shuffle(members.begin(), members.end(), rng);
        const std::size_t k = outlier_count_for(members.size(), fraction);
        for (std::size_t j = 0; j < k; ++j) {
            auto& label = dataset.labels[members[j]];
            const bool call_leg = unit(rng) < 0.5;
            const double displacement = magnitude * (1.0 + unit(rng));
            auto& q = std::get<OptionQuote>(dataset.quotes[call_leg ? label.call_index : label.put_index]);
            q.ask += displacement;
            label.label = Label::Outlier;
        }
    }
    return dataset;
}

inline bool is_listed(const TruthSpec& spec, UtcTime t, UtcTime expiry) {
    if (expiry <= t) return false;
    const double d = days_between(t, expiry);
    return d >= spec.list_min_days && d < spec.list_max_days;
}

/// Hourly (or every step_hours) spot path from a seeded driftless GBM.
inline std::vector<double> spot_path(const TruthSpec& spec) {
    const std::size_t steps = static_cast<std::size_t>(spec.days) * 24 / static_cast<std::size_t>(spec.step_hours);
    std::vector<double> path(std::max<std::size_t>(steps, 1));
    std::mt19937_64 rng(combine_seed(spec.seed, 0x5907));
    std::normal_distribution<double> normal(0.0, 1.0);
    const double dt = spec.step_hours / (24.0 * 365.0);
    const double sd = spec.spot_vol * std::sqrt(dt);
    double s = spec.spot_initial;
    for (auto& p : path) {
        p = s;
        s *= std::exp(-0.5 * sd * sd + sd * normal(rng));
    }
    return path;
}

/// Builds the full labelled dataset described by `spec`, deterministic in
/// `spec.seed`.
inline LabeledDataset generate_market(const TruthSpec& spec) {
    spec.validate();
    LabeledDataset out;
    out.spec = spec;
    auto expiries = spec.expiries;
    std::sort(expiries.begin(), expiries.end());
    expiries.erase(std::unique(expiries.begin(), expiries.end()), expiries.end());

    const auto path = spot_path(spec);
    for (std::size_t k = 0; k < path.size(); ++k) {
        const UtcTime t = spec.start.plus_hours(static_cast<std::int64_t>(k) * spec.step_hours);
        bool index_emitted = false;
        for (const UtcTime expiry : expiries) {
            if (!is_listed(spec, t, expiry)) continue;
            const double tau = year_fraction(t, expiry);
            SliceSpec s;
            s.timestamp = t;
            s.expiry = expiry;
            s.spot = path[k];
            s.zc_ref = std::exp(-spec.rate_ref(tau) * tau);
            s.zc_crypto = std::exp(-spec.rate_crypto(tau) * tau);
            s.moneyness = spec.moneyness;
            s.strike_step = spec.strike_step;
            s.noise_sd = spec.noise_sd;
            s.futures_noise_sd = spec.futures_noise_sd;
            s.spread = spec.spread;
            s.skeleton = spec.skeleton;
            s.quote_size = spec.quote_size;
            std::mt19937_64 rng(slice_seed(spec.seed, t, expiry));
            append_slice(out, s, rng, !index_emitted);
            index_emitted = true;
        }
        if (!index_emitted) out.quotes.emplace_back(IndexPoint{t, path[k]});
    }

    std::map<std::pair<std::int64_t, std::int64_t>, bool> seen;
    for (const auto& l : out.labels) {
        const Date d = l.timestamp.date();
        if (seen.emplace(std::pair{d.days_since_epoch(), l.expiry.seconds_since_epoch()}, true).second) {
            const double tau = year_fraction(UtcTime::at(d, 12), l.expiry);
            out.truth.push_back({d, l.expiry, spec.rate_ref(tau), spec.rate_crypto(tau)});
        }
    }
    return inject_outliers(std::move(out), spec.outlier_fraction, spec.outlier_magnitude,
                           combine_seed(spec.seed, 0x71));
}

// ---------------------------------------------------------------------------
// Brute-force oracle

struct GridConfig {
    double alpha_lo = -10.0;
    double alpha_hi = 10.0;
    double beta_lo = -10.0;
    double beta_hi = 10.0;
    int points = 21;          // grid points per axis and level
    double final_step = 1e-8; // outer (alpha) resolution; beta is refined 10x finer
};

struct GridMinimum {
    double alpha = 0.0;
    double beta = 0.0;
    double f_value = 0.0;
};

/// Search box scaled from the data: wide enough for zero-coupon prices near
/// one and for the intercept implied by the observed y range.
inline GridConfig default_grid(const EstimatorInput& input) {
    double ymax = 0.0;
    for (double v : input.y) ymax = std::max(ymax, std::abs(v));
    const double b = 4.0 * (1.0 + ymax);
    return {-b, b, -b, b, 21, 1e-8};
}

namespace detail {

// Objective evaluated in extended precision, written independently of
// `objective` so the two can cross-check each other.
inline long double objective_extended(const EstimatorInput& in, long double a, long double b) {
    long double f = 0.0L;
    for (std::size_t i = 0; i < in.y.size(); ++i) {
        const long double r = static_cast<long double>(in.y[i]) - a + b * static_cast<long double>(in.moneyness[i]);
        f += r * r;
    }
    if (in.lambda > 0.0) {
        const long double g = a - static_cast<long double>(*in.futures_ratio) * b;
        f += static_cast<long double>(in.lambda) * g * g;
    }
    return f;
}

// Coarse-to-fine search of a convex function of one variable on [lo, hi].
// For a convex function the minimiser lies within one step of the best grid
// point, so each level narrows to that neighbourhood.
template <class F>
std::pair<long double, long double> convex_grid_min(F&& fn, long double lo, long double hi, int points,
                                                    long double final_step) {
    const long double box_lo = lo, box_hi = hi;
    long double best_x = lo, best_f = 0.0L;
    while (true) {
        const long double step = (hi - lo) / static_cast<long double>(points - 1);
        best_f = std::numeric_limits<long double>::infinity();
        for (int i = 0; i < points; ++i) {
            const long double x = (i == points - 1) ? hi : lo + step * static_cast<long double>(i);
            const long double v = fn(x);
            if (v < best_f) {
                best_f = v;
                best_x = x;
            }
        }
        if (step <= final_step) break;
        lo = std::max(box_lo, best_x - step);
        hi = std::min(box_hi, best_x + step);
    }
    return {best_x, best_f};
}

} // namespace detail

/// Nested coarse-to-fine grid search: for each alpha the inner search
/// minimises over beta, and the outer search minimises that profile over
/// alpha. Throws BoxTooSmall when the minimiser sits on the box boundary.
inline GridMinimum brute_force_minimize(const EstimatorInput& input, const GridConfig& grid) {
    input.validate();
    require(grid.points >= 3 && grid.final_step > 0.0 && grid.alpha_lo < grid.alpha_hi &&
                grid.beta_lo < grid.beta_hi,
            ErrorCode::InvalidArgument, "bad grid configuration");
    const long double inner_step = static_cast<long double>(grid.final_step) / 10.0L;
    auto profile_beta = [&](long double a) {
        return detail::convex_grid_min([&](long double b) { return detail::objective_extended(input, a, b); },
                                       grid.beta_lo, grid.beta_hi, grid.points, inner_step);
    };
    const auto [a_best, f_best] = detail::convex_grid_min(
        [&](long double a) { return profile_beta(a).second; }, grid.alpha_lo, grid.alpha_hi, grid.points,
        static_cast<long double>(grid.final_step));
    const long double b_best = profile_beta(a_best).first;

    const long double edge_a = 2.0L * static_cast<long double>(grid.final_step);
    const long double edge_b = 2.0L * inner_step;
    if (a_best - grid.alpha_lo < edge_a || grid.alpha_hi - a_best < edge_a || b_best - grid.beta_lo < edge_b ||
        grid.beta_hi - b_best < edge_b) {
        throw Error(ErrorCode::BoxTooSmall, "grid minimum lies on the search box boundary");
    }
    return {static_cast<double>(a_best), static_cast<double>(b_best), static_cast<double>(f_best)};
}

/// Grows the default box until the minimiser is interior.
inline GridMinimum brute_force_minimize(const EstimatorInput& input) {
    GridConfig grid = default_grid(input);
    for (int attempt = 0;; ++attempt) {
        try {
            return brute_force_minimize(input, grid);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::BoxTooSmall || attempt >= 12) throw;
            grid.alpha_lo *= 4.0;
            grid.alpha_hi *= 4.0;
            grid.beta_lo *= 4.0;
            grid.beta_hi *= 4.0;
        }
    }
}

} // namespace curves
