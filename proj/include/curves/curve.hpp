#pragma once

// Daily aggregation of hourly slices, two-leg yield curves, and fixed-tenor
// series built by linear interpolation in (year fraction, rate).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "curves/core/csv.hpp"
#include "curves/core/error.hpp"
#include "curves/core/seed.hpp"
#include "curves/core/time.hpp"
#include "curves/market_data.hpp"
#include "curves/ransac.hpp"
#include "curves/zc_estimator.hpp"

namespace curves {

enum class AggregationPolicy { Pool, Median };

inline std::string_view to_string(AggregationPolicy p) { return p == AggregationPolicy::Pool ? "pool" : "median"; }

inline AggregationPolicy parse_aggregation_policy(std::string_view text) {
    if (text == "pool") return AggregationPolicy::Pool;
    if (text == "median") return AggregationPolicy::Median;
    throw Error(ErrorCode::ConfigError, "bad aggregation policy '" + std::string(text) + "'");
}

struct AggregationConfig {
    RansacConfig ransac;
    LambdaPolicy lambda;
    AggregationPolicy policy = AggregationPolicy::Pool;
    double days_per_year = kDefaultDaysPerYear;
};

struct HourRejection {
    UtcTime timestamp;
    SliceRejected rejection;
};

struct DailyEstimate {
    Date date;
    UtcTime expiry;
    ZcEstimate estimate;
    AggregationPolicy policy = AggregationPolicy::Pool;
    std::size_t hours_total = 0;
    std::size_t hours_pooled = 0;
    std::vector<HourRejection> hour_rejections;
};

struct DayRejected {
    SliceRejected rejection;
    std::size_t hours_total = 0;
    std::vector<HourRejection> hour_rejections;
};

using DailyResult = std::variant<DailyEstimate, DayRejected>;

/// Daily anchor for year fractions: 12:00 UTC.
inline UtcTime daily_anchor(Date date) { return UtcTime::at(date, 12); }

namespace detail {

inline double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t k = v.size() / 2;
    return v.size() % 2 ? v[k] : 0.5 * (v[k - 1] + v[k]);
}

inline ZcEstimate median_estimate(const std::vector<ZcEstimate>& hours) {
    std::vector<double> zc_c, zc_r, rc, rr, det;
    std::size_t n = 0;
    double lambda = 0.0;
    unsigned flags = kFlagNone;
    for (const auto& h : hours) {
        zc_c.push_back(h.zc_crypto);
        zc_r.push_back(h.zc_ref);
        det.push_back(h.determinant);
        if (h.rate_crypto) rc.push_back(*h.rate_crypto);
        if (h.rate_ref) rr.push_back(*h.rate_ref);
        n += h.n_used;
        lambda += h.lambda_used;
        flags |= h.flags & (kFlagNoFutures | kFlagNegativeIntercept);
    }
    ZcEstimate e;
    e.zc_crypto = median(zc_c);
    e.zc_ref = median(zc_r);
    e.determinant = median(det);
    e.n_used = n;
    e.lambda_used = lambda / static_cast<double>(hours.size());
    e.flags = flags;
    if (!rc.empty()) e.rate_crypto = median(rc);
    else e.flags |= kFlagCryptoRateUndefined;
    if (!rr.empty()) e.rate_ref = median(rr);
    else e.flags |= kFlagRefRateUndefined;
    return e;
}

} // namespace detail

/// Aggregates the hourly slices of one (UTC day, expiry).
///
/// Pool: every hour is screened on its own; surviving observations (each
/// keeping its own hour's moneyness) are concatenated, hourly futures ratios
/// averaged, and one closed-form solve runs with tau measured from 12:00 UTC.
/// Median: each hour is estimated separately and the per-hour rates are
/// reduced by their median.
inline DailyResult aggregate_daily(std::span<const MarketSlice> hourly_slices, const AggregationConfig& cfg) {
    std::vector<const MarketSlice*> hours;
    for (const auto& s : hourly_slices) hours.push_back(&s);
    std::sort(hours.begin(), hours.end(), [](const MarketSlice* a, const MarketSlice* b) {
        return std::tie(a->timestamp, a->expiry) < std::tie(b->timestamp, b->expiry);
    });
    if (hours.empty()) return DayRejected{{RejectReason::EmptyDay, "no hourly slices"}, 0, {}};
    const Date date = hours.front()->timestamp.date();
    const UtcTime expiry = hours.front()->expiry;
    for (const auto* h : hours) {
        require(h->expiry == expiry && h->timestamp.date() == date, ErrorCode::InvalidArgument,
                "hourly slices must share expiry and UTC day");
    }
    const double tau = year_fraction(daily_anchor(date), expiry, cfg.days_per_year);

    std::vector<HourRejection> rejections;
    if (cfg.policy == AggregationPolicy::Median) {
        std::vector<ZcEstimate> estimates;
        for (const auto* h : hours) {
            auto r = estimate_slice(*h, cfg.ransac, cfg.lambda, cfg.days_per_year);
            if (auto* e = std::get_if<ZcEstimate>(&r)) estimates.push_back(std::move(*e));
            else rejections.push_back({h->timestamp, std::get<SliceRejected>(r)});
        }
        if (estimates.empty()) {
            return DayRejected{{RejectReason::EmptyDay, "no surviving hours"}, hours.size(), std::move(rejections)};
        }
        DailyEstimate out{date, expiry, detail::median_estimate(estimates), cfg.policy, hours.size(),
                          estimates.size(), std::move(rejections)};
        out.estimate.tau_years = tau;
        return out;
    }

    std::vector<PairedObservation> pooled;
    double ratio_sum = 0.0;
    std::size_t ratio_count = 0;
    std::size_t surviving = 0;
    bool negative_intercept = false;
    ScreenDiagnostics diag;
    for (const auto* h : hours) {
        RansacConfig rc = cfg.ransac;
        rc.seed = slice_seed(cfg.ransac.seed, h->timestamp, h->expiry);
        try {
            auto screened = spread_screen(h->observations, rc);
            if (auto* rej = std::get_if<ScreenRejected>(&screened)) {
                rejections.push_back({h->timestamp, {RejectReason::SlopeDeviation,
                                                     "slope " + csv::format_double(rej->fit.slope)}});
                continue;
            }
            auto& kept = std::get<ScreenKept>(screened);
            ++surviving;
            pooled.insert(pooled.end(), kept.observations.begin(), kept.observations.end());
            if (h->futures_ratio) {
                ratio_sum += *h->futures_ratio;
                ++ratio_count;
            }
            negative_intercept = negative_intercept || kept.negative_intercept;
            diag.slope += kept.fit.slope;
            diag.intercept += kept.fit.intercept;
            diag.inliers += kept.observations.size();
            diag.candidates += h->observations.size();
        } catch (const Error& e) {
            if (e.code() == ErrorCode::InvalidArgument) throw;
            rejections.push_back({h->timestamp, {reason_for(e.code()), e.what()}});
        }
    }
    if (surviving == 0) {
        return DayRejected{{RejectReason::EmptyDay, "no surviving hours"}, hours.size(), std::move(rejections)};
    }
    diag.slope /= static_cast<double>(surviving);
    diag.intercept /= static_cast<double>(surviving);

    std::optional<double> ratio;
    if (ratio_count > 0) ratio = ratio_sum / static_cast<double>(ratio_count);
    auto [input, no_futures] = make_estimator_input(pooled, ratio, cfg.lambda);
    try {
        ZcEstimate est = solve_closed_form(input);
        if (no_futures) est.flags |= kFlagNoFutures;
        if (negative_intercept) est.flags |= kFlagNegativeIntercept;
        est.screen = diag;
        attach_rates(est, tau);
        return DailyEstimate{date, expiry, std::move(est), cfg.policy, hours.size(), surviving, std::move(rejections)};
    } catch (const Error& e) {
        if (e.code() == ErrorCode::InvalidArgument) throw;
        return DayRejected{{reason_for(e.code()), e.what()}, hours.size(), std::move(rejections)};
    }
}

// ---------------------------------------------------------------------------
// Curves

enum class Leg { Crypto, Ref };

inline std::string_view to_string(Leg leg) { return leg == Leg::Crypto ? "crypto" : "ref"; }

struct CurveDiagnostics {
    std::size_t hours_pooled = 0;
    std::size_t n_total = 0;
    std::size_t hours_rejected = 0;
    double lambda = 0.0;
    unsigned flags = kFlagNone;
};

struct CurvePoint {
    UtcTime expiry;
    double tau_years = 0.0;
    double rate_crypto = 0.0;
    double rate_ref = 0.0;
    CurveDiagnostics diagnostics;

    double rate(Leg leg) const { return leg == Leg::Crypto ? rate_crypto : rate_ref; }
};

struct YieldCurve {
    Date valuation_date;
    std::vector<CurvePoint> points; // strictly increasing tau
};

/// Row of `curves.csv`; also the input to build_curve.
struct CurveRow {
    Date date;
    UtcTime expiry;
    double tau_years = 0.0;
    std::optional<double> rate_crypto;
    std::optional<double> rate_ref;
    std::size_t n_used = 0;
    double lambda = 0.0;
    std::size_t pooled_hours = 0;
    std::string flags;

    friend bool operator==(const CurveRow&, const CurveRow&) = default;
};

inline CurveRow to_curve_row(const DailyEstimate& d) {
    return {d.date,
            d.expiry,
            d.estimate.tau_years,
            d.estimate.rate_crypto,
            d.estimate.rate_ref,
            d.estimate.n_used,
            d.estimate.lambda_used,
            d.hours_pooled,
            flags_to_string(d.estimate.flags)};
}

struct CurveBuild {
    YieldCurve curve;
    std::vector<CurveRow> dropped; // entries with an undefined rate
};

inline CurveBuild build_curve(Date date, std::span<const CurveRow> rows) {
    CurveBuild out;
    out.curve.valuation_date = date;
    std::vector<std::int64_t> seen;
    for (const auto& r : rows) {
        require(r.date == date, ErrorCode::InvalidArgument, "curve rows must share the valuation date");
        const auto e = r.expiry.seconds_since_epoch();
        if (std::find(seen.begin(), seen.end(), e) != seen.end()) {
            throw Error(ErrorCode::DuplicateExpiry, "duplicate expiry " + r.expiry.iso() + " on " + date.iso());
        }
        seen.push_back(e);
        if (!r.rate_crypto || !r.rate_ref || !(r.tau_years > 0.0)) {
            out.dropped.push_back(r);
            continue;
        }
        CurvePoint p;
        p.expiry = r.expiry;
        p.tau_years = r.tau_years;
        p.rate_crypto = *r.rate_crypto;
        p.rate_ref = *r.rate_ref;
        p.diagnostics.hours_pooled = r.pooled_hours;
        p.diagnostics.n_total = r.n_used;
        p.diagnostics.lambda = r.lambda;
        out.curve.points.push_back(p);
    }
    std::sort(out.curve.points.begin(), out.curve.points.end(),
              [](const CurvePoint& a, const CurvePoint& b) { return a.tau_years < b.tau_years; });
    return out;
}

inline CurveBuild build_curve(Date date, std::span<const DailyEstimate> estimates) {
    std::vector<CurveRow> rows;
    for (const auto& e : estimates) rows.push_back(to_curve_row(e));
    return build_curve(date, rows);
}

enum class InterpolationFlag { Knot, Interpolated };

/// Linear interpolation in rate vs year fraction between the bracketing
/// knots. Nothing outside [min tau, max tau] is returned.
inline std::optional<std::pair<double, InterpolationFlag>> interpolate_tenor_flagged(
    const YieldCurve& curve, int tenor_days, Leg leg, double days_per_year = kDefaultDaysPerYear) {
    require(tenor_days > 0, ErrorCode::InvalidArgument, "tenor must be positive");
    const auto& pts = curve.points;
    if (pts.empty()) return std::nullopt;
    const double tau = static_cast<double>(tenor_days) / days_per_year;
    for (const auto& p : pts) {
        if (std::abs(p.tau_years - tau) <= 1e-12 * std::max(1.0, tau)) {
            return std::pair{p.rate(leg), InterpolationFlag::Knot};
        }
    }
    if (tau < pts.front().tau_years || tau > pts.back().tau_years) return std::nullopt;
    const auto hi = std::upper_bound(pts.begin(), pts.end(), tau,
                                     [](double t, const CurvePoint& p) { return t < p.tau_years; });
    const auto lo = hi - 1;
    const double w = (tau - lo->tau_years) / (hi->tau_years - lo->tau_years);
    return std::pair{lo->rate(leg) + w * (hi->rate(leg) - lo->rate(leg)), InterpolationFlag::Interpolated};
}

inline std::optional<double> interpolate_tenor(const YieldCurve& curve, int tenor_days, Leg leg,
                                               double days_per_year = kDefaultDaysPerYear) {
    const auto r = interpolate_tenor_flagged(curve, tenor_days, leg, days_per_year);
    if (!r) return std::nullopt;
    return r->first;
}

struct TenorRow {
    Date date;
    double rate = 0.0;
    InterpolationFlag flag = InterpolationFlag::Interpolated;
};

struct TenorSeries {
    int tenor_days = 0;
    Leg leg = Leg::Crypto;
    std::vector<TenorRow> rows; // strictly increasing dates
};

/// One series per (tenor, leg), tenor-major with crypto before ref. Dates
/// where the tenor is not bracketed are omitted.
inline std::vector<TenorSeries> build_tenor_series(std::span<const YieldCurve> curves, std::span<const int> tenors,
                                                   double days_per_year = kDefaultDaysPerYear) {
    for (std::size_t i = 1; i < curves.size(); ++i) {
        require(curves[i - 1].valuation_date < curves[i].valuation_date, ErrorCode::InvalidArgument,
                "curves must be sorted by strictly increasing date");
    }
    std::vector<TenorSeries> out;
    for (int tenor : tenors) {
        for (Leg leg : {Leg::Crypto, Leg::Ref}) {
            TenorSeries series{tenor, leg, {}};
            for (const auto& c : curves) {
                if (auto r = interpolate_tenor_flagged(c, tenor, leg, days_per_year)) {
                    series.rows.push_back({c.valuation_date, r->first, r->second});
                }
            }
            out.push_back(std::move(series));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV

inline constexpr std::string_view kCurvesCsvHeader =
    "date,expiry,tau_years,rate_crypto,rate_ref,n_used,lambda,pooled_hours,flags";
inline constexpr std::string_view kTenorsCsvHeader = "date,tenor_days,leg,rate";

inline void write_curves_csv(std::ostream& out, std::span<const CurveRow> rows) {
    auto opt = [](const std::optional<double>& v) { return v ? csv::format_double(*v) : std::string(); };
    out << kCurvesCsvHeader << '\n';
    for (const auto& r : rows) {
        out << r.date.iso() << ',' << r.expiry.iso() << ',' << csv::format_double(r.tau_years) << ','
            << opt(r.rate_crypto) << ',' << opt(r.rate_ref) << ',' << r.n_used << ',' << csv::format_double(r.lambda)
            << ',' << r.pooled_hours << ',' << csv::quote_if_needed(r.flags) << '\n';
    }
}

namespace detail {

inline std::vector<std::vector<std::string>> read_table(std::istream& in, std::string_view expected_header) {
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), ErrorCode::ParseError, "missing header");
    require(csv::trim(line) == expected_header, ErrorCode::ParseError, "unexpected header '" + line + "'");
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> storage;
    std::size_t line_no = 1;
    const auto width = static_cast<std::size_t>(std::count(expected_header.begin(), expected_header.end(), ',') + 1);
    while (std::getline(in, line)) {
        ++line_no;
        if (csv::trim(line).empty()) continue;
        const auto fields = csv::split(csv::trim(line), storage);
        require(fields.size() == width, ErrorCode::ParseError, "line " + std::to_string(line_no) + ": wrong field count");
        std::vector<std::string> row;
        for (auto f : fields) row.emplace_back(csv::trim(f));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline double required_double(const std::string& s, std::size_t line) {
    const auto v = csv::parse_double(s);
    require(v.has_value(), ErrorCode::ParseError, "row " + std::to_string(line) + ": bad number '" + s + "'");
    return *v;
}

inline std::size_t required_count(const std::string& s, std::size_t line) {
    const double v = required_double(s, line);
    require(v >= 0.0 && v == std::floor(v), ErrorCode::ParseError, "row " + std::to_string(line) + ": bad count");
    return static_cast<std::size_t>(v);
}

} // namespace detail

inline std::vector<CurveRow> read_curves_csv(std::istream& in) {
    std::vector<CurveRow> out;
    const auto table = detail::read_table(in, kCurvesCsvHeader);
    for (std::size_t i = 0; i < table.size(); ++i) {
        const auto& f = table[i];
        const std::size_t line = i + 1;
        CurveRow r;
        const auto date = Date::parse(f[0]);
        const auto expiry = UtcTime::parse(f[1]);
        require(date && expiry, ErrorCode::ParseError, "row " + std::to_string(line) + ": bad date");
        r.date = *date;
        r.expiry = *expiry;
        r.tau_years = detail::required_double(f[2], line);
        if (!f[3].empty()) r.rate_crypto = detail::required_double(f[3], line);
        if (!f[4].empty()) r.rate_ref = detail::required_double(f[4], line);
        r.n_used = detail::required_count(f[5], line);
        r.lambda = detail::required_double(f[6], line);
        r.pooled_hours = detail::required_count(f[7], line);
        r.flags = f[8];
        out.push_back(std::move(r));
    }
    return out;
}

struct TenorCsvRow {
    Date date;
    int tenor_days = 0;
    Leg leg = Leg::Crypto;
    double rate = 0.0;

    friend bool operator==(const TenorCsvRow&, const TenorCsvRow&) = default;
};

inline std::vector<TenorCsvRow> flatten(std::span<const TenorSeries> series) {
    std::vector<TenorCsvRow> out;
    for (const auto& s : series) {
        for (const auto& r : s.rows) out.push_back({r.date, s.tenor_days, s.leg, r.rate});
    }
    return out;
}

inline void write_tenors_csv(std::ostream& out, std::span<const TenorCsvRow> rows) {
    out << kTenorsCsvHeader << '\n';
    for (const auto& r : rows) {
        out << r.date.iso() << ',' << r.tenor_days << ',' << to_string(r.leg) << ',' << csv::format_double(r.rate)
            << '\n';
    }
}

inline std::vector<TenorCsvRow> read_tenors_csv(std::istream& in) {
    std::vector<TenorCsvRow> out;
    const auto table = detail::read_table(in, kTenorsCsvHeader);
    for (std::size_t i = 0; i < table.size(); ++i) {
        const auto& f = table[i];
        const auto date = Date::parse(f[0]);
        require(date.has_value(), ErrorCode::ParseError, "row " + std::to_string(i + 1) + ": bad date");
        require(f[2] == "crypto" || f[2] == "ref", ErrorCode::ParseError, "row " + std::to_string(i + 1) + ": bad leg");
        out.push_back({*date, static_cast<int>(detail::required_count(f[1], i + 1)),
                       f[2] == "crypto" ? Leg::Crypto : Leg::Ref, detail::required_double(f[3], i + 1)});
    }
    return out;
}

/// Groups curve rows by date and builds one curve per date, in date order.
inline std::vector<YieldCurve> curves_by_date(std::span<const CurveRow> rows,
                                              std::vector<CurveRow>* dropped = nullptr) {
    std::map<Date, std::vector<CurveRow>> by_date;
    for (const auto& r : rows) by_date[r.date].push_back(r);
    std::vector<YieldCurve> out;
    for (const auto& [date, group] : by_date) {
        auto built = build_curve(date, group);
        if (dropped) dropped->insert(dropped->end(), built.dropped.begin(), built.dropped.end());
        out.push_back(std::move(built.curve));
    }
    return out;
}

} // namespace curves
