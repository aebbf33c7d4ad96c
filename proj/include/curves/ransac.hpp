#pragma once

// Robust line fitting on the bid/ask spread relation
//
//     put_ask - call_bid = intercept + slope * (call_ask - put_bid) + noise
//
// For arbitrage-consistent quotes the slope sits near -1 and the intercept is
// small and positive. RANSAC removes strikes that break the relation; a slice
// whose refitted slope strays from -1 by more than the tolerance is rejected.
//
// Points are classified by squared *vertical* residual. Plots may show the
// orthogonal distance instead; classification never uses it.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "curves/core/error.hpp"
#include "curves/market_data.hpp"

namespace curves {

struct SpreadPoint {
    double x = 0.0; // call_ask - put_bid
    double y = 0.0; // put_ask - call_bid
    double strike = 0.0;
};

inline SpreadPoint to_spread_point(const PairedObservation& o) {
    return {o.call_ask - o.put_bid, o.put_ask - o.call_bid, o.strike};
}

struct RansacConfig {
    double residual_sq_threshold = 0.004;
    int iterations = 200;
    int min_inliers = 0; // 0: max(4, ceil(n / 2))
    double slope_tolerance = 0.10;
    std::uint64_t seed = 42;

    void validate() const {
        require(residual_sq_threshold > 0.0, ErrorCode::InvalidArgument, "ransac threshold must be positive");
        require(iterations >= 1, ErrorCode::InvalidArgument, "ransac iterations must be >= 1");
        require(min_inliers >= 0, ErrorCode::InvalidArgument, "ransac min_inliers must be >= 0");
        require(slope_tolerance > 0.0 && slope_tolerance < 1.0, ErrorCode::InvalidArgument,
                "ransac slope tolerance must lie in (0, 1)");
    }

    std::size_t effective_min_inliers(std::size_t n) const {
        if (min_inliers > 0) return static_cast<std::size_t>(min_inliers);
        return std::max<std::size_t>(4, (n + 1) / 2);
    }
};

struct Line {
    double slope = 0.0;
    double intercept = 0.0;

    double operator()(double x) const { return intercept + slope * x; }
    friend bool operator==(const Line&, const Line&) = default;
};

struct RansacResult {
    double slope = 0.0;
    double intercept = 0.0;
    std::vector<bool> inlier_flags;
    bool refit_on_inliers = false;
    std::size_t sample_inlier_count = 0; // consensus size of the best sampled line

    std::size_t inlier_count() const {
        return static_cast<std::size_t>(std::count(inlier_flags.begin(), inlier_flags.end(), true));
    }

    friend bool operator==(const RansacResult&, const RansacResult&) = default;
};

/// Ordinary least squares of y on x. Throws DegenerateX when fewer than two
/// distinct abscissae are present.
inline Line fit_line_ols(std::span<const SpreadPoint> points) {
    require(points.size() >= 2, ErrorCode::TooFewPoints, "OLS needs at least two points");
    const double n = static_cast<double>(points.size());
    double mx = 0.0, my = 0.0;
    for (const auto& p : points) {
        mx += p.x;
        my += p.y;
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, scale = 0.0;
    for (const auto& p : points) {
        scale = std::max(scale, std::abs(p.x));
        const double dx = p.x - mx;
        sxx += dx * dx;
        sxy += dx * (p.y - my);
    }
    // x values equal up to rounding count as identical
    require(sxx > n * (1e-12 * scale) * (1e-12 * scale), ErrorCode::DegenerateX, "all x values are equal");
    const double slope = sxy / sxx;
    return {slope, my - slope * mx};
}

namespace detail {

inline double squared_residual(const SpreadPoint& p, const Line& line) {
    const double r = p.y - line(p.x);
    return r * r;
}

struct Consensus {
    std::size_t count = 0;
    double residual_sum = 0.0;
};

inline Consensus score(std::span<const SpreadPoint> points, const Line& line, double threshold) {
    Consensus c;
    for (const auto& p : points) {
        const double r2 = squared_residual(p, line);
        if (r2 <= threshold) {
            ++c.count;
            c.residual_sum += r2;
        }
    }
    return c;
}

inline std::vector<bool> classify(std::span<const SpreadPoint> points, const Line& line, double threshold) {
    std::vector<bool> flags(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) flags[i] = squared_residual(points[i], line) <= threshold;
    return flags;
}

inline std::vector<SpreadPoint> select(std::span<const SpreadPoint> points, const std::vector<bool>& flags) {
    std::vector<SpreadPoint> out;
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (flags[i]) out.push_back(points[i]);
    }
    return out;
}

} // namespace detail

/// Seeded RANSAC line fit. Each iteration draws two distinct points, fits the
/// line through them and counts points whose squared vertical residual is
/// within the threshold. The best iteration has the most inliers, then the
/// smaller inlier residual sum, then the lower index. The winner is refit by
/// OLS on its inliers and points are reclassified against the refit until the
/// set is stable; if refitting loses consensus the sampled line is reported.
inline RansacResult ransac_line(std::span<const SpreadPoint> points, const RansacConfig& config) {
    config.validate();
    const std::size_t n = points.size();
    const std::size_t min_inliers = config.effective_min_inliers(n);
    if (n < std::max<std::size_t>(2, min_inliers)) {
        throw Error(ErrorCode::TooFewPoints,
                    "ransac needs " + std::to_string(std::max<std::size_t>(2, min_inliers)) + " points, got " +
                        std::to_string(n));
    }

    std::mt19937_64 rng(config.seed);
    std::uniform_int_distribution<std::size_t> first(0, n - 1);
    std::uniform_int_distribution<std::size_t> second(0, n - 2);

    bool found = false;
    Line best_line;
    detail::Consensus best;
    for (int it = 0; it < config.iterations; ++it) {
        const std::size_t i = first(rng);
        std::size_t j = second(rng);
        if (j >= i) ++j;
        const auto& a = points[i];
        const auto& b = points[j];
        if (a.x == b.x) continue;
        const double slope = (b.y - a.y) / (b.x - a.x);
        const Line line{slope, a.y - slope * a.x};
        const auto c = detail::score(points, line, config.residual_sq_threshold);
        if (!found || c.count > best.count || (c.count == best.count && c.residual_sum < best.residual_sum)) {
            found = true;
            best = c;
            best_line = line;
        }
    }
    if (!found || best.count < min_inliers) {
        throw Error(ErrorCode::NoConsensus, "best consensus " + std::to_string(found ? best.count : 0) +
                                                " below minimum " + std::to_string(min_inliers));
    }

    RansacResult result;
    result.sample_inlier_count = best.count;
    result.slope = best_line.slope;
    result.intercept = best_line.intercept;
    result.inlier_flags = detail::classify(points, best_line, config.residual_sq_threshold);

    auto flags = result.inlier_flags;
    for (int pass = 0; pass < 10; ++pass) {
        const auto subset = detail::select(points, flags);
        Line refit;
        try {
            refit = fit_line_ols(subset);
        } catch (const Error&) {
            break;
        }
        auto next = detail::classify(points, refit, config.residual_sq_threshold);
        if (static_cast<std::size_t>(std::count(next.begin(), next.end(), true)) < min_inliers) break;
        result.slope = refit.slope;
        result.intercept = refit.intercept;
        result.inlier_flags = next;
        result.refit_on_inliers = true;
        if (next == flags) break;
        flags = std::move(next);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Spread screen

struct ScreenKept {
    std::vector<PairedObservation> observations;
    RansacResult fit;
    bool negative_intercept = false; // arbitrage signal; warning only
};

struct ScreenRejected {
    std::string reason;
    RansacResult fit;
};

using ScreenOutcome = std::variant<ScreenKept, ScreenRejected>;

inline bool slope_within_tolerance(double slope, double tolerance) { return std::abs(slope + 1.0) <= tolerance; }

/// Removes RANSAC outliers from a slice's observations and rejects the slice
/// when the fitted slope deviates from -1 by more than the tolerance.
inline ScreenOutcome spread_screen(std::span<const PairedObservation> observations, const RansacConfig& config) {
    std::vector<SpreadPoint> points;
    points.reserve(observations.size());
    for (const auto& o : observations) points.push_back(to_spread_point(o));
    auto fit = ransac_line(points, config);
    if (!slope_within_tolerance(fit.slope, config.slope_tolerance)) {
        return ScreenRejected{"slope deviation", std::move(fit)};
    }
    ScreenKept kept;
    for (std::size_t i = 0; i < observations.size(); ++i) {
        if (fit.inlier_flags[i]) kept.observations.push_back(observations[i]);
    }
    kept.negative_intercept = fit.intercept < 0.0;
    kept.fit = std::move(fit);
    return kept;
}

} // namespace curves
