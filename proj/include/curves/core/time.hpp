#pragma once

#include <charconv>
#include <compare>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

namespace curves {

inline constexpr std::int64_t kSecondsPerHour = 3600;
inline constexpr std::int64_t kSecondsPerDay = 86400;
inline constexpr double kDefaultDaysPerYear = 365.0;

namespace detail {

// Proleptic Gregorian civil date <-> days since 1970-01-01 (H. Hinnant's algorithm).
constexpr std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) noexcept {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const auto yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m > 2 ? m - 3 : m + 9) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

struct Civil {
    std::int64_t year;
    unsigned month;
    unsigned day;
};

constexpr Civil civil_from_days(std::int64_t z) noexcept {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const auto doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp < 10 ? mp + 3 : mp - 9;
    return {y + (m <= 2), m, d};
}

constexpr bool is_leap(std::int64_t y) noexcept {
    return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
}

constexpr unsigned days_in_month(std::int64_t y, unsigned m) noexcept {
    constexpr unsigned table[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    return m == 2 && is_leap(y) ? 29 : table[m - 1];
}

inline std::optional<int> parse_fixed(std::string_view text, std::size_t pos, std::size_t len) {
    if (pos + len > text.size()) return std::nullopt;
    int value = 0;
    for (std::size_t i = pos; i < pos + len; ++i) {
        const char c = text[i];
        if (c < '0' || c > '9') return std::nullopt;
        value = value * 10 + (c - '0');
    }
    return value;
}

} // namespace detail

/// Calendar date in UTC, stored as days since 1970-01-01.
class Date {
public:
    constexpr Date() = default;
    constexpr explicit Date(std::int64_t days_since_epoch) : days_(days_since_epoch) {}

    static constexpr Date from_ymd(std::int64_t y, unsigned m, unsigned d) {
        return Date(detail::days_from_civil(y, m, d));
    }

    constexpr std::int64_t days_since_epoch() const noexcept { return days_; }
    constexpr Date plus_days(std::int64_t d) const noexcept { return Date(days_ + d); }

    std::string iso() const {
        const auto c = detail::civil_from_days(days_);
        char buf[48];
        std::snprintf(buf, sizeof(buf), "%04lld-%02u-%02u", static_cast<long long>(c.year), c.month, c.day);
        return buf;
    }

    static std::optional<Date> parse(std::string_view text) {
        if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
        const auto y = detail::parse_fixed(text, 0, 4);
        const auto m = detail::parse_fixed(text, 5, 2);
        const auto d = detail::parse_fixed(text, 8, 2);
        if (!y || !m || !d || *m < 1 || *m > 12 || *d < 1) return std::nullopt;
        if (static_cast<unsigned>(*d) > detail::days_in_month(*y, static_cast<unsigned>(*m))) return std::nullopt;
        return from_ymd(*y, static_cast<unsigned>(*m), static_cast<unsigned>(*d));
    }

    friend constexpr auto operator<=>(Date, Date) = default;

private:
    std::int64_t days_ = 0;
};

/// UTC instant with one-second resolution.
class UtcTime {
public:
    constexpr UtcTime() = default;
    constexpr explicit UtcTime(std::int64_t seconds_since_epoch) : seconds_(seconds_since_epoch) {}

    static constexpr UtcTime at(Date date, int hour = 0, int minute = 0, int second = 0) {
        return UtcTime(date.days_since_epoch() * kSecondsPerDay + hour * kSecondsPerHour + minute * 60 + second);
    }

    constexpr std::int64_t seconds_since_epoch() const noexcept { return seconds_; }

    constexpr Date date() const noexcept {
        const std::int64_t s = seconds_;
        return Date(s >= 0 ? s / kSecondsPerDay : -((-s + kSecondsPerDay - 1) / kSecondsPerDay));
    }

    constexpr UtcTime floor_hour() const noexcept {
        std::int64_t r = seconds_ % kSecondsPerHour;
        if (r < 0) r += kSecondsPerHour;
        return UtcTime(seconds_ - r);
    }

    constexpr UtcTime plus_seconds(std::int64_t s) const noexcept { return UtcTime(seconds_ + s); }
    constexpr UtcTime plus_hours(std::int64_t h) const noexcept { return plus_seconds(h * kSecondsPerHour); }
    constexpr UtcTime plus_days(std::int64_t d) const noexcept { return plus_seconds(d * kSecondsPerDay); }

    /// YYYY-MM-DDTHH:MM:SSZ
    std::string iso() const {
        const Date d = date();
        const std::int64_t sod = seconds_ - d.days_since_epoch() * kSecondsPerDay;
        const auto c = detail::civil_from_days(d.days_since_epoch());
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%04lld-%02u-%02uT%02lld:%02lld:%02lldZ", static_cast<long long>(c.year),
                      c.month, c.day, static_cast<long long>(sod / 3600), static_cast<long long>((sod / 60) % 60),
                      static_cast<long long>(sod % 60));
        return buf;
    }

    /// Accepts `YYYY-MM-DD`, `YYYY-MM-DDTHH:MM[:SS[.fff]]` with a `T` or space
    /// separator and an optional `Z` / `+00:00` suffix. Fractional seconds are
    /// truncated. Non-UTC offsets are applied.
    static std::optional<UtcTime> parse(std::string_view text) {
        if (text.size() < 10) return std::nullopt;
        const auto date = Date::parse(text.substr(0, 10));
        if (!date) return std::nullopt;
        if (text.size() == 10) return at(*date);
        if (text[10] != 'T' && text[10] != ' ') return std::nullopt;
        const auto hh = detail::parse_fixed(text, 11, 2);
        const auto mm = detail::parse_fixed(text, 14, 2);
        if (!hh || !mm || text.size() < 16 || text[13] != ':' || *hh > 23 || *mm > 59) return std::nullopt;
        std::size_t pos = 16;
        int ss = 0;
        if (pos < text.size() && text[pos] == ':') {
            const auto s = detail::parse_fixed(text, pos + 1, 2);
            if (!s || *s > 60) return std::nullopt;
            ss = *s;
            pos += 3;
            if (pos < text.size() && text[pos] == '.') {
                ++pos;
                const std::size_t start = pos;
                while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') ++pos;
                if (pos == start) return std::nullopt;
            }
        }
        std::int64_t offset = 0;
        const std::string_view rest = text.substr(pos);
        if (rest.empty() || rest == "Z") {
            offset = 0;
        } else if (rest.size() == 6 && (rest[0] == '+' || rest[0] == '-') && rest[3] == ':') {
            const auto oh = detail::parse_fixed(rest, 1, 2);
            const auto om = detail::parse_fixed(rest, 4, 2);
            if (!oh || !om) return std::nullopt;
            offset = (*oh * 3600 + *om * 60) * (rest[0] == '+' ? 1 : -1);
        } else {
            return std::nullopt;
        }
        return at(*date, *hh, *mm, ss).plus_seconds(-offset);
    }

    friend constexpr auto operator<=>(UtcTime, UtcTime) = default;

private:
    std::int64_t seconds_ = 0;
};

/// Calendar-time year fraction (ACT/365 by default).
constexpr double year_fraction(UtcTime from, UtcTime to, double days_per_year = kDefaultDaysPerYear) noexcept {
    return static_cast<double>(to.seconds_since_epoch() - from.seconds_since_epoch()) /
           (days_per_year * static_cast<double>(kSecondsPerDay));
}

constexpr double days_between(UtcTime from, UtcTime to) noexcept {
    return static_cast<double>(to.seconds_since_epoch() - from.seconds_since_epoch()) /
           static_cast<double>(kSecondsPerDay);
}

} // namespace curves
