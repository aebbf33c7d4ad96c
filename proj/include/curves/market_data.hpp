#pragma once

// Quote data model, snapshot CSV I/O, and the deterministic pre-filters that
// run before any estimation.

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
#include <tuple>
#include <utility>
#include <variant>
#include <vector>

#include "curves/core/csv.hpp"
#include "curves/core/error.hpp"
#include "curves/core/time.hpp"

namespace curves {

enum class OptionSide { Call, Put };

struct OptionQuote {
    UtcTime timestamp;
    UtcTime expiry;
    double strike = 0.0; // reference currency
    OptionSide side = OptionSide::Call;
    double bid = 0.0; // crypto units
    double ask = 0.0;
    double bid_size = 0.0;
    double ask_size = 0.0;

    friend bool operator==(const OptionQuote&, const OptionQuote&) = default;
};

struct FuturesQuote {
    UtcTime timestamp;
    UtcTime expiry;
    double bid = 0.0; // reference currency
    double ask = 0.0;
    double bid_size = 0.0;
    double ask_size = 0.0;

    friend bool operator==(const FuturesQuote&, const FuturesQuote&) = default;
};

struct IndexPoint {
    UtcTime timestamp;
    double price = 0.0;

    friend bool operator==(const IndexPoint&, const IndexPoint&) = default;
};

using Quote = std::variant<OptionQuote, FuturesQuote, IndexPoint>;

inline UtcTime quote_timestamp(const Quote& q) {
    return std::visit([](const auto& v) { return v.timestamp; }, q);
}

/// Reason the quote violates its invariants, or nullopt when valid.
inline std::optional<std::string> validate(const OptionQuote& q) {
    if (!(q.strike > 0.0)) return "non-positive strike";
    if (q.bid < 0.0) return "negative bid";
    if (q.ask < q.bid) return "crossed book";
    if (q.bid_size < 0.0 || q.ask_size < 0.0) return "negative size";
    if (q.expiry <= q.timestamp) return "expiry not after timestamp";
    return std::nullopt;
}

inline std::optional<std::string> validate(const FuturesQuote& q) {
    if (!(q.bid > 0.0)) return "non-positive futures bid";
    if (q.ask < q.bid) return "crossed book";
    if (q.bid_size < 0.0 || q.ask_size < 0.0) return "negative size";
    if (q.expiry <= q.timestamp) return "expiry not after timestamp";
    return std::nullopt;
}

inline std::optional<std::string> validate(const IndexPoint& p) {
    if (!(p.price > 0.0)) return "non-positive index price";
    return std::nullopt;
}

inline double mid_price(double bid, double ask) {
    require(ask >= bid, ErrorCode::CrossedBook, "ask below bid");
    return 0.5 * (bid + ask);
}

inline double moneyness(double strike, double index) {
    require(strike > 0.0 && index > 0.0, ErrorCode::NonPositiveInput, "strike and index must be positive");
    return strike / index;
}

struct PairedObservation {
    double strike = 0.0;
    double moneyness = 0.0;
    double y = 0.0; // call mid - put mid, crypto units
    double call_bid = 0.0;
    double call_ask = 0.0;
    double put_bid = 0.0;
    double put_ask = 0.0;

    double call_mid() const { return 0.5 * (call_bid + call_ask); }
    double put_mid() const { return 0.5 * (put_bid + put_ask); }

    friend bool operator==(const PairedObservation&, const PairedObservation&) = default;
};

/// All strike-paired observations for one (timestamp, expiry).
struct MarketSlice {
    UtcTime timestamp;
    UtcTime expiry;
    std::vector<PairedObservation> observations; // strictly increasing strike
    std::optional<double> futures_mid;
    double index_price = 0.0;
    std::optional<double> futures_ratio; // F / S
    std::size_t unmatched_legs = 0;

    double days_to_expiry() const { return days_between(timestamp, expiry); }
};

// ---------------------------------------------------------------------------
// Pairing

struct PairingResult {
    std::vector<PairedObservation> observations;
    std::vector<std::pair<OptionSide, double>> unmatched;
};

/// Inner join on exact strike. Inputs must share (timestamp, expiry).
inline PairingResult pair_by_strike(std::span<const OptionQuote> calls, std::span<const OptionQuote> puts,
                                    const IndexPoint& index) {
    auto by_strike = [](std::span<const OptionQuote> quotes, const char* side) {
        std::map<double, const OptionQuote*> out;
        for (const auto& q : quotes) {
            if (!out.emplace(q.strike, &q).second) {
                throw Error(ErrorCode::DuplicateStrike,
                            std::string("duplicate ") + side + " quote at strike " + csv::format_double(q.strike));
            }
        }
        return out;
    };
    const auto call_map = by_strike(calls, "call");
    const auto put_map = by_strike(puts, "put");

    PairingResult result;
    for (const auto& [strike, call] : call_map) {
        const auto it = put_map.find(strike);
        if (it == put_map.end()) {
            result.unmatched.emplace_back(OptionSide::Call, strike);
            continue;
        }
        const OptionQuote* put = it->second;
        PairedObservation obs;
        obs.strike = strike;
        obs.moneyness = moneyness(strike, index.price);
        obs.call_bid = call->bid;
        obs.call_ask = call->ask;
        obs.put_bid = put->bid;
        obs.put_ask = put->ask;
        obs.y = mid_price(call->bid, call->ask) - mid_price(put->bid, put->ask);
        result.observations.push_back(obs);
    }
    for (const auto& [strike, put] : put_map) {
        if (!call_map.contains(strike)) result.unmatched.emplace_back(OptionSide::Put, strike);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Filters

inline std::vector<MarketSlice> filter_by_maturity(std::span<const MarketSlice> slices, int min_days = 30) {
    std::vector<MarketSlice> kept;
    for (const auto& s : slices) {
        if (s.days_to_expiry() >= static_cast<double>(min_days)) kept.push_back(s);
    }
    return kept;
}

inline bool leg_spread_ok(double bid, double ask, double max_rel) {
    const double mid = 0.5 * (bid + ask);
    if (!(mid > 0.0)) return false;
    return (ask - bid) / mid <= max_rel;
}

/// Drops every pair in which either leg has (ask - bid) / mid above max_rel
/// or a zero mid.
inline MarketSlice filter_by_relative_spread(const MarketSlice& slice, double max_rel = 0.20) {
    require(max_rel > 0.0, ErrorCode::InvalidArgument, "max_rel must be positive");
    MarketSlice out = slice;
    out.observations.clear();
    for (const auto& o : slice.observations) {
        if (leg_spread_ok(o.call_bid, o.call_ask, max_rel) && leg_spread_ok(o.put_bid, o.put_ask, max_rel)) {
            out.observations.push_back(o);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV

/// Maps logical fields to column names. An empty optional means the column is
/// not expected in the file; `fixed_kind` applies when there is no kind column.
struct ColumnMapping {
    std::optional<std::string> timestamp = "timestamp";
    std::optional<std::string> expiry = "expiry";
    std::optional<std::string> kind = "kind";
    std::optional<std::string> strike = "strike";
    std::optional<std::string> bid = "bid";
    std::optional<std::string> ask = "ask";
    std::optional<std::string> bid_size = "bid_size";
    std::optional<std::string> ask_size = "ask_size";
    std::optional<std::string> price = "price";
    std::optional<std::string> fixed_kind;
};

struct Rejection {
    std::size_t row = 0; // 1-based data row, header excluded
    std::string reason;

    friend bool operator==(const Rejection&, const Rejection&) = default;
};

struct ParseResult {
    std::vector<Quote> quotes;
    std::vector<std::size_t> rows; // data row number of each quote
    std::vector<Rejection> rejections;
};

namespace detail {

struct ColumnIndex {
    std::optional<std::size_t> timestamp, expiry, kind, strike, bid, ask, bid_size, ask_size, price;
};

inline ColumnIndex resolve_columns(const std::vector<std::string_view>& header, const ColumnMapping& schema) {
    ColumnIndex idx;
    auto find = [&](const std::optional<std::string>& name, std::optional<std::size_t>& slot) {
        if (!name) return;
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (csv::trim(header[i]) == *name) {
                slot = i;
                return;
            }
        }
        throw Error(ErrorCode::MissingColumn, "missing column '" + *name + "'");
    };
    find(schema.timestamp, idx.timestamp);
    find(schema.expiry, idx.expiry);
    find(schema.kind, idx.kind);
    find(schema.strike, idx.strike);
    find(schema.bid, idx.bid);
    find(schema.ask, idx.ask);
    find(schema.bid_size, idx.bid_size);
    find(schema.ask_size, idx.ask_size);
    find(schema.price, idx.price);
    if (!idx.timestamp) throw Error(ErrorCode::MissingColumn, "schema has no timestamp column");
    if (!idx.kind && !schema.fixed_kind) throw Error(ErrorCode::MissingColumn, "schema has no kind column");
    return idx;
}

// Returns the parsed quote or a rejection reason.
inline std::variant<Quote, std::string> parse_row(const std::vector<std::string_view>& f, const ColumnIndex& idx,
                                                  const ColumnMapping& schema) {
    auto cell = [&](const std::optional<std::size_t>& i) -> std::string_view {
        return i ? csv::trim(f[*i]) : std::string_view{};
    };
    auto number = [&](const std::optional<std::size_t>& i, const char* name,
                      std::optional<double> fallback = std::nullopt) -> std::variant<double, std::string> {
        const auto text = cell(i);
        if (text.empty()) {
            if (fallback) return *fallback;
            return std::string("missing ") + name;
        }
        const auto v = csv::parse_double(text);
        if (!v) return std::string("bad number in ") + name;
        return *v;
    };
#define CURVES_TRY_NUMBER(var, ...)                                                                                    \
    double var = 0.0;                                                                                                  \
    {                                                                                                                  \
        auto r_ = number(__VA_ARGS__);                                                                                 \
        if (auto* e_ = std::get_if<std::string>(&r_)) return *e_;                                                      \
        var = std::get<double>(r_);                                                                                    \
    }

    const auto ts = UtcTime::parse(cell(idx.timestamp));
    if (!ts) return std::string("bad timestamp");
    const std::string_view kind = idx.kind ? cell(idx.kind) : std::string_view(*schema.fixed_kind);

    if (kind == "index") {
        CURVES_TRY_NUMBER(price, idx.price, "price")
        IndexPoint p{*ts, price};
        if (auto why = validate(p)) return *why;
        return Quote{p};
    }
    if (kind != "call" && kind != "put" && kind != "future") return std::string("unknown kind");

    const auto expiry = UtcTime::parse(cell(idx.expiry));
    if (!expiry) return std::string("bad expiry");
    CURVES_TRY_NUMBER(bid, idx.bid, "bid")
    CURVES_TRY_NUMBER(ask, idx.ask, "ask")
    CURVES_TRY_NUMBER(bid_size, idx.bid_size, "bid_size", 0.0)
    CURVES_TRY_NUMBER(ask_size, idx.ask_size, "ask_size", 0.0)

    if (kind == "future") {
        FuturesQuote q{*ts, *expiry, bid, ask, bid_size, ask_size};
        if (auto why = validate(q)) return *why;
        return Quote{q};
    }
    CURVES_TRY_NUMBER(strike, idx.strike, "strike")
#undef CURVES_TRY_NUMBER
    OptionQuote q{*ts, *expiry, strike, kind == "call" ? OptionSide::Call : OptionSide::Put, bid, ask,
                  bid_size, ask_size};
    if (auto why = validate(q)) return *why;
    return Quote{q};
}

} // namespace detail

/// Parses a snapshot CSV. Malformed data rows never throw; they are collected
/// in `rejections`. Throws MissingColumn when the header lacks a named column.
inline ParseResult parse_snapshot_csv(std::istream& in, const ColumnMapping& schema = {}) {
    ParseResult result;
    std::string line;
    std::vector<std::string> storage;
    if (!std::getline(in, line)) return result;
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    std::string header_line = line;
    std::vector<std::string> header_storage;
    const auto header = csv::split(csv::trim(header_line), header_storage);
    const auto idx = detail::resolve_columns(header, schema);
    const std::size_t width = header.size();

    std::size_t row = 0;
    while (std::getline(in, line)) {
        const auto trimmed = csv::trim(line);
        if (trimmed.empty()) continue;
        ++row;
        const auto fields = csv::split(trimmed, storage);
        if (fields.size() != width) {
            result.rejections.push_back({row, "wrong field count"});
            continue;
        }
        auto parsed = detail::parse_row(fields, idx, schema);
        if (auto* reason = std::get_if<std::string>(&parsed)) {
            result.rejections.push_back({row, std::move(*reason)});
        } else {
            result.quotes.push_back(std::get<Quote>(std::move(parsed)));
            result.rows.push_back(row);
        }
    }
    return result;
}

inline constexpr std::string_view kQuoteCsvHeader = "timestamp,expiry,kind,strike,bid,ask,bid_size,ask_size,price";

inline void write_quote_row(std::ostream& out, const Quote& quote) {
    std::visit(
        [&](const auto& q) {
            using T = std::decay_t<decltype(q)>;
            if constexpr (std::is_same_v<T, OptionQuote>) {
                out << q.timestamp.iso() << ',' << q.expiry.iso() << ','
                    << (q.side == OptionSide::Call ? "call" : "put") << ',' << csv::format_double(q.strike) << ','
                    << csv::format_double(q.bid) << ',' << csv::format_double(q.ask) << ','
                    << csv::format_double(q.bid_size) << ',' << csv::format_double(q.ask_size) << ",\n";
            } else if constexpr (std::is_same_v<T, FuturesQuote>) {
                out << q.timestamp.iso() << ',' << q.expiry.iso() << ",future,," << csv::format_double(q.bid) << ','
                    << csv::format_double(q.ask) << ',' << csv::format_double(q.bid_size) << ','
                    << csv::format_double(q.ask_size) << ",\n";
            } else {
                out << q.timestamp.iso() << ",,index,,,,,," << csv::format_double(q.price) << '\n';
            }
        },
        quote);
}

inline void write_quotes_csv(std::ostream& out, std::span<const Quote> quotes) {
    out << kQuoteCsvHeader << '\n';
    for (const auto& q : quotes) write_quote_row(out, q);
}

inline void write_rejections_csv(std::ostream& out, std::span<const Rejection> rejections) {
    out << "row,reason\n";
    for (const auto& r : rejections) out << r.row << ',' << csv::quote_if_needed(r.reason) << '\n';
}

// ---------------------------------------------------------------------------
// Slice assembly

struct SliceFailure {
    UtcTime timestamp;
    UtcTime expiry;
    std::string reason;
};

struct SliceAssembly {
    std::vector<MarketSlice> slices; // sorted by (timestamp, expiry)
    std::vector<SliceFailure> failures;
};

/// Bins quotes to the hour (floor) and builds one MarketSlice per (hour,
/// expiry). Within a bin the latest observation of each instrument wins;
/// two option quotes with the same side, strike and exact timestamp are a
/// DuplicateStrike failure for that slice.
inline SliceAssembly assemble_slices(std::span<const Quote> quotes) {
    using Key = std::pair<std::int64_t, std::int64_t>; // (hour bin, expiry)

    std::map<std::int64_t, IndexPoint> index_by_bin;
    std::map<Key, FuturesQuote> futures_by_key;
    std::map<std::tuple<std::int64_t, std::int64_t, int, double>, OptionQuote> options;
    std::map<Key, std::string> duplicate;

    auto later = [](UtcTime a, double pa, UtcTime b, double pb) { return std::tie(a, pa) > std::tie(b, pb); };

    for (const auto& quote : quotes) {
        if (const auto* p = std::get_if<IndexPoint>(&quote)) {
            const auto bin = p->timestamp.floor_hour().seconds_since_epoch();
            auto [it, inserted] = index_by_bin.emplace(bin, *p);
            if (!inserted && later(p->timestamp, p->price, it->second.timestamp, it->second.price)) it->second = *p;
        } else if (const auto* f = std::get_if<FuturesQuote>(&quote)) {
            const Key key{f->timestamp.floor_hour().seconds_since_epoch(), f->expiry.seconds_since_epoch()};
            auto [it, inserted] = futures_by_key.emplace(key, *f);
            if (!inserted &&
                later(f->timestamp, f->bid + f->ask, it->second.timestamp, it->second.bid + it->second.ask)) {
                it->second = *f;
            }
        } else {
            const auto& o = std::get<OptionQuote>(quote);
            const auto bin = o.timestamp.floor_hour().seconds_since_epoch();
            const auto key = std::make_tuple(bin, o.expiry.seconds_since_epoch(), static_cast<int>(o.side), o.strike);
            auto [it, inserted] = options.emplace(key, o);
            if (!inserted) {
                if (o.timestamp == it->second.timestamp) {
                    duplicate.emplace(Key{bin, o.expiry.seconds_since_epoch()},
                                      std::string("duplicate strike ") + csv::format_double(o.strike));
                } else if (o.timestamp > it->second.timestamp) {
                    it->second = o;
                }
            }
        }
    }

    std::map<Key, std::pair<std::vector<OptionQuote>, std::vector<OptionQuote>>> grouped;
    for (const auto& [key, q] : options) {
        auto& g = grouped[Key{std::get<0>(key), std::get<1>(key)}];
        (q.side == OptionSide::Call ? g.first : g.second).push_back(q);
    }

    SliceAssembly out;
    for (const auto& [key, legs] : grouped) {
        const UtcTime ts(key.first);
        const UtcTime expiry(key.second);
        if (auto d = duplicate.find(key); d != duplicate.end()) {
            out.failures.push_back({ts, expiry, d->second});
            continue;
        }
        const auto idx = index_by_bin.find(key.first);
        if (idx == index_by_bin.end()) {
            out.failures.push_back({ts, expiry, "missing index"});
            continue;
        }
        auto paired = pair_by_strike(legs.first, legs.second, idx->second);
        MarketSlice slice;
        slice.timestamp = ts;
        slice.expiry = expiry;
        slice.index_price = idx->second.price;
        slice.observations = std::move(paired.observations);
        slice.unmatched_legs = paired.unmatched.size();
        if (auto f = futures_by_key.find(key); f != futures_by_key.end()) {
            slice.futures_mid = mid_price(f->second.bid, f->second.ask);
            slice.futures_ratio = *slice.futures_mid / slice.index_price;
        }
        out.slices.push_back(std::move(slice));
    }
    return out;
}

} // namespace curves
