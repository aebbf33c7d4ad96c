#pragma once

// Batch driver behind the `curves` CLI: ingest -> estimate -> tenors -> plot,
// plus synthetic dataset generation. Every command writes its files through
// a temp file and an atomic rename, and is a pure function of (inputs, config).

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "curves/config.hpp"
#include "curves/core/csv.hpp"
#include "curves/core/error.hpp"
#include "curves/core/time.hpp"
#include "curves/curve.hpp"
#include "curves/market_data.hpp"
#include "curves/ransac.hpp"
#include "curves/svg.hpp"
#include "curves/synth.hpp"
#include "curves/zc_estimator.hpp"

namespace curves {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Logging (CURVES_LOG = error | warn | info | debug)

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

inline LogLevel log_threshold() {
    static const LogLevel level = [] {
        const char* env = std::getenv("CURVES_LOG");
        const std::string v = env ? env : "warn";
        if (v == "error") return LogLevel::Error;
        if (v == "info") return LogLevel::Info;
        if (v == "debug") return LogLevel::Debug;
        return LogLevel::Warn;
    }();
    return level;
}

inline void log(LogLevel level, const std::string& message) {
    static constexpr const char* names[] = {"error", "warn", "info", "debug"};
    if (level <= log_threshold()) std::cerr << "[" << names[static_cast<int>(level)] << "] " << message << '\n';
}

// ---------------------------------------------------------------------------
// Files

/// Writes `content` to a sibling temp file and renames it over `path`.
inline void write_file_atomic(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::IoError, "cannot write '" + tmp.string() + "'");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw Error(ErrorCode::IoError, "write failed for '" + tmp.string() + "'");
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp);
        throw Error(ErrorCode::IoError, "cannot rename into '" + path.string() + "': " + ec.message());
    }
}

inline std::ifstream open_input(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "'");
    return in;
}

// ---------------------------------------------------------------------------
// Configuration

struct PipelineConfig {
    std::vector<fs::path> input_paths;
    std::string underlying = "BTC";
    fs::path output_dir = "out";
    std::optional<fs::path> store_dir_override;
    int min_days = 30;
    double max_rel_spread = 0.20;
    RansacConfig ransac;
    LambdaPolicy lambda;
    AggregationPolicy aggregation = AggregationPolicy::Pool;
    std::vector<int> tenors{90, 180, 360};
    double days_per_year = kDefaultDaysPerYear;
    int threads = 1;
    std::vector<std::string> plot_curve_dates{"last"};
    std::optional<fs::path> synth_truth;
    std::optional<fs::path> synth_out_override;

    fs::path store_root() const { return store_dir_override ? *store_dir_override : output_dir / "store"; }
    fs::path store_dir() const { return store_root() / underlying; }
    fs::path synth_out() const { return synth_out_override ? *synth_out_override : output_dir / "synth"; }
    fs::path curves_csv() const { return output_dir / "curves.csv"; }
    fs::path rejections_csv() const { return output_dir / "rejections.csv"; }
    fs::path tenors_csv() const { return output_dir / "tenors.csv"; }
    fs::path plots_dir() const { return output_dir / "plots"; }
    fs::path ingest_rejections_csv() const { return output_dir / "ingest_rejections.csv"; }

    AggregationConfig aggregation_config() const { return {ransac, lambda, aggregation, days_per_year}; }

    void validate() const {
        ransac.validate();
        require(min_days >= 0, ErrorCode::ConfigError, "filters.min_days must be >= 0");
        require(max_rel_spread > 0.0, ErrorCode::ConfigError, "filters.max_rel_spread must be positive");
        require(days_per_year > 0.0, ErrorCode::ConfigError, "daycount.days_per_year must be positive");
        require(threads >= 1, ErrorCode::ConfigError, "run.threads must be >= 1");
        std::set<int> unique;
        for (int t : tenors) {
            require(t > 0, ErrorCode::ConfigError, "tenors must be positive");
            require(unique.insert(t).second, ErrorCode::ConfigError, "tenors must be unique");
        }
    }
};

inline std::vector<int> parse_tenor_list(std::string_view text) {
    std::vector<int> out;
    std::string_view rest = text;
    while (true) {
        const auto comma = rest.find(',');
        const auto item = csv::trim(rest.substr(0, comma));
        const auto v = csv::parse_double(item);
        require(v && *v == std::floor(*v) && *v > 0, ErrorCode::ConfigError,
                "bad tenor '" + std::string(item) + "'");
        out.push_back(static_cast<int>(*v));
        if (comma == std::string_view::npos) break;
        rest = rest.substr(comma + 1);
    }
    return out;
}

inline const std::set<std::string>& pipeline_keys() {
    static const std::set<std::string> keys{
        "input.paths",          "input.underlying",        "output.dir",         "store.dir",
        "filters.min_days",     "filters.max_rel_spread",  "ransac.threshold_sq", "ransac.iterations",
        "ransac.min_inliers",   "ransac.slope_tolerance",  "ransac.seed",        "estimator.lambda_policy",
        "aggregation.policy",   "tenors.days",             "daycount.days_per_year", "run.threads",
        "plot.curve_dates",     "synth.truth",             "synth.out_dir"};
    return keys;
}

/// Relative paths resolve against `base_dir` (the config file's directory).
inline PipelineConfig pipeline_config_from(const KeyValueFile& kv, const fs::path& base_dir = {}) {
    kv.check_known(pipeline_keys());
    auto resolve = [&](const std::string& p) {
        fs::path path(p);
        return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
    };
    PipelineConfig c;
    if (auto v = kv.get_list("input.paths")) {
        for (const auto& p : *v) c.input_paths.push_back(resolve(p));
    }
    if (auto v = kv.get_string("input.underlying")) c.underlying = *v;
    if (auto v = kv.get_string("output.dir")) c.output_dir = resolve(*v);
    if (auto v = kv.get_string("store.dir")) c.store_dir_override = resolve(*v);
    if (auto v = kv.get_int("filters.min_days")) c.min_days = static_cast<int>(*v);
    if (auto v = kv.get_double("filters.max_rel_spread")) c.max_rel_spread = *v;
    if (auto v = kv.get_double("ransac.threshold_sq")) c.ransac.residual_sq_threshold = *v;
    if (auto v = kv.get_int("ransac.iterations")) c.ransac.iterations = static_cast<int>(*v);
    if (auto v = kv.get_int("ransac.min_inliers")) c.ransac.min_inliers = static_cast<int>(*v);
    if (auto v = kv.get_double("ransac.slope_tolerance")) c.ransac.slope_tolerance = *v;
    if (auto v = kv.get_int("ransac.seed")) c.ransac.seed = static_cast<std::uint64_t>(*v);
    if (auto v = kv.get_string("estimator.lambda_policy")) c.lambda = parse_lambda_policy(*v);
    if (auto v = kv.get_string("aggregation.policy")) c.aggregation = parse_aggregation_policy(*v);
    if (auto v = kv.get_string("tenors.days")) c.tenors = parse_tenor_list(*v);
    if (auto v = kv.get_double("daycount.days_per_year")) c.days_per_year = *v;
    if (auto v = kv.get_int("run.threads")) c.threads = static_cast<int>(*v);
    if (auto v = kv.get_list("plot.curve_dates")) c.plot_curve_dates = *v;
    if (auto v = kv.get_string("synth.truth")) c.synth_truth = resolve(*v);
    if (auto v = kv.get_string("synth.out_dir")) c.synth_out_override = resolve(*v);
    c.validate();
    return c;
}

inline PipelineConfig load_pipeline_config(const fs::path& path) {
    const auto kv = KeyValueFile::load(path.string());
    return pipeline_config_from(kv, path.parent_path());
}

// ---------------------------------------------------------------------------
// Truth spec files

namespace detail {

inline double number_at(const KeyValueFile& kv, const std::string& key, std::string_view text) {
    const auto v = csv::parse_double(text);
    if (!v) kv.fail(kv.find(key)->line, "bad number '" + std::string(text) + "' in '" + key + "'");
    return *v;
}

inline TermStructure parse_term_structure(const KeyValueFile& kv, const std::string& key) {
    TermStructure ts;
    const auto items = kv.get_list(key).value_or(std::vector<std::string>{});
    for (const auto& item : items) {
        const auto colon = item.find(':');
        if (colon == std::string::npos) {
            ts.knots.emplace_back(0.0, number_at(kv, key, item));
        } else {
            ts.knots.emplace_back(number_at(kv, key, std::string_view(item).substr(0, colon)),
                                  number_at(kv, key, std::string_view(item).substr(colon + 1)));
        }
    }
    if (ts.knots.empty()) kv.fail(kv.find(key)->line, "'" + key + "' has no knots");
    for (std::size_t i = 1; i < ts.knots.size(); ++i) {
        if (!(ts.knots[i].first > ts.knots[i - 1].first)) kv.fail(kv.find(key)->line, "knots must increase in tau");
    }
    return ts;
}

} // namespace detail

inline const std::set<std::string>& truth_keys() {
    static const std::set<std::string> keys{
        "seed",          "start",           "days",           "step_hours",      "spot.initial",
        "spot.vol",      "rates.ref",       "rates.crypto",   "expiries.list",   "expiries.first",
        "expiries.every_days", "expiries.count", "listing.min_days", "listing.max_days", "strikes.moneyness",
        "strikes.step",  "noise.y_sd",      "noise.futures_sd", "spread.zeta",   "spread.xi",
        "skeleton.floor", "skeleton.atm",   "outliers.fraction", "outliers.magnitude", "quote.size"};
    return keys;
}

/// Reads a TruthSpec. Rate curves are `tau_years:rate` lists; the moneyness
/// grid is either a list or `lo:hi:count`; expiries are an explicit ISO list
/// or a `first` / `every_days` / `count` schedule.
inline TruthSpec truth_spec_from(const KeyValueFile& kv) {
    kv.check_known(truth_keys());
    TruthSpec s;
    auto line_of = [&](const char* key) { return kv.find(key) ? kv.find(key)->line : 0; };
    auto time_at = [&](const std::string& key, const std::string& text) {
        const auto t = UtcTime::parse(text);
        if (!t) kv.fail(kv.find(key)->line, "bad timestamp '" + text + "' in '" + key + "'");
        return *t;
    };

    if (auto v = kv.get_int("seed")) s.seed = static_cast<std::uint64_t>(*v);
    if (auto v = kv.get_string("start")) s.start = time_at("start", *v);
    if (auto v = kv.get_int("days")) s.days = static_cast<int>(*v);
    if (auto v = kv.get_int("step_hours")) s.step_hours = static_cast<int>(*v);
    if (auto v = kv.get_double("spot.initial")) s.spot_initial = *v;
    if (auto v = kv.get_double("spot.vol")) s.spot_vol = *v;
    if (kv.contains("rates.ref")) s.rate_ref = detail::parse_term_structure(kv, "rates.ref");
    if (kv.contains("rates.crypto")) s.rate_crypto = detail::parse_term_structure(kv, "rates.crypto");

    if (auto v = kv.get_list("expiries.list")) {
        for (const auto& e : *v) s.expiries.push_back(time_at("expiries.list", e));
    }
    if (auto first = kv.get_string("expiries.first")) {
        const UtcTime t0 = time_at("expiries.first", *first);
        const auto every = kv.get_double("expiries.every_days");
        const auto count = kv.get_int("expiries.count");
        if (!every || !count || *every <= 0 || *count <= 0) {
            kv.fail(line_of("expiries.first"), "'expiries.first' needs positive every_days and count");
        }
        for (long long i = 0; i < *count; ++i) {
            s.expiries.push_back(t0.plus_seconds(static_cast<std::int64_t>(std::llround(
                static_cast<double>(i) * *every * static_cast<double>(kSecondsPerDay)))));
        }
    }
    if (s.expiries.empty()) kv.fail(0, "no expiries given (expiries.list or expiries.first)");
    if (auto v = kv.get_double("listing.min_days")) s.list_min_days = *v;
    if (auto v = kv.get_double("listing.max_days")) s.list_max_days = *v;

    if (auto v = kv.get_string("strikes.moneyness")) {
        const auto parts = *v;
        if (std::count(parts.begin(), parts.end(), ':') == 2) {
            const auto a = parts.find(':');
            const auto b = parts.find(':', a + 1);
            const double lo = detail::number_at(kv, "strikes.moneyness", std::string_view(parts).substr(0, a));
            const double hi = detail::number_at(kv, "strikes.moneyness", std::string_view(parts).substr(a + 1, b - a - 1));
            const double n = detail::number_at(kv, "strikes.moneyness", std::string_view(parts).substr(b + 1));
            if (!(n >= 2 && n == std::floor(n) && hi > lo && lo > 0)) {
                kv.fail(line_of("strikes.moneyness"), "moneyness grid must be lo:hi:count with 0 < lo < hi, count >= 2");
            }
            for (int i = 0; i < static_cast<int>(n); ++i) s.moneyness.push_back(lo + (hi - lo) * i / (n - 1));
        } else {
            const auto items = kv.get_list("strikes.moneyness").value_or(std::vector<std::string>{});
            for (const auto& item : items) {
                s.moneyness.push_back(detail::number_at(kv, "strikes.moneyness", item));
            }
        }
    } else {
        kv.fail(0, "missing 'strikes.moneyness'");
    }
    if (auto v = kv.get_double("strikes.step")) s.strike_step = *v;
    if (auto v = kv.get_double("noise.y_sd")) s.noise_sd = *v;
    if (auto v = kv.get_double("noise.futures_sd")) s.futures_noise_sd = *v;
    if (auto v = kv.get_double("spread.zeta")) s.spread.zeta = *v;
    if (auto v = kv.get_double("spread.xi")) s.spread.xi = *v;
    if (auto v = kv.get_double("skeleton.floor")) s.skeleton.floor = *v;
    if (auto v = kv.get_double("skeleton.atm")) s.skeleton.atm = *v;
    if (auto v = kv.get_double("outliers.fraction")) s.outlier_fraction = *v;
    if (auto v = kv.get_double("outliers.magnitude")) s.outlier_magnitude = *v;
    if (auto v = kv.get_double("quote.size")) s.quote_size = *v;

    auto check = [&](const char* key, bool ok, const std::string& msg, ErrorCode code = ErrorCode::ConfigError) {
        if (!ok) kv.fail(line_of(key), "'" + std::string(key) + "' " + msg, code);
    };
    check("days", s.days >= 1, "must be >= 1");
    check("step_hours", s.step_hours >= 1, "must be >= 1");
    check("spot.initial", s.spot_initial > 0.0, "must be positive");
    check("spot.vol", s.spot_vol >= 0.0, "must be >= 0");
    check("strikes.step", s.strike_step > 0.0, "must be positive");
    for (double m : s.moneyness) check("strikes.moneyness", m > 0.0, "must be positive");
    check("noise.y_sd", s.noise_sd >= 0.0, "must be >= 0");
    check("noise.futures_sd", s.futures_noise_sd >= 0.0, "must be >= 0");
    check("spread.xi", s.spread.xi < 1.0, "must be below 1");
    check("outliers.fraction", s.outlier_fraction >= 0.0 && s.outlier_fraction < 1.0, "must lie in [0, 1)");
    check("outliers.magnitude", s.outlier_magnitude >= 0.0, "must be >= 0");
    check("skeleton.floor", s.skeleton.floor > 0.0, "must be positive for the skeleton to stay positive",
          ErrorCode::InfeasibleSkeleton);
    check("skeleton.atm", s.skeleton.atm >= 0.0, "must be >= 0", ErrorCode::InfeasibleSkeleton);
    try {
        s.validate();
    } catch (const Error& e) {
        kv.fail(0, std::string("truth spec: ") + e.what(), e.code());
    }
    return s;
}

// ---------------------------------------------------------------------------
// synth

struct SynthSummary {
    std::size_t quote_rows = 0;
    std::size_t option_pairs = 0;
    std::size_t outliers = 0;
    std::size_t excluded_strikes = 0;
};

inline std::string dataset_quotes_csv(const LabeledDataset& d) {
    std::ostringstream out;
    write_quotes_csv(out, d.quotes);
    return out.str();
}

/// labels.csv: one row per option quote row (1-based data row id).
inline std::string dataset_labels_csv(const LabeledDataset& d) {
    std::vector<std::pair<std::size_t, Label>> rows;
    rows.reserve(2 * d.labels.size());
    for (const auto& l : d.labels) {
        rows.emplace_back(l.call_index + 1, l.label);
        rows.emplace_back(l.put_index + 1, l.label);
    }
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::string out = "row,label\n";
    for (const auto& [row, label] : rows) {
        out += std::to_string(row);
        out += label == Label::Clean ? ",clean\n" : ",outlier\n";
    }
    return out;
}

inline std::string dataset_truth_csv(const LabeledDataset& d) {
    std::string out = "date,expiry,rate_ref,rate_crypto\n";
    for (const auto& t : d.truth) {
        out += t.date.iso() + "," + t.expiry.iso() + "," + csv::format_double(t.rate_ref) + "," +
               csv::format_double(t.rate_crypto) + "\n";
    }
    return out;
}

inline SynthSummary write_dataset(const LabeledDataset& d, const fs::path& dir) {
    write_file_atomic(dir / "quotes.csv", dataset_quotes_csv(d));
    write_file_atomic(dir / "labels.csv", dataset_labels_csv(d));
    write_file_atomic(dir / "truth.csv", dataset_truth_csv(d));
    return {d.quotes.size(), d.labels.size(), d.outlier_count(), d.excluded.size()};
}

inline SynthSummary run_synth(const PipelineConfig& cfg, std::optional<std::uint64_t> seed_override = {}) {
    require(cfg.synth_truth.has_value(), ErrorCode::ConfigError, "synth.truth is not set");
    const auto kv = KeyValueFile::load(cfg.synth_truth->string());
    TruthSpec spec = truth_spec_from(kv);
    if (seed_override) spec.seed = *seed_override;
    const auto dataset = generate_market(spec);
    for (const auto& e : dataset.excluded) {
        log(LogLevel::Debug, "excluded strike " + csv::format_double(e.strike) + " at " + e.timestamp.iso() + ": " +
                                 e.reason);
    }
    return write_dataset(dataset, cfg.synth_out());
}

// ---------------------------------------------------------------------------
// ingest

struct IngestSummary {
    std::size_t files = 0;
    std::size_t rows_parsed = 0;
    std::size_t rows_rejected = 0;
    std::size_t partitions = 0;
};

inline std::vector<fs::path> list_input_files(const std::vector<fs::path>& inputs) {
    std::vector<fs::path> files;
    for (const auto& p : inputs) {
        if (fs::is_directory(p)) {
            std::vector<fs::path> found;
            for (const auto& entry : fs::directory_iterator(p)) {
                if (entry.is_regular_file() && entry.path().extension() == ".csv") found.push_back(entry.path());
            }
            std::sort(found.begin(), found.end());
            files.insert(files.end(), found.begin(), found.end());
        } else if (fs::exists(p)) {
            files.push_back(p);
        } else {
            throw Error(ErrorCode::IoError, "input '" + p.string() + "' does not exist");
        }
    }
    return files;
}

/// Validates raw snapshot files and writes one normalized CSV per UTC day to
/// `store/<underlying>/<YYYY-MM-DD>.csv`. Stale partitions are removed.
inline IngestSummary run_ingest(const PipelineConfig& cfg) {
    IngestSummary summary;
    const auto files = list_input_files(cfg.input_paths);
    std::map<Date, std::string> partitions;
    std::string rejections = "file,row,reason\n";
    for (const auto& file : files) {
        auto in = open_input(file);
        ParseResult parsed;
        try {
            parsed = parse_snapshot_csv(in);
        } catch (const Error& e) {
            throw Error(e.code(), file.string() + ": " + e.what());
        }
        ++summary.files;
        summary.rows_parsed += parsed.quotes.size();
        summary.rows_rejected += parsed.rejections.size();
        for (const auto& r : parsed.rejections) {
            rejections += csv::quote_if_needed(file.filename().string()) + "," + std::to_string(r.row) + "," +
                          csv::quote_if_needed(r.reason) + "\n";
        }
        std::ostringstream row;
        for (const auto& q : parsed.quotes) {
            row.str("");
            write_quote_row(row, q);
            auto& buf = partitions[quote_timestamp(q).date()];
            if (buf.empty()) {
                buf = std::string(kQuoteCsvHeader);
                buf += '\n';
            }
            buf += row.str();
        }
    }

    const fs::path dir = cfg.store_dir();
    fs::create_directories(dir);
    std::set<std::string> written;
    for (const auto& [date, content] : partitions) {
        const auto name = date.iso() + ".csv";
        write_file_atomic(dir / name, content);
        written.insert(name);
    }
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() == ".csv" && !written.contains(entry.path().filename().string())) {
            fs::remove(entry.path());
        }
    }
    write_file_atomic(cfg.ingest_rejections_csv(), rejections);
    summary.partitions = partitions.size();
    if (summary.rows_rejected > 0) {
        log(LogLevel::Warn, std::to_string(summary.rows_rejected) + " input rows rejected, see " +
                                cfg.ingest_rejections_csv().string());
    }
    return summary;
}

// ---------------------------------------------------------------------------
// estimate

struct RejectionRow {
    Date date;
    std::optional<UtcTime> expiry;
    std::optional<UtcTime> timestamp;
    std::string level; // row | hour | day
    std::string reason;
    std::string detail;
};

inline constexpr std::string_view kRejectionsCsvHeader = "date,expiry,timestamp,level,reason,detail";

struct DayOutput {
    std::vector<CurveRow> curves;
    std::vector<RejectionRow> rejections;
};

/// Runs filters, screening and daily aggregation for one store partition.
inline DayOutput estimate_day(const Date& date, std::span<const Quote> quotes, const PipelineConfig& cfg) {
    DayOutput out;
    auto assembly = assemble_slices(quotes);
    for (const auto& f : assembly.failures) {
        out.rejections.push_back({date, f.expiry, f.timestamp, "hour", "assembly", f.reason});
    }

    std::map<std::int64_t, std::vector<MarketSlice>> by_expiry;
    std::map<std::int64_t, std::size_t> matured_out;
    for (auto& slice : assembly.slices) {
        const auto key = slice.expiry.seconds_since_epoch();
        if (slice.days_to_expiry() < static_cast<double>(cfg.min_days)) {
            ++matured_out[key];
            continue;
        }
        by_expiry[key].push_back(filter_by_relative_spread(slice, cfg.max_rel_spread));
    }
    for (const auto& [key, hours] : matured_out) {
        if (!by_expiry.contains(key)) {
            out.rejections.push_back({date, UtcTime(key), std::nullopt, "day", "maturity filter",
                                      std::to_string(hours) + " hours below " + std::to_string(cfg.min_days) +
                                          " days"});
        }
    }

    const auto agg = cfg.aggregation_config();
    for (const auto& [key, hours] : by_expiry) {
        const auto result = aggregate_daily(hours, agg);
        auto note_hours = [&](const std::vector<HourRejection>& rs) {
            for (const auto& r : rs) {
                out.rejections.push_back({date, UtcTime(key), r.timestamp, "hour",
                                          std::string(to_string(r.rejection.reason)), r.rejection.detail});
            }
        };
        if (const auto* d = std::get_if<DailyEstimate>(&result)) {
            note_hours(d->hour_rejections);
            out.curves.push_back(to_curve_row(*d));
        } else {
            const auto& r = std::get<DayRejected>(result);
            note_hours(r.hour_rejections);
            out.rejections.push_back({date, UtcTime(key), std::nullopt, "day",
                                      std::string(to_string(r.rejection.reason)), r.rejection.detail});
        }
    }
    return out;
}

struct EstimateSummary {
    std::size_t days = 0;
    std::size_t curve_rows = 0;
    std::size_t rejection_rows = 0;
};

inline std::vector<std::pair<Date, fs::path>> list_partitions(const fs::path& dir) {
    std::vector<std::pair<Date, fs::path>> out;
    if (!fs::is_directory(dir)) throw Error(ErrorCode::IoError, "store '" + dir.string() + "' does not exist");
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() != ".csv") continue;
        if (auto d = Date::parse(entry.path().stem().string())) out.emplace_back(*d, entry.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

/// Runs `fn(i)` for i in [0, n) on up to `threads` workers.
inline void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
    const auto workers = static_cast<std::size_t>(std::max(1, threads));
    if (workers == 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(workers, n); ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

inline std::string rejections_csv(std::span<const RejectionRow> rows) {
    std::string out(kRejectionsCsvHeader);
    out += '\n';
    for (const auto& r : rows) {
        out += r.date.iso() + "," + (r.expiry ? r.expiry->iso() : "") + "," + (r.timestamp ? r.timestamp->iso() : "") +
               "," + r.level + "," + csv::quote_if_needed(r.reason) + "," + csv::quote_if_needed(r.detail) + "\n";
    }
    return out;
}

inline EstimateSummary run_estimate(const PipelineConfig& cfg) {
    const auto partitions = list_partitions(cfg.store_dir());
    std::vector<DayOutput> outputs(partitions.size());
    parallel_for(partitions.size(), cfg.threads, [&](std::size_t i) {
        const auto& [date, path] = partitions[i];
        auto in = open_input(path);
        const auto parsed = parse_snapshot_csv(in);
        outputs[i] = estimate_day(date, parsed.quotes, cfg);
        for (const auto& r : parsed.rejections) {
            outputs[i].rejections.push_back({date, std::nullopt, std::nullopt, "row", r.reason,
                                             path.filename().string() + " row " + std::to_string(r.row)});
        }
    });

    std::vector<CurveRow> curves;
    std::vector<RejectionRow> rejections;
    for (auto& o : outputs) {
        std::sort(o.curves.begin(), o.curves.end(), [](const CurveRow& a, const CurveRow& b) {
            return std::tie(a.tau_years, a.expiry) < std::tie(b.tau_years, b.expiry);
        });
        curves.insert(curves.end(), o.curves.begin(), o.curves.end());
        rejections.insert(rejections.end(), o.rejections.begin(), o.rejections.end());
    }
    std::ostringstream curves_out;
    write_curves_csv(curves_out, curves);
    write_file_atomic(cfg.curves_csv(), curves_out.str());
    write_file_atomic(cfg.rejections_csv(), rejections_csv(rejections));
    return {partitions.size(), curves.size(), rejections.size()};
}

// ---------------------------------------------------------------------------
// tenors

struct TenorsSummary {
    std::size_t curves = 0;
    std::size_t rows = 0;
    std::size_t dropped_points = 0;
};

inline TenorsSummary run_tenors(const PipelineConfig& cfg) {
    auto in = open_input(cfg.curves_csv());
    const auto rows = read_curves_csv(in);
    std::vector<CurveRow> dropped;
    const auto curves = curves_by_date(rows, &dropped);
    const auto series = build_tenor_series(curves, cfg.tenors, cfg.days_per_year);
    const auto flat = flatten(series);
    std::ostringstream out;
    write_tenors_csv(out, flat);
    write_file_atomic(cfg.tenors_csv(), out.str());
    return {curves.size(), flat.size(), dropped.size()};
}

// ---------------------------------------------------------------------------
// plot

struct PlotSummary {
    std::vector<fs::path> files;
};

inline svg::Chart curve_chart(const YieldCurve& curve) {
    svg::Chart chart;
    chart.title = "Implied yield curves " + curve.valuation_date.iso();
    chart.x_label = "days to expiry";
    chart.y_label = "annualized rate (%)";
    svg::Series crypto{"crypto", "#d95f02", {}};
    svg::Series ref{"reference", "#1b9e77", {}};
    for (const auto& p : curve.points) {
        crypto.points.emplace_back(p.tau_years * 365.0, 100.0 * p.rate_crypto);
        ref.points.emplace_back(p.tau_years * 365.0, 100.0 * p.rate_ref);
    }
    chart.series = {crypto, ref};
    return chart;
}

inline svg::Chart tenor_chart(int tenor, std::span<const TenorCsvRow> rows) {
    svg::Chart chart;
    chart.title = "Implied rates, " + std::to_string(tenor) + "-day tenor";
    chart.x_label = "date";
    chart.y_label = "annualized rate (%)";
    chart.x_axis = svg::XAxis::Date;
    svg::Series crypto{"crypto", "#d95f02", {}};
    svg::Series ref{"reference", "#1b9e77", {}};
    for (const auto& r : rows) {
        if (r.tenor_days != tenor) continue;
        auto& s = r.leg == Leg::Crypto ? crypto : ref;
        s.points.emplace_back(static_cast<double>(r.date.days_since_epoch()), 100.0 * r.rate);
    }
    chart.series = {crypto, ref};
    return chart;
}

inline PlotSummary run_plot(const PipelineConfig& cfg) {
    PlotSummary summary;
    auto curves_in = open_input(cfg.curves_csv());
    const auto curve_rows = read_curves_csv(curves_in);
    auto tenors_in = open_input(cfg.tenors_csv());
    const auto tenor_rows = read_tenors_csv(tenors_in);

    const auto curves = curves_by_date(curve_rows);
    std::vector<const YieldCurve*> selected;
    for (const auto& spec : cfg.plot_curve_dates) {
        if (spec == "all") {
            for (const auto& c : curves) selected.push_back(&c);
        } else if (spec == "last") {
            if (!curves.empty()) selected.push_back(&curves.back());
        } else {
            const auto d = Date::parse(spec);
            require(d.has_value(), ErrorCode::ConfigError, "bad plot date '" + spec + "'");
            for (const auto& c : curves) {
                if (c.valuation_date == *d) selected.push_back(&c);
            }
        }
    }
    std::sort(selected.begin(), selected.end());
    selected.erase(std::unique(selected.begin(), selected.end()), selected.end());
    for (const auto* c : selected) {
        const auto path = cfg.plots_dir() / ("curve_" + c->valuation_date.iso() + ".svg");
        write_file_atomic(path, svg::render(curve_chart(*c)));
        summary.files.push_back(path);
    }

    std::set<int> tenors(cfg.tenors.begin(), cfg.tenors.end());
    for (const auto& r : tenor_rows) tenors.insert(r.tenor_days);
    for (int tenor : tenors) {
        const auto path = cfg.plots_dir() / ("tenor_" + std::to_string(tenor) + ".svg");
        write_file_atomic(path, svg::render(tenor_chart(tenor, tenor_rows)));
        summary.files.push_back(path);
    }
    return summary;
}

} // namespace curves
