#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "curves/curves.hpp"

namespace curves::test {

inline std::vector<double> linspace(double lo, double hi, int n) {
    std::vector<double> out;
    for (int i = 0; i < n; ++i) out.push_back(n == 1 ? lo : lo + (hi - lo) * i / (n - 1));
    return out;
}

/// A generated slice assembled through the normal market_data path.
struct GeneratedSlice {
    MarketSlice slice;
    LabeledDataset dataset;
};

inline GeneratedSlice generated_slice(const SliceSpec& spec, std::uint64_t seed, double outlier_fraction = 0.0,
                                      double outlier_magnitude = 0.25) {
    LabeledDataset d;
    std::mt19937_64 rng(seed);
    append_slice(d, spec, rng);
    d = inject_outliers(std::move(d), outlier_fraction, outlier_magnitude, combine_seed(seed, 99));
    auto assembly = assemble_slices(d.quotes);
    GeneratedSlice out{assembly.slices.at(0), std::move(d)};
    return out;
}

inline SliceSpec rates_slice(double r_ref, double r_crypto, double tau_years, int strikes = 30) {
    SliceSpec s;
    s.timestamp = UtcTime::at(Date::from_ymd(2024, 3, 1));
    s.expiry = s.timestamp.plus_seconds(static_cast<std::int64_t>(std::llround(tau_years * 365.0 * 86400.0)));
    s.zc_ref = std::exp(-r_ref * tau_years);
    s.zc_crypto = std::exp(-r_crypto * tau_years);
    s.moneyness = linspace(0.5, 1.8, strikes);
    return s;
}

/// Labels of the generated pairs, in strike order (matches slice observations
/// when no strike was excluded).
inline std::vector<bool> outlier_mask(const LabeledDataset& d) {
    std::vector<std::pair<double, bool>> by_strike;
    for (const auto& l : d.labels) by_strike.emplace_back(l.strike, l.label == Label::Outlier);
    std::sort(by_strike.begin(), by_strike.end());
    std::vector<bool> out;
    for (const auto& [k, o] : by_strike) out.push_back(o);
    return out;
}

class TempDir {
public:
    explicit TempDir(const std::string& name) {
        path_ = std::filesystem::temp_directory_path() /
                ("curves_test_" + name + "_" + std::to_string(std::random_device{}()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

} // namespace curves::test
