#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "curves/pipeline.hpp"

namespace {

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> tenors;
    std::optional<std::string> lambda_policy;
    std::optional<std::string> aggregation;
};

curves::PipelineConfig resolve(const Options& opt) {
    auto cfg = curves::load_pipeline_config(opt.config);
    if (opt.seed) cfg.ransac.seed = *opt.seed;
    if (opt.tenors) cfg.tenors = curves::parse_tenor_list(*opt.tenors);
    if (opt.lambda_policy) cfg.lambda = curves::parse_lambda_policy(*opt.lambda_policy);
    if (opt.aggregation) cfg.aggregation = curves::parse_aggregation_policy(*opt.aggregation);
    cfg.validate();
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Implied crypto and reference-currency yield curves from inverse options and futures"};
    app.require_subcommand(1);
    app.fallthrough();
    Options opt;
    app.add_option("--config", opt.config, "pipeline config file")->required();
    app.add_option("--seed", opt.seed, "master seed (RANSAC; synthetic generator for `synth`)");
    app.add_option("--tenors", opt.tenors, "comma-separated tenors in days, e.g. 90,180,360");
    app.add_option("--lambda-policy", opt.lambda_policy, "n | n:<c> | const:<v>");
    app.add_option("--aggregation", opt.aggregation, "pool | median");

    auto* ingest = app.add_subcommand("ingest", "validate raw CSV and write per-day store partitions");
    auto* estimate = app.add_subcommand("estimate", "estimate daily zero-coupon curves into curves.csv");
    auto* tenors = app.add_subcommand("tenors", "interpolate fixed tenors into tenors.csv");
    auto* plot = app.add_subcommand("plot", "render SVG charts from curves.csv and tenors.csv");
    auto* synth = app.add_subcommand("synth", "generate a labelled synthetic dataset from a truth spec");

    CLI11_PARSE(app, argc, argv);

    try {
        const auto cfg = resolve(opt);
        if (ingest->parsed()) {
            const auto s = curves::run_ingest(cfg);
            std::cout << "ingest files=" << s.files << " rows=" << s.rows_parsed << " rejected=" << s.rows_rejected
                      << " partitions=" << s.partitions << '\n';
        } else if (estimate->parsed()) {
            const auto s = curves::run_estimate(cfg);
            std::cout << "estimate days=" << s.days << " curve_rows=" << s.curve_rows
                      << " rejections=" << s.rejection_rows << '\n';
        } else if (tenors->parsed()) {
            const auto s = curves::run_tenors(cfg);
            std::cout << "tenors curves=" << s.curves << " rows=" << s.rows << " dropped_points=" << s.dropped_points
                      << '\n';
        } else if (plot->parsed()) {
            const auto s = curves::run_plot(cfg);
            std::cout << "plot files=" << s.files.size() << '\n';
        } else if (synth->parsed()) {
            const auto s = curves::run_synth(cfg, opt.seed);
            std::cout << "synth rows=" << s.quote_rows << " pairs=" << s.option_pairs << " outliers=" << s.outliers
                      << " excluded=" << s.excluded_strikes << '\n';
        }
    } catch (const curves::Error& e) {
        std::cerr << "error code=" << curves::to_string(e.code()) << " message=\"" << e.what() << "\"\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error code=Internal message=\"" << e.what() << "\"\n";
        return 1;
    }
    return 0;
}
