#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "fbl/harness.hpp"
#include "fbl/parallel.hpp"

namespace {

enum Exit : int { kOk = 0, kConfigError = 1, kVerifyFailed = 2, kIoError = 3 };

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Finite-blocklength Gaussian MAC and random access experiments"};
    std::string mode_name, config_path, out_path, json_path, trace_path;
    std::optional<std::uint64_t> seed;
    unsigned workers = fbl::default_workers();

    app.add_option("mode", mode_name, "rates-mac | rates-rac | simulate-mac | simulate-rac | verify")->required();
    app.add_option("--config", config_path, "experiment config file")->required();
    app.add_option("--out", out_path, "CSV output path (overrides the config; default stdout)");
    app.add_option("--seed", seed, "master seed (overrides the config)");
    app.add_option("--workers", workers, "worker threads (default $FBL_GAUSAC_WORKERS or all cores)")
        ->check(CLI::PositiveNumber);
    app.add_option("--json", json_path, "also write the rows as JSON");
    app.add_option("--trace", trace_path, "per-epoch JSON lines (simulate-rac)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    const auto mode = fbl::parse_mode(mode_name);
    if (!mode) {
        std::cerr << "error: unknown mode '" << mode_name << "'\n";
        return kConfigError;
    }

    std::ifstream config_file(config_path);
    if (!config_file) {
        std::cerr << "error: cannot read " << config_path << '\n';
        return kIoError;
    }
    std::stringstream text;
    text << config_file.rdbuf();

    fbl::RunResult result;
    std::ofstream trace_file;
    fbl::ExperimentConfig cfg;
    try {
        cfg = fbl::parse_config(text.str());
        if (seed) cfg.seed = *seed;
        if (!out_path.empty()) cfg.out = out_path;
        fbl::RunOptions options;
        options.workers = workers;
        options.log = &std::cerr;
        if (!trace_path.empty()) {
            trace_file.open(trace_path);
            if (!trace_file) {
                std::cerr << "error: cannot write " << trace_path << '\n';
                return kIoError;
            }
            options.trace = &trace_file;
        }
        result = fbl::run_experiment(*mode, cfg, options);
    } catch (const fbl::ConfigError& e) {
        for (const auto& v : e.violations()) std::cerr << "config error: " << v << '\n';
        return kConfigError;
    }

    if (cfg.out) {
        std::ofstream out(*cfg.out);
        if (!out) {
            std::cerr << "error: cannot write " << *cfg.out << '\n';
            return kIoError;
        }
        fbl::write_csv(out, result.rows);
        if (!out.flush()) return kIoError;
    } else {
        fbl::write_csv(std::cout, result.rows);
    }
    if (!json_path.empty()) {
        std::ofstream json(json_path);
        if (!json) {
            std::cerr << "error: cannot write " << json_path << '\n';
            return kIoError;
        }
        json << fbl::rows_to_json(result.rows).dump(2) << '\n';
        if (!json.flush()) return kIoError;
    }
    if (trace_file.is_open() && !trace_file.flush()) return kIoError;
    return result.verification_failed ? kVerifyFailed : kOk;
}
