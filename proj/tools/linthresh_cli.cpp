#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "linthresh/experiment.hpp"

namespace ex = linthresh::experiment;

int main(int argc, char** argv) {
    CLI::App app{"Sparsity-constrained linear inverse problems: solver runs, traces and rate certificates"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed_override;
    app.add_option("--config", config_path, "experiment config (JSON)")->required();
    app.add_option("--out-dir", out_dir, "output directory, overrides output.dir");
    app.add_option("--seed-override", seed_override, "replace every generator seed");

    auto* run = app.add_subcommand("run", "solve, write trace, fitted rate and certificates");
    auto* certify = app.add_subcommand("certify", "certificates only, no traced iteration");
    auto* oracle = app.add_subcommand("oracle", "sign-pattern enumeration only");
    auto* spectral = app.add_subcommand("spectral", "spectral report only");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ex::exit_ok : ex::exit_validation;
    }

    try {
        ex::ExperimentConfig cfg = ex::load_config(config_path);
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        if (seed_override) ex::apply_seed_override(cfg, *seed_override);

        if (run->parsed()) {
            const ex::RunOutcome r = ex::run_experiment(cfg);
            std::cout << r.summary.dump(2) << '\n';
            if (r.exit_code == ex::exit_certificate) {
                std::cerr << "error: fitted rate exceeds a certificate rate\n";
            }
            return r.exit_code;
        }
        if (certify->parsed()) {
            const auto rep = ex::certify(cfg);
            std::cout << rep["certificates"].dump(2) << '\n';
        } else if (oracle->parsed()) {
            std::cout << ex::oracle_only(cfg).dump(2) << '\n';
        } else if (spectral->parsed()) {
            std::cout << ex::spectral_only(cfg).dump(2) << '\n';
        }
        return ex::exit_ok;
    } catch (const ex::ValidationError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return ex::exit_validation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return ex::exit_runtime;
    }
}
