#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "nvmag/experiment.hpp"

namespace {

// Errors go to stderr as one line: "nvmag: error: <stage>: <message>".
int fail(const std::string& stage, const std::string& msg) {
    std::string one = msg;
    for (char& c : one) {
        if (c == '\n' || c == '\r') c = ' ';
    }
    std::cerr << "nvmag: error: " << stage << ": " << one << '\n';
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cavity-readout NV vector magnetometer simulator and pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<int> threads;

    auto* run = app.add_subcommand("run", "run the experiment named in a config file");
    run->add_option("config", config_path, "config file")->required();
    auto* validate = app.add_subcommand("validate", "check a config file without running it");
    validate->add_option("config", config_path, "config file")->required();
    app.add_subcommand("list", "list available experiments");
    for (auto* sub : {run, validate}) {
        sub->add_option("--seed", seed, "override [experiment] seed");
        sub->add_option("--out", out, "override [experiment] output directory");
        sub->add_option("--threads", threads, "worker threads for sweeps")->check(CLI::PositiveNumber);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        return fail("usage", e.what());
    }

    if (app.got_subcommand("list")) {
        for (const auto& n : nvmag::experiment_names()) {
            std::cout << n << "  " << nvmag::experiment_description(n) << '\n';
        }
        return 0;
    }

    nvmag::ExperimentConfig cfg;
    try {
        cfg = nvmag::load_config(config_path);
        if (seed) cfg.seed = *seed;
        if (out) cfg.output_dir = *out;
        if (threads) cfg.threads = *threads;
        nvmag::experiment_description(cfg.name);
    } catch (const std::exception& e) {
        return fail("config", e.what());
    }

    if (app.got_subcommand("validate")) {
        std::cout << "ok " << cfg.name << " sha256=" << cfg.config_hash << '\n';
        return 0;
    }

    try {
        std::cout << nvmag::run_experiment(cfg);
        std::cout << "outputs written to " << cfg.output_dir << '\n';
    } catch (const std::exception& e) {
        return fail(cfg.name, e.what());
    }
    return 0;
}
