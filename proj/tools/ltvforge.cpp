#include <CLI11.hpp>
#include <string>

#include "ltvforge/config.hpp"
#include "ltvforge/errors.hpp"
#include "ltvforge/log.hpp"
#include "ltvforge/runner.hpp"
#include "ltvforge/version.hpp"

int main(int argc, char** argv) {
    CLI::App app{"CC-OR-Net LTV toolkit: synthetic data, training, evaluation, ablation, "
                 "gradient verification"};
    app.set_version_flag("--version", std::string(LTVFORGE_VERSION) + " (" + LTVFORGE_BUILD_ID + ")");
    app.require_subcommand(1);

    std::string config_path;
    long long seed_override = -1;
    long long threads_override = -1;
    bool paper_defaults = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON run configuration")->required();
        sub->add_option("--seed", seed_override, "override the config seed");
        sub->add_option("--threads", threads_override,
                        "worker cap; 1 guarantees bitwise determinism");
        sub->add_flag("--paper-defaults", paper_defaults,
                      "start from the full-scale architecture defaults");
    };

    add_common(app.add_subcommand("gen-data", "generate a synthetic dataset CSV"));
    add_common(app.add_subcommand("train", "train a model and write a checkpoint"));
    add_common(app.add_subcommand("eval", "evaluate a checkpoint and emit a metrics report"));
    add_common(app.add_subcommand("ablate", "run the incremental ablation ladder"));
    add_common(app.add_subcommand("grad-check", "verify analytic gradients per loss component"));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : ltvforge::kExitConfig;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    ltvforge::RunConfig cfg;
    try {
        cfg = ltvforge::load_run_config(config_path, paper_defaults);
    } catch (const std::exception& e) {
        ltvforge::log::error(e.what());
        return ltvforge::kExitConfig;
    }
    if (seed_override >= 0) {
        cfg.seed = static_cast<std::uint64_t>(seed_override);
        cfg.generator.seed = cfg.seed;
        cfg.model.seed = cfg.seed;
    }
    if (threads_override >= 1) cfg.threads = static_cast<std::size_t>(threads_override);

    return ltvforge::dispatch(command, cfg);
}
