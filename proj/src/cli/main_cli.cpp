#include <iostream>

#include <CLI11.hpp>

#include "otrecon/cli/commands.hpp"
#include "otrecon/version.hpp"

namespace otrecon::cli {

int run_cli(int argc, char** argv) {
    CLI::App app{"otrecon: learned primal-dual CT reconstruction trained with an "
                 "entropy-regularized transport loss"};
    app.set_version_flag("--version", std::string(VERSION));
    app.require_subcommand(1);

    std::string config_path, out_dir = "out";
    std::vector<std::string> checkpoints;
    std::optional<std::uint64_t> seed_override;

    auto add_common = [&](CLI::App* sub, bool config_required) {
        auto* c = sub->add_option("--config", config_path, "flat key = value configuration file");
        if (config_required) c->required();
        sub->add_option("--out", out_dir, "output directory");
        sub->add_option("--seed", seed_override, "overrides the config seed");
        return sub;
    };

    auto* gen = add_common(app.add_subcommand("generate", "write a seeded dataset"), true);
    auto* train = add_common(app.add_subcommand("train", "train a reconstruction operator"), true);
    train->add_option("--checkpoint", checkpoints, "resume from this checkpoint");
    auto* eval = add_common(app.add_subcommand("eval", "evaluate checkpoints on a validation set"), true);
    eval->add_option("--checkpoint", checkpoints, "checkpoint to evaluate (repeat for two)")
        ->required();
    auto* prop1 = add_common(app.add_subcommand("prop1", "expected-L2 smearing check"), false);
    auto* prop2 = add_common(app.add_subcommand("prop2", "expected-OT barycenter check"), false);
    auto* metric =
        add_common(app.add_subcommand("metric-check", "sampled metric axiom check"), false);
    auto* self = app.add_subcommand("selftest", "run the built-in verification suites");
    self->add_option("--config", config_path, "flat key = value configuration file");
    self->add_option("--out", out_dir, "optional report directory");
    self->add_option("--seed", seed_override, "overrides the config seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        Config cfg = config_path.empty() ? Config{} : Config::load(config_path);
        if (seed_override) cfg.set("seed", std::to_string(*seed_override));

        if (gen->parsed()) {
            cmd_generate(cfg, out_dir);
        } else if (train->parsed()) {
            if (checkpoints.size() > 1)
                throw ContractError("train: at most one --checkpoint to resume from");
            std::optional<std::string> resume;
            if (!checkpoints.empty()) resume = checkpoints.front();
            cmd_train(cfg, out_dir, resume);
        } else if (eval->parsed()) {
            cmd_eval(cfg, out_dir, checkpoints);
        } else if (prop1->parsed()) {
            cmd_prop1(cfg, out_dir);
        } else if (prop2->parsed()) {
            cmd_prop2(cfg, out_dir);
        } else if (metric->parsed()) {
            cmd_metric_check(cfg, out_dir);
        } else if (self->parsed()) {
            std::string report;
            bool ok = selftest(cfg, report);
            std::cout << report;
            if (self->count("--out")) write_selftest_outputs(cfg, report, out_dir);
            if (!ok) return 2;
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const ContractError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const NumericalBreakdown& e) {
        std::cerr << "numerical breakdown: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

} // namespace otrecon::cli
