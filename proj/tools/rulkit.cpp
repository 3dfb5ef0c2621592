#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rulkit/errors.hpp"
#include "rulkit/harness.hpp"
#include "rulkit/version.hpp"

namespace {

constexpr const char* kPipelineOrder[] = {"prep", "train", "attack", "defend", "report", "sweep", "transfer"};

void run_stage(const std::string& name, const rulkit::RunConfig& cfg, const rulkit::StageOptions& opt) {
    if (name == "prep")
        rulkit::stage_prep(cfg, opt);
    else if (name == "train")
        rulkit::stage_train(cfg, opt);
    else if (name == "attack")
        rulkit::stage_attack(cfg, opt);
    else if (name == "defend")
        rulkit::stage_defend(cfg, opt);
    else if (name == "report")
        rulkit::stage_report(cfg, opt);
    else if (name == "sweep")
        rulkit::stage_sweep(cfg, opt);
    else if (name == "transfer")
        rulkit::stage_transfer(cfg, opt);
    else if (name == "pipeline")
        for (const char* stage : kPipelineOrder) run_stage(stage, cfg, opt);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adversarial robustness workbench for turbofan RUL regression"};
    app.set_version_flag("--version", rulkit::kVersion);
    std::string config_path, run_dir;
    rulkit::StageOptions opt;
    app.add_option("-c,--config", config_path, "JSON run configuration")->required();
    app.add_option("--run-dir", run_dir, "override run_dir from the config");
    app.add_flag("--force", opt.force, "recompute stages even when their outputs exist");
    app.add_flag("-q,--quiet", opt.quiet, "suppress progress notes");
    app.require_subcommand(1);
    app.add_subcommand("prep", "build the normalized windowed dataset (generates synthetic data if configured)");
    app.add_subcommand("train", "train every configured model");
    app.add_subcommand("attack", "craft adversarial evaluation sets for every model x attack");
    app.add_subcommand("defend", "adversarially retrain the configured models");
    app.add_subcommand("report", "assemble the robustness report from stored artifacts");
    app.add_subcommand("sweep", "attack strength sweep over the configured epsilon grid");
    app.add_subcommand("transfer", "cross-model transferability grid");
    app.add_subcommand("pipeline", "run all stages in order");
    // top-level options are also accepted after the stage name
    for (CLI::App* sub : app.get_subcommands([](const CLI::App*) { return true; })) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        rulkit::RunConfig cfg = rulkit::parse_config(config_path);
        if (!run_dir.empty()) cfg.run_dir = run_dir;
        for (const CLI::App* sub : app.get_subcommands()) run_stage(sub->get_name(), cfg, opt);
        return 0;
    } catch (const rulkit::ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
