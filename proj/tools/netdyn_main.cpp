#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"
#include "netdyn/common.hpp"
#include "netdyn/pipeline.hpp"

// Exit codes: 0 success, 2 config error, 3 stage failure.

namespace {

struct CommonArgs {
    std::string config;
    std::string out = "run";
    long long seed = -1;
    bool resume = false;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool needs_config = true) {
    auto* opt = cmd->add_option("--config", args.config, "pipeline config JSON");
    if (needs_config) opt->required();
    cmd->add_option("--out", args.out, "run directory");
    cmd->add_option("--seed", args.seed, "override the config root seed");
    cmd->add_flag("--resume", args.resume, "reuse existing stage artifacts");
}

netdyn::PipelineConfig load_config(const CommonArgs& args) {
    auto cfg = netdyn::PipelineConfig::from_json_file(args.config);
    if (args.seed >= 0) cfg.seed = uint64_t(args.seed);
    return cfg;
}

int run_until(const CommonArgs& args, netdyn::Stage until) {
    auto cfg = load_config(args);
    auto result = netdyn::run_pipeline(cfg, args.out, args.resume, until);
    if (until == netdyn::Stage::Report) {
        printf("run complete: %s (rounds: %d, thresholds %s)\n", result.run_dir.c_str(),
               result.rounds_used, result.thresholds_met ? "met" : "not met");
        printf("r2 = %.6g  mse = %.6g\n", result.metrics.r2, result.metrics.mse);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"closed-form discovery of networked ODE dynamics from trajectory data"};
    app.require_subcommand(1);

    CommonArgs args;
    auto* c_sim = app.add_subcommand("simulate", "generate topology and trajectory data");
    add_common(c_sim, args);
    auto* c_pre = app.add_subcommand("preprocess", "select interval and build training pairs");
    add_common(c_pre, args);
    auto* c_train = app.add_subcommand("train", "train the signal-decoupling networks");
    add_common(c_train, args);
    auto* c_reg = app.add_subcommand("regress", "extract closed-form expressions");
    add_common(c_reg, args);
    auto* c_eval = app.add_subcommand("evaluate", "integrate the discovered model and score it");
    add_common(c_eval, args);
    auto* c_pipe = app.add_subcommand("pipeline", "run every stage end to end");
    add_common(c_pipe, args);
    auto* c_bif = app.add_subcommand("bifurcate", "scan a parameter and emit a bifurcation table");
    add_common(c_bif, args);
    auto* c_rep = app.add_subcommand("report", "consolidate artifacts into report files");
    add_common(c_rep, args, false);

    CLI11_PARSE(app, argc, argv);

    try {
        if (c_sim->parsed()) return run_until(args, netdyn::Stage::Simulate);
        if (c_pre->parsed()) return run_until(args, netdyn::Stage::Preprocess);
        if (c_train->parsed()) return run_until(args, netdyn::Stage::Train);
        if (c_reg->parsed()) return run_until(args, netdyn::Stage::Regress);
        if (c_eval->parsed()) return run_until(args, netdyn::Stage::Evaluate);
        if (c_pipe->parsed()) return run_until(args, netdyn::Stage::Report);
        if (c_bif->parsed()) {
            netdyn::run_bifurcation(load_config(args), args.out);
            return 0;
        }
        if (c_rep->parsed()) {
            netdyn::emit_report(args.out);
            return 0;
        }
    } catch (const netdyn::ConfigError& ex) {
        fprintf(stderr, "config error: %s\n", ex.what());
        return 2;
    } catch (const std::exception& ex) {
        fprintf(stderr, "stage failure: %s\n", ex.what());
        return 3;
    }
    return 0;
}
