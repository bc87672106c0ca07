// hjreach: train sinusoidal value networks for HJI reachability, solve the
// grid oracle, compare the two, verify analytic properties, and fine-tune
// checkpoints under the sup-norm loss.
//
// Exit codes: 0 success, 1 property failure, 2 config error, 3 numeric abort.

#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "hjreach/commands.hpp"

namespace {

struct CliArgs {
    std::string config_path;
    std::string out_dir;
    std::string checkpoint;
    std::string oracle_dir;
    int threads = 1;
    std::int64_t seed = -1;
    bool seed_set = false;
    bool quiet = false;
};

void add_common(CLI::App* sub, CliArgs& args) {
    sub->add_option("--config", args.config_path, "run configuration (JSON)")->required();
    sub->add_option("--out", args.out_dir, "override config output_dir");
    sub->add_option("--threads", args.threads, "worker threads (1 = strict deterministic)")
        ->check(CLI::PositiveNumber);
    sub->add_option("--seed", args.seed, "override train.seed")->each([&](const std::string&) {
        args.seed_set = true;
    });
    sub->add_flag("--quiet", args.quiet, "suppress progress output");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hamilton-Jacobi reachability: sup-norm value-network training and verification"};
    app.require_subcommand(1);
    CliArgs args;

    auto* train_cmd = app.add_subcommand("train", "train a value network per the config");
    add_common(train_cmd, args);
    auto* solve_cmd = app.add_subcommand("solve", "run the grid oracle at the config's times");
    add_common(solve_cmd, args);
    auto* compare_cmd = app.add_subcommand("compare", "compare a checkpoint against oracle fields");
    add_common(compare_cmd, args);
    compare_cmd->add_option("--checkpoint", args.checkpoint, "checkpoint path (default <out>/train/checkpoint_final.json)");
    compare_cmd->add_option("--oracle", args.oracle_dir, "oracle directory (default <out>/solve)");
    auto* verify_cmd = app.add_subcommand("verify", "run the analytic property suite");
    add_common(verify_cmd, args);
    auto* finetune_cmd = app.add_subcommand("finetune", "resume a checkpoint with sup-norm loss");
    add_common(finetune_cmd, args);
    finetune_cmd->add_option("--checkpoint", args.checkpoint, "checkpoint path (default <out>/train/checkpoint_final.json)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        hjreach::RunConfig cfg = hjreach::load_run_config(args.config_path);
        if (!args.out_dir.empty()) cfg.output_dir = args.out_dir;
        if (args.seed_set) cfg.train.seed = static_cast<std::uint64_t>(args.seed);
        cfg.validate();

        hjreach::CommandOptions opts;
        opts.threads = args.threads;
        opts.quiet = args.quiet;
        opts.checkpoint_path = args.checkpoint;
        opts.oracle_dir = args.oracle_dir;

        if (train_cmd->parsed()) {
            hjreach::cmd_train(cfg, opts);
        } else if (solve_cmd->parsed()) {
            hjreach::cmd_solve(cfg, opts);
        } else if (compare_cmd->parsed()) {
            hjreach::cmd_compare(cfg, opts);
        } else if (verify_cmd->parsed()) {
            hjreach::cmd_verify(cfg, opts);
        } else if (finetune_cmd->parsed()) {
            hjreach::cmd_finetune(cfg, opts);
        }
        return 0;
    } catch (const hjreach::PropertyFailure& e) {
        std::fprintf(stderr, "property failure: %s\n", e.what());
        return 1;
    } catch (const hjreach::NumericError& e) {
        std::fprintf(stderr, "numeric abort: %s\n", e.what());
        return 3;
    } catch (const hjreach::SchemaError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::out_of_range& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
