#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "pipeline.hpp"
#include "sdm/errors.hpp"

// sdm: generate synthetic skeleton datasets, learn the joint dictionaries,
// lift 2D observations to 3D, evaluate, and run benchmark sweeps.
//
// Every subcommand reads one JSON config (sections data/learn/solve/eval/
// bench); flags override config keys, and SDM_OUT_DIR overrides the output
// directory only.

int main(int argc, char** argv) {
    CLI::App app{"Shape-decomposition 3D pose lifting toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    sdm::pipeline::GlobalOptions opts;
    std::uint64_t seed_value = 0;
    bool seed_set = false;
    std::string out_dir_value;

    app.add_option("--config", config_path, "experiment config (JSON)")->required();
    auto* seed_opt = app.add_option("--seed", seed_value, "override generation/learning seeds");
    auto* out_opt = app.add_option("--out-dir", out_dir_value, "override data.out_dir");
    app.add_option("--workers", opts.workers, "worker threads for batch solves")
        ->check(CLI::PositiveNumber);

    auto* gen = app.add_subcommand("gen", "generate 3D train/test sets and projected 2D views");
    auto* learn = app.add_subcommand("learn", "learn the dictionary pair from the train set");
    auto* lift = app.add_subcommand("lift", "lift a 2D pose file to 3D estimates");
    auto* eval = app.add_subcommand("eval", "score estimates against ground truth");
    auto* bench = app.add_subcommand("bench", "parameter/noise sweeps and method comparison");

    CLI11_PARSE(app, argc, argv);
    seed_set = seed_opt->count() > 0;
    if (seed_set) opts.seed = seed_value;
    if (out_opt->count() > 0) opts.out_dir = out_dir_value;

    try {
        const sdm::pipeline::Config cfg = sdm::pipeline::load_config(config_path, opts);
        if (gen->parsed()) return sdm::pipeline::cmd_gen(cfg, opts);
        if (learn->parsed()) return sdm::pipeline::cmd_learn(cfg, opts);
        if (lift->parsed()) return sdm::pipeline::cmd_lift(cfg, opts);
        if (eval->parsed()) return sdm::pipeline::cmd_eval(cfg, opts);
        if (bench->parsed()) return sdm::pipeline::cmd_bench(cfg, opts);
    } catch (const sdm::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
