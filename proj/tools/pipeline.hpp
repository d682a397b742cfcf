#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sdm/dictionary_learning.hpp"
#include "sdm/solver.hpp"
#include "sdm/synthetic.hpp"

// Config-driven pipeline behind the CLI subcommands. One JSON config file
// describes an experiment; sections: data, learn, solve, eval, bench.
// CLI flags override config keys; SDM_OUT_DIR overrides data.out_dir only.

namespace sdm::pipeline {

struct FamilyConfig {
    std::string name;
    std::string archetype = "stand";
    int count = 0;
    std::uint64_t seed = 0;
    double amp_lo = 0.0;
    double amp_hi = 250.0;
    double amp_power = 1.0;
    double yaw_lo = 0.0;
    double yaw_hi = 0.0;
    std::vector<DeformAxis> custom_axes;  // overrides the default bend basis when nonempty

    FamilySpec to_spec() const;
};

struct DataConfig {
    std::filesystem::path out_dir = "out";
    int views = 4;
    std::vector<double> noise_sigmas = {0.0};
    std::uint64_t noise_seed = 1234;
    std::vector<FamilyConfig> train;
    std::vector<FamilyConfig> test;
};

struct LearnSection {
    DictLearnConfig cfg;
    std::string mode = "joint";  // "joint" or "single" (SR-style sparse-only)
    std::string input = "train_3d.poses";
    std::string output = "dictionary.sdmdict";
};

struct SolveSection {
    SolverConfig cfg;
    std::string method = "sdm";  // "sdm" or "sr"
    double unit_scale = 0.01;    // mm -> solver units (0.01: decimeters)
    std::string camera_init = "identity";  // "identity" or "view"
    double view_yaw_offset = 0.0;          // radians added to the view azimuth init
    std::string input = "test_2d_sigma0.poses";
    std::string dictionary = "dictionary.sdmdict";
    std::string output = "estimated_3d.poses";
    std::string report = "lift_report.csv";
};

struct EvalSection {
    std::string estimated = "estimated_3d.poses";
    std::string ground_truth = "test_3d.poses";
    std::string output = "results.csv";
    std::string method_label;
    bool joint_breakdown = true;
    std::string breakdown_output = "joint_breakdown.csv";
};

struct SweepSection {
    std::vector<double> grid;
    double sigma = 5.0;  // 2D noise level for the alpha/beta sweeps, mm
    // optional JSON override blobs applied on top of learn/solve sections
    std::string learn_override;  // serialized json objects; empty = none
    std::string solve_override;
};

struct BenchSection {
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    SweepSection alpha_sweep;
    SweepSection beta_sweep;
    SweepSection noise_sweep;
    double compare_sigma = 0.0;
    double cdf_max_mm = 200.0;
    double cdf_step_mm = 10.0;
};

struct Config {
    DataConfig data;
    LearnSection learn;
    SolveSection solve;
    EvalSection eval;
    BenchSection bench;
};

struct GlobalOptions {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    int workers = 1;
};

Config load_config(const std::filesystem::path& path, const GlobalOptions& opts);

int cmd_gen(const Config& cfg, const GlobalOptions& opts);
int cmd_learn(const Config& cfg, const GlobalOptions& opts);
int cmd_lift(const Config& cfg, const GlobalOptions& opts);
int cmd_eval(const Config& cfg, const GlobalOptions& opts);
int cmd_bench(const Config& cfg, const GlobalOptions& opts);

}  // namespace sdm::pipeline
