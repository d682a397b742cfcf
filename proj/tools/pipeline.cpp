#include "pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "sdm/io.hpp"
#include "sdm/metrics.hpp"

namespace sdm::pipeline {

using nlohmann::json;

namespace {

constexpr double kTwoPi = 2.0 * 3.141592653589793238462643383279502884;

// ---- config parsing -----------------------------------------------------

std::string raw_config_text;  // kept for bench section overrides

json parse_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path.string() + "'");
    raw_config_text.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    try {
        return json::parse(raw_config_text);
    } catch (const json::parse_error& e) {
        throw ConfigError("config parse failure: " + std::string(e.what()));
    }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
    }
}

std::vector<DeformAxis> parse_axes(const json& arr) {
    std::vector<DeformAxis> axes;
    for (const auto& a : arr) {
        DeformAxis axis;
        for (const auto& idx : a.at("joints")) axis.joints.push_back(idx.get<int>());
        const auto dir = a.at("direction");
        if (dir.size() != 3) throw ConfigError("axis direction needs 3 components");
        axis.direction = Eigen::Vector3d(dir[0].get<double>(), dir[1].get<double>(), dir[2].get<double>());
        const auto amp = a.at("amplitude");
        if (amp.size() != 2) throw ConfigError("axis amplitude needs [lo, hi]");
        axis.amp_lo = amp[0].get<double>();
        axis.amp_hi = amp[1].get<double>();
        axes.push_back(std::move(axis));
    }
    return axes;
}

FamilyConfig parse_family(const json& j) {
    FamilyConfig f;
    f.name = get_or<std::string>(j, "name", "");
    f.archetype = get_or<std::string>(j, "archetype", f.name.empty() ? "stand" : f.name);
    if (f.name.empty()) f.name = f.archetype;
    f.count = get_or<int>(j, "count", 0);
    f.seed = get_or<std::uint64_t>(j, "seed", 0);
    if (j.contains("amplitude")) {
        const auto amp = j.at("amplitude");
        if (amp.size() != 2) throw ConfigError("family amplitude needs [lo, hi]");
        f.amp_lo = amp[0].get<double>();
        f.amp_hi = amp[1].get<double>();
    }
    f.amp_power = get_or<double>(j, "amp_power", 1.0);
    if (j.contains("yaw")) {
        const auto yaw = j.at("yaw");
        if (yaw.is_number()) {
            f.yaw_lo = f.yaw_hi = yaw.get<double>();
        } else if (yaw.size() == 2) {
            f.yaw_lo = yaw[0].get<double>();
            f.yaw_hi = yaw[1].get<double>();
        } else {
            throw ConfigError("family yaw must be a number or [lo, hi]");
        }
    }
    if (j.contains("axes")) f.custom_axes = parse_axes(j.at("axes"));
    return f;
}

LearnSection parse_learn(const json& j) {
    LearnSection s;
    s.cfg.gamma = get_or<double>(j, "gamma", s.cfg.gamma);
    s.cfg.eta = get_or<double>(j, "eta", s.cfg.eta);
    s.cfg.k = get_or<int>(j, "k", s.cfg.k);
    if (j.contains("steps")) {
        const auto steps = j.at("steps");
        if (steps.size() != 4) throw ConfigError("learn.steps needs 4 values");
        for (int i = 0; i < 4; ++i) s.cfg.steps[static_cast<std::size_t>(i)] = steps[i].get<double>();
    }
    s.cfg.tol = get_or<double>(j, "tol", s.cfg.tol);
    s.cfg.max_iter = get_or<int>(j, "max_iter", s.cfg.max_iter);
    s.cfg.seed = get_or<std::uint64_t>(j, "seed", s.cfg.seed);
    s.mode = get_or<std::string>(j, "mode", s.mode);
    if (s.mode != "joint" && s.mode != "single") throw ConfigError("learn.mode must be joint or single");
    s.cfg.learn_deformation = s.mode == "joint";
    s.input = get_or<std::string>(j, "input", s.input);
    s.output = get_or<std::string>(j, "output", s.output);
    return s;
}

SolveSection parse_solve(const json& j) {
    SolveSection s;
    s.cfg.alpha = get_or<double>(j, "alpha", s.cfg.alpha);
    s.cfg.beta = get_or<double>(j, "beta", s.cfg.beta);
    s.cfg.tol = get_or<double>(j, "tol", s.cfg.tol);
    s.cfg.max_iter = get_or<int>(j, "max_iter", s.cfg.max_iter);
    s.cfg.apg_iters = get_or<int>(j, "apg_iters", s.cfg.apg_iters);
    s.cfg.apg_tol = get_or<double>(j, "apg_tol", s.cfg.apg_tol);
    s.cfg.cv_warmup_sweeps = get_or<int>(j, "cv_warmup", s.cfg.cv_warmup_sweeps);
    s.cfg.fix_camera = get_or<bool>(j, "fix_camera", s.cfg.fix_camera);
    s.method = get_or<std::string>(j, "method", s.method);
    if (s.method != "sdm" && s.method != "sr") throw ConfigError("solve.method must be sdm or sr");
    s.unit_scale = get_or<double>(j, "unit_scale", s.unit_scale);
    if (!(s.unit_scale > 0.0)) throw ConfigError("solve.unit_scale must be positive");
    s.camera_init = get_or<std::string>(j, "camera_init", s.camera_init);
    if (s.camera_init != "identity" && s.camera_init != "view") {
        throw ConfigError("solve.camera_init must be identity or view");
    }
    s.view_yaw_offset = get_or<double>(j, "view_yaw_offset", s.view_yaw_offset);
    s.input = get_or<std::string>(j, "input", s.input);
    s.dictionary = get_or<std::string>(j, "dictionary", s.dictionary);
    s.output = get_or<std::string>(j, "output", s.output);
    s.report = get_or<std::string>(j, "report", s.report);
    return s;
}

SweepSection parse_sweep(const json& j) {
    SweepSection s;
    if (j.contains("grid")) s.grid = j.at("grid").get<std::vector<double>>();
    s.sigma = get_or<double>(j, "sigma", s.sigma);
    if (j.contains("learn")) s.learn_override = j.at("learn").dump();
    if (j.contains("solve")) s.solve_override = j.at("solve").dump();
    return s;
}

// ---- shared pipeline pieces ---------------------------------------------

CameraMatrix azimuth_camera(double azimuth) {
    Eigen::Matrix3d rot;
    rot << std::cos(azimuth), 0, std::sin(azimuth), 0, 1, 0, -std::sin(azimuth), 0, std::cos(azimuth);
    return CameraMatrix::from_scale_rotation(1.0, rot);
}

Pose3D scaled(const Pose3D& p, double s) { return Pose3D(s * p.joints); }
Pose2D scaled(const Pose2D& p, double s) { return Pose2D(s * p.joints); }

struct Dictionaries {
    PoseDictionary dict_u;
    PoseDictionary dict_v;
};

// One lift: center, rescale to solver units, run the configured method,
// rescale the estimate back to data units (mm).
SolveReport lift_pose(const Pose2D& x_mm, const Dictionaries& dicts, const SolveSection& sv,
                      std::optional<int> view_index, int n_views) {
    const Pose2D centered = center_pose2d(x_mm).first;
    const Pose2D x = scaled(centered, sv.unit_scale);
    std::optional<std::pair<CameraMatrix, Codes>> init;
    if (sv.camera_init == "view") {
        if (!view_index) throw ConfigError("camera_init=view needs view-indexed input ids");
        const double az = kTwoPi * *view_index / std::max(1, n_views) + sv.view_yaw_offset;
        Codes zero{Eigen::VectorXd::Zero(dicts.dict_u.size()),
                   Eigen::VectorXd::Zero(dicts.dict_v.size())};
        init = {azimuth_camera(az), std::move(zero)};
    }
    SolveReport report = sv.method == "sr"
        ? solve_sr_baseline(x, dicts.dict_u, sv.cfg.alpha, sv.cfg, init)
        : solve_sdm(x, dicts.dict_u, dicts.dict_v, sv.cfg, init);
    report.pose = scaled(report.pose, 1.0 / sv.unit_scale);
    return report;
}

void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
    if (workers <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    const int count = std::min(workers, n);
    pool.reserve(static_cast<std::size_t>(count));
    for (int t = 0; t < count; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

std::string sigma_file_name(double sigma) {
    return "test_2d_sigma" + detail::format_double(sigma) + ".poses";
}

// id conventions: 3D records "<family>:<index>", 2D records
// "<family>:<index>:v<view>".
std::string strip_view_suffix(const std::string& id) {
    const auto pos = id.rfind(":v");
    return pos == std::string::npos ? id : id.substr(0, pos);
}

std::optional<int> view_of_id(const std::string& id) {
    const auto pos = id.rfind(":v");
    if (pos == std::string::npos) return std::nullopt;
    try {
        return std::stoi(id.substr(pos + 2));
    } catch (...) {
        return std::nullopt;
    }
}

std::string category_of_id(const std::string& id) {
    const auto pos = id.find(':');
    return pos == std::string::npos ? id : id.substr(0, pos);
}

std::string format_mm(double v) { return detail::format_double(v); }

Dictionaries load_dictionaries(const std::filesystem::path& path) {
    auto [du, dv] = read_dictionary(path);
    return {std::move(du), std::move(dv)};
}

std::filesystem::path resolve_out_dir(const Config& cfg) { return cfg.data.out_dir; }

}  // namespace

FamilySpec FamilyConfig::to_spec() const {
    FamilySpec spec;
    spec.name = name;
    spec.base = sdm::archetype(archetype);
    spec.axes = custom_axes.empty() ? default_deform_axes() : custom_axes;
    if (custom_axes.empty()) {
        for (auto& axis : spec.axes) {
            axis.amp_lo = amp_lo;
            axis.amp_hi = amp_hi;
        }
    }
    spec.count = count;
    spec.seed = seed;
    spec.yaw_lo = yaw_lo;
    spec.yaw_hi = yaw_hi;
    spec.amp_power = amp_power;
    return spec;
}

Config load_config(const std::filesystem::path& path, const GlobalOptions& opts) {
    const json j = parse_file(path);
    Config cfg;
    if (j.contains("data")) {
        const json& d = j.at("data");
        cfg.data.out_dir = get_or<std::string>(d, "out_dir", cfg.data.out_dir.string());
        cfg.data.views = get_or<int>(d, "views", cfg.data.views);
        if (cfg.data.views < 1) throw ConfigError("data.views must be >= 1");
        cfg.data.noise_sigmas = get_or<std::vector<double>>(d, "noise_sigmas", cfg.data.noise_sigmas);
        cfg.data.noise_seed = get_or<std::uint64_t>(d, "noise_seed", cfg.data.noise_seed);
        if (d.contains("train")) {
            for (const auto& f : d.at("train")) cfg.data.train.push_back(parse_family(f));
        }
        if (d.contains("test")) {
            for (const auto& f : d.at("test")) cfg.data.test.push_back(parse_family(f));
        }
    }
    if (j.contains("learn")) cfg.learn = parse_learn(j.at("learn"));
    if (j.contains("solve")) cfg.solve = parse_solve(j.at("solve"));
    if (j.contains("eval")) {
        const json& e = j.at("eval");
        cfg.eval.estimated = get_or<std::string>(e, "estimated", cfg.eval.estimated);
        cfg.eval.ground_truth = get_or<std::string>(e, "ground_truth", cfg.eval.ground_truth);
        cfg.eval.output = get_or<std::string>(e, "output", cfg.eval.output);
        cfg.eval.method_label = get_or<std::string>(e, "method_label", cfg.eval.method_label);
        cfg.eval.joint_breakdown = get_or<bool>(e, "joint_breakdown", cfg.eval.joint_breakdown);
        cfg.eval.breakdown_output = get_or<std::string>(e, "breakdown_output", cfg.eval.breakdown_output);
    }
    if (j.contains("bench")) {
        const json& b = j.at("bench");
        cfg.bench.seeds = get_or<std::vector<std::uint64_t>>(b, "seeds", cfg.bench.seeds);
        if (b.contains("alpha_sweep")) cfg.bench.alpha_sweep = parse_sweep(b.at("alpha_sweep"));
        if (b.contains("beta_sweep")) cfg.bench.beta_sweep = parse_sweep(b.at("beta_sweep"));
        if (b.contains("noise_sweep")) cfg.bench.noise_sweep = parse_sweep(b.at("noise_sweep"));
        cfg.bench.compare_sigma = get_or<double>(b, "compare_sigma", cfg.bench.compare_sigma);
        cfg.bench.cdf_max_mm = get_or<double>(b, "cdf_max_mm", cfg.bench.cdf_max_mm);
        cfg.bench.cdf_step_mm = get_or<double>(b, "cdf_step_mm", cfg.bench.cdf_step_mm);
    }
    if (cfg.eval.method_label.empty()) cfg.eval.method_label = cfg.solve.method;

    // precedence for the output directory: flag > env > config
    if (const char* env = std::getenv("SDM_OUT_DIR"); env && *env) cfg.data.out_dir = env;
    if (opts.out_dir) cfg.data.out_dir = *opts.out_dir;
    if (opts.seed) {
        // --seed reseeds generation and learning together
        for (std::size_t i = 0; i < cfg.data.train.size(); ++i) {
            cfg.data.train[i].seed = Rng::mix(*opts.seed, i);
        }
        for (std::size_t i = 0; i < cfg.data.test.size(); ++i) {
            cfg.data.test[i].seed = Rng::mix(*opts.seed, 1000 + i);
        }
        cfg.data.noise_seed = Rng::mix(*opts.seed, 2000);
        cfg.learn.cfg.seed = *opts.seed;
    }
    return cfg;
}

int cmd_gen(const Config& cfg, const GlobalOptions&) {
    const auto out = resolve_out_dir(cfg);
    std::error_code ec;
    std::filesystem::create_directories(out, ec);
    if (ec) throw IoError("cannot create '" + out.string() + "': " + ec.message());
    if (cfg.data.train.empty() && cfg.data.test.empty()) {
        throw ConfigError("data.train and data.test are both empty");
    }

    std::vector<Pose3D> train;
    std::vector<std::string> train_ids;
    for (const FamilyConfig& f : cfg.data.train) {
        const auto poses = generate_family(f.to_spec());
        for (std::size_t i = 0; i < poses.size(); ++i) {
            train.push_back(poses[i]);
            train_ids.push_back(f.name + ":" + std::to_string(i));
        }
    }
    write_poses3(out / "train_3d.poses", train, &train_ids);

    std::vector<Pose3D> test;
    std::vector<std::string> test_ids;
    for (const FamilyConfig& f : cfg.data.test) {
        const auto poses = generate_family(f.to_spec());
        for (std::size_t i = 0; i < poses.size(); ++i) {
            test.push_back(poses[i]);
            test_ids.push_back(f.name + ":" + std::to_string(i));
        }
    }
    write_poses3(out / "test_3d.poses", test, &test_ids);

    std::size_t total_2d = 0;
    for (std::size_t si = 0; si < cfg.data.noise_sigmas.size(); ++si) {
        const double sigma = cfg.data.noise_sigmas[si];
        std::vector<Pose2D> views;
        std::vector<std::string> ids;
        std::uint64_t record = 0;
        for (std::size_t i = 0; i < test.size(); ++i) {
            const auto projected = orbit_project(test[i], cfg.data.views);
            for (int v = 0; v < cfg.data.views; ++v) {
                const NoiseSpec noise{sigma, Rng::mix(Rng::mix(cfg.data.noise_seed, si), record)};
                views.push_back(add_noise(projected[static_cast<std::size_t>(v)], noise));
                ids.push_back(test_ids[i] + ":v" + std::to_string(v));
                ++record;
            }
        }
        write_poses2(out / sigma_file_name(sigma), views, &ids);
        total_2d += views.size();
    }

    std::cout << "gen: " << train.size() << " train 3D, " << test.size() << " test 3D, "
              << total_2d << " test 2D records across " << cfg.data.noise_sigmas.size()
              << " noise level(s) -> " << out.string() << "\n";
    return 0;
}

int cmd_learn(const Config& cfg, const GlobalOptions&) {
    const auto out = resolve_out_dir(cfg);
    auto [train_mm, ids] = read_poses3_with_ids(out / cfg.learn.input);
    if (train_mm.empty()) throw EmptyTrainingSet("'" + cfg.learn.input + "' has no poses");
    if (static_cast<int>(train_mm.size()) < cfg.learn.cfg.k) {
        std::cerr << "warning: training set smaller than dictionary size ("
                  << train_mm.size() << " < " << cfg.learn.cfg.k << ")\n";
    }
    std::vector<Pose3D> train;
    train.reserve(train_mm.size());
    for (const auto& p : train_mm) train.push_back(scaled(p, cfg.solve.unit_scale));

    const TrainReport report = learn_dictionaries(train, cfg.learn.cfg);
    std::string meta = "mode=" + cfg.learn.mode + " gamma=" + detail::format_double(cfg.learn.cfg.gamma) +
                       " eta=" + detail::format_double(cfg.learn.cfg.eta) +
                       " k=" + std::to_string(cfg.learn.cfg.k) +
                       " seed=" + std::to_string(cfg.learn.cfg.seed) +
                       " unit_scale=" + detail::format_double(cfg.solve.unit_scale) +
                       " iterations=" + std::to_string(report.iterations);
    write_dictionary(out / cfg.learn.output, report.dict_u, report.dict_v, meta);
    std::cout << "learn: " << report.iterations << " iterations, loss "
              << report.loss_history.front() << " -> " << report.loss_history.back()
              << ", dictionaries (k=" << cfg.learn.cfg.k << ") -> "
              << (out / cfg.learn.output).string() << "\n";
    return 0;
}

int cmd_lift(const Config& cfg, const GlobalOptions& opts) {
    const auto out = resolve_out_dir(cfg);
    const Dictionaries dicts = load_dictionaries(out / cfg.solve.dictionary);
    auto [inputs, ids] = read_poses2_with_ids(out / cfg.solve.input);
    if (!inputs.empty() && dicts.dict_u.joint_count() != inputs.front().joint_count()) {
        throw DimensionMismatch("dictionary joint count differs from 2D inputs");
    }

    const int n = static_cast<int>(inputs.size());
    std::vector<SolveReport> reports(static_cast<std::size_t>(n));
    parallel_for(n, opts.workers, [&](int i) {
        const auto idx = static_cast<std::size_t>(i);
        reports[idx] = lift_pose(inputs[idx], dicts, cfg.solve, view_of_id(ids[idx]), cfg.data.views);
    });

    std::vector<Pose3D> estimates;
    estimates.reserve(reports.size());
    for (const auto& r : reports) estimates.push_back(r.pose);
    write_poses3(out / cfg.solve.output, estimates, &ids);

    ResultsTable table;
    table.header = {"id", "method", "iterations", "termination", "stalled", "residual", "objective"};
    int converged = 0;
    for (int i = 0; i < n; ++i) {
        const auto& r = reports[static_cast<std::size_t>(i)];
        converged += r.termination == Termination::Converged;
        table.rows.push_back({ids[static_cast<std::size_t>(i)], cfg.solve.method,
                              std::to_string(r.iterations),
                              r.termination == Termination::Converged ? "converged" : "max_iter",
                              r.stalled ? "1" : "0",
                              format_mm(r.residual_history.empty() ? 0.0 : r.residual_history.back()),
                              format_mm(r.objective_history.empty() ? 0.0 : r.objective_history.back())});
    }
    write_results(out / cfg.solve.report, table);
    std::cout << "lift: " << n << " poses with method " << cfg.solve.method << ", "
              << converged << " converged -> " << (out / cfg.solve.output).string() << "\n";
    return 0;
}

namespace {

struct EvalAccumulator {
    double per_joint_sum = 0.0;
    double estimation_sum = 0.0;
    int count = 0;
};

// Centroid-centered per-joint error: the solver reconstructs centered poses,
// so translation is removed from both sides before Eq. 16.
double centered_per_joint_error(const Pose3D& est, const Pose3D& gt) {
    return per_joint_error(center_pose(est).first, center_pose(gt).first);
}

}  // namespace

int cmd_eval(const Config& cfg, const GlobalOptions&) {
    const auto out = resolve_out_dir(cfg);
    auto [est, est_ids] = read_poses3_with_ids(out / cfg.eval.estimated);
    auto [gt, gt_ids] = read_poses3_with_ids(out / cfg.eval.ground_truth);
    if (est.empty()) throw EmptyBatch("'" + cfg.eval.estimated + "' has no poses");
    std::map<std::string, std::size_t> gt_index;
    for (std::size_t i = 0; i < gt_ids.size(); ++i) gt_index[gt_ids[i]] = i;

    std::map<std::string, EvalAccumulator> by_category;
    EvalAccumulator overall;
    std::vector<std::pair<Pose3D, Pose3D>> pairs;
    for (std::size_t i = 0; i < est.size(); ++i) {
        const std::string gt_id = strip_view_suffix(est_ids[i]);
        const auto it = gt_index.find(gt_id);
        if (it == gt_index.end()) {
            throw DimensionMismatch("no ground-truth pose with id '" + gt_id + "'");
        }
        const Pose3D& truth = gt[it->second];
        const double pj = centered_per_joint_error(est[i], truth);
        const double ee = estimation_error(est[i], truth);
        auto& acc = by_category[category_of_id(est_ids[i])];
        acc.per_joint_sum += pj;
        acc.estimation_sum += ee;
        ++acc.count;
        overall.per_joint_sum += pj;
        overall.estimation_sum += ee;
        ++overall.count;
        pairs.emplace_back(est[i], truth);
    }

    ResultsTable table;
    table.header = {"method", "category", "metric", "value_mm", "count"};
    auto emit = [&](const std::string& category, const EvalAccumulator& acc) {
        table.rows.push_back({cfg.eval.method_label, category, "per_joint_error",
                              format_mm(acc.per_joint_sum / acc.count), std::to_string(acc.count)});
        table.rows.push_back({cfg.eval.method_label, category, "estimation_error",
                              format_mm(acc.estimation_sum / acc.count), std::to_string(acc.count)});
    };
    for (const auto& [category, acc] : by_category) emit(category, acc);
    emit("overall", overall);
    write_results(out / cfg.eval.output, table);

    if (cfg.eval.joint_breakdown) {
        const Eigen::VectorXd breakdown = joint_breakdown(pairs);
        ResultsTable bt;
        bt.header = {"joint", "name", "mean_error_mm"};
        for (Eigen::Index j = 0; j < breakdown.size(); ++j) {
            const std::string name = j < kArchetypeJoints
                ? std::string(joint_names()[static_cast<std::size_t>(j)]) : std::to_string(j);
            bt.rows.push_back({std::to_string(j), name, format_mm(breakdown(j))});
        }
        write_results(out / cfg.eval.breakdown_output, bt);
    }

    std::cout << "eval: " << overall.count << " pairs, mean per-joint "
              << overall.per_joint_sum / overall.count << "mm, mean estimation "
              << overall.estimation_sum / overall.count << "mm -> "
              << (out / cfg.eval.output).string() << "\n";
    return 0;
}

// ---- bench ---------------------------------------------------------------

namespace {

struct BenchData {
    std::vector<Pose3D> train_mm;
    std::vector<Pose3D> test_mm;
    std::vector<std::string> test_categories;
};

BenchData regenerate(const Config& cfg, std::uint64_t seed) {
    BenchData data;
    std::size_t fi = 0;
    for (const FamilyConfig& f : cfg.data.train) {
        FamilyConfig fs = f;
        fs.seed = Rng::mix(seed, fi++);
        for (auto& p : generate_family(fs.to_spec())) data.train_mm.push_back(std::move(p));
    }
    fi = 0;
    for (const FamilyConfig& f : cfg.data.test) {
        FamilyConfig fs = f;
        fs.seed = Rng::mix(seed, 1000 + fi++);
        for (auto& p : generate_family(fs.to_spec())) {
            data.test_mm.push_back(std::move(p));
            data.test_categories.push_back(f.name);
        }
    }
    if (data.train_mm.empty() || data.test_mm.empty()) {
        throw ConfigError("bench needs nonempty data.train and data.test families");
    }
    return data;
}

LearnSection merged_learn(const std::string& override_text) {
    json base = json::parse(raw_config_text).value("learn", json::object());
    if (!override_text.empty()) base.update(json::parse(override_text));
    return parse_learn(base);
}

SolveSection merged_solve(const std::string& override_text) {
    json base = json::parse(raw_config_text).value("solve", json::object());
    if (!override_text.empty()) base.update(json::parse(override_text));
    return parse_solve(base);
}

Dictionaries train_for(const BenchData& data, LearnSection learn, double unit_scale,
                       std::uint64_t seed, bool deformation) {
    std::vector<Pose3D> train;
    train.reserve(data.train_mm.size());
    for (const auto& p : data.train_mm) train.push_back(scaled(p, unit_scale));
    learn.cfg.seed = seed;
    learn.cfg.learn_deformation = deformation;
    const TrainReport report = learn_dictionaries(train, learn.cfg);
    return {report.dict_u, report.dict_v};
}

// Mean estimation error of one method over every (pose, view) of the test
// set at a given 2D noise level.
double sweep_error(const BenchData& data, const Dictionaries& dicts, const SolveSection& sv,
                   const Config& cfg, double sigma, std::uint64_t seed, int workers) {
    struct Instance {
        const Pose3D* gt;
        Pose2D view;
        int view_index;
    };
    std::vector<Instance> instances;
    std::uint64_t record = 0;
    for (const auto& pose : data.test_mm) {
        const auto views = orbit_project(pose, cfg.data.views);
        for (int v = 0; v < cfg.data.views; ++v) {
            const NoiseSpec noise{sigma, Rng::mix(Rng::mix(cfg.data.noise_seed, seed), record++)};
            instances.push_back({&pose, add_noise(views[static_cast<std::size_t>(v)], noise), v});
        }
    }
    std::vector<double> errors(instances.size());
    parallel_for(static_cast<int>(instances.size()), workers, [&](int i) {
        const auto idx = static_cast<std::size_t>(i);
        const SolveReport r = lift_pose(instances[idx].view, dicts, sv,
                                        instances[idx].view_index, cfg.data.views);
        errors[idx] = estimation_error(r.pose, *instances[idx].gt);
    });
    double sum = 0.0;
    for (double e : errors) sum += e;
    return sum / static_cast<double>(errors.size());
}

}  // namespace

int cmd_bench(const Config& cfg, const GlobalOptions& opts) {
    const auto out = resolve_out_dir(cfg);
    std::error_code ec;
    std::filesystem::create_directories(out, ec);
    if (ec) throw IoError("cannot create '" + out.string() + "': " + ec.message());
    if (cfg.bench.seeds.empty()) throw ConfigError("bench.seeds is empty");
    if (cfg.bench.alpha_sweep.grid.empty() || cfg.bench.beta_sweep.grid.empty() ||
        cfg.bench.noise_sweep.grid.empty()) {
        throw ConfigError("bench sweep grids must be nonempty");
    }

    // -- alpha sweep (Fig. 2a analogue) --
    {
        const LearnSection learn = merged_learn(cfg.bench.alpha_sweep.learn_override);
        const SolveSection solve = merged_solve(cfg.bench.alpha_sweep.solve_override);
        std::vector<double> mean(cfg.bench.alpha_sweep.grid.size(), 0.0);
        for (const std::uint64_t seed : cfg.bench.seeds) {
            const BenchData data = regenerate(cfg, seed);
            const Dictionaries dicts = train_for(data, learn, solve.unit_scale, seed, true);
            for (std::size_t gi = 0; gi < cfg.bench.alpha_sweep.grid.size(); ++gi) {
                SolveSection sv = solve;
                sv.method = "sdm";
                sv.cfg.alpha = cfg.bench.alpha_sweep.grid[gi];
                mean[gi] += sweep_error(data, dicts, sv, cfg, cfg.bench.alpha_sweep.sigma, seed, opts.workers);
            }
        }
        ResultsTable t;
        t.header = {"alpha", "mean_estimation_error_mm"};
        for (std::size_t gi = 0; gi < mean.size(); ++gi) {
            t.rows.push_back({format_mm(cfg.bench.alpha_sweep.grid[gi]),
                              format_mm(mean[gi] / cfg.bench.seeds.size())});
        }
        write_results(out / "bench_alpha.csv", t);
        std::cout << "bench: alpha curve -> " << (out / "bench_alpha.csv").string() << "\n";
    }

    // -- beta sweep (Fig. 2b analogue) --
    {
        const LearnSection learn = merged_learn(cfg.bench.beta_sweep.learn_override);
        const SolveSection solve = merged_solve(cfg.bench.beta_sweep.solve_override);
        std::vector<double> mean(cfg.bench.beta_sweep.grid.size(), 0.0);
        for (const std::uint64_t seed : cfg.bench.seeds) {
            const BenchData data = regenerate(cfg, seed);
            const Dictionaries dicts = train_for(data, learn, solve.unit_scale, seed, true);
            for (std::size_t gi = 0; gi < cfg.bench.beta_sweep.grid.size(); ++gi) {
                SolveSection sv = solve;
                sv.method = "sdm";
                sv.cfg.beta = cfg.bench.beta_sweep.grid[gi];
                mean[gi] += sweep_error(data, dicts, sv, cfg, cfg.bench.beta_sweep.sigma, seed, opts.workers);
            }
        }
        ResultsTable t;
        t.header = {"beta", "mean_estimation_error_mm"};
        for (std::size_t gi = 0; gi < mean.size(); ++gi) {
            t.rows.push_back({format_mm(cfg.bench.beta_sweep.grid[gi]),
                              format_mm(mean[gi] / cfg.bench.seeds.size())});
        }
        write_results(out / "bench_beta.csv", t);
        std::cout << "bench: beta curve -> " << (out / "bench_beta.csv").string() << "\n";
    }

    // -- noise sweep, method comparison, error CDF (Fig. 3 analogues) --
    {
        const LearnSection learn = merged_learn(cfg.bench.noise_sweep.learn_override);
        const SolveSection solve = merged_solve(cfg.bench.noise_sweep.solve_override);
        const auto& sigmas = cfg.bench.noise_sweep.grid;
        std::vector<double> sdm_mean(sigmas.size(), 0.0), sr_mean(sigmas.size(), 0.0);
        // per-category accumulation and CDF samples at compare_sigma
        std::map<std::string, EvalAccumulator> sdm_cat, sr_cat;
        std::vector<double> sdm_samples, sr_samples;

        for (const std::uint64_t seed : cfg.bench.seeds) {
            const BenchData data = regenerate(cfg, seed);
            const Dictionaries joint = train_for(data, learn, solve.unit_scale, seed, true);
            const Dictionaries single = train_for(data, learn, solve.unit_scale, seed, false);
            for (std::size_t gi = 0; gi < sigmas.size(); ++gi) {
                SolveSection sdm_sv = solve;
                sdm_sv.method = "sdm";
                SolveSection sr_sv = solve;
                sr_sv.method = "sr";
                sdm_mean[gi] += sweep_error(data, joint, sdm_sv, cfg, sigmas[gi], seed, opts.workers);
                sr_mean[gi] += sweep_error(data, single, sr_sv, cfg, sigmas[gi], seed, opts.workers);
            }
            // comparison + CDF on the same inputs at compare_sigma
            std::uint64_t record = 0;
            for (std::size_t pi = 0; pi < data.test_mm.size(); ++pi) {
                const auto views = orbit_project(data.test_mm[pi], cfg.data.views);
                for (int v = 0; v < cfg.data.views; ++v) {
                    const NoiseSpec noise{cfg.bench.compare_sigma,
                                          Rng::mix(Rng::mix(cfg.data.noise_seed, seed), record++)};
                    const Pose2D x = add_noise(views[static_cast<std::size_t>(v)], noise);
                    SolveSection sdm_sv = solve;
                    sdm_sv.method = "sdm";
                    SolveSection sr_sv = solve;
                    sr_sv.method = "sr";
                    const SolveReport rs = lift_pose(x, joint, sdm_sv, v, cfg.data.views);
                    const SolveReport rr = lift_pose(x, single, sr_sv, v, cfg.data.views);
                    const Pose3D& gt = data.test_mm[pi];
                    const std::string& cat = data.test_categories[pi];
                    const double es = estimation_error(rs.pose, gt);
                    const double er = estimation_error(rr.pose, gt);
                    auto& as = sdm_cat[cat];
                    as.per_joint_sum += centered_per_joint_error(rs.pose, gt);
                    as.estimation_sum += es;
                    ++as.count;
                    auto& ar = sr_cat[cat];
                    ar.per_joint_sum += centered_per_joint_error(rr.pose, gt);
                    ar.estimation_sum += er;
                    ++ar.count;
                    sdm_samples.push_back(es);
                    sr_samples.push_back(er);
                }
            }
        }

        ResultsTable noise;
        noise.header = {"sigma_mm", "method", "mean_estimation_error_mm"};
        for (std::size_t gi = 0; gi < sigmas.size(); ++gi) {
            noise.rows.push_back({format_mm(sigmas[gi]), "sr",
                                  format_mm(sr_mean[gi] / cfg.bench.seeds.size())});
            noise.rows.push_back({format_mm(sigmas[gi]), "sdm",
                                  format_mm(sdm_mean[gi] / cfg.bench.seeds.size())});
        }
        write_results(out / "bench_noise.csv", noise);

        ResultsTable compare;
        compare.header = {"method", "category", "metric", "value_mm", "count"};
        auto emit = [&](const std::string& method, const std::map<std::string, EvalAccumulator>& cats) {
            EvalAccumulator overall;
            for (const auto& [cat, acc] : cats) {
                compare.rows.push_back({method, cat, "per_joint_error",
                                        format_mm(acc.per_joint_sum / acc.count),
                                        std::to_string(acc.count)});
                compare.rows.push_back({method, cat, "estimation_error",
                                        format_mm(acc.estimation_sum / acc.count),
                                        std::to_string(acc.count)});
                overall.per_joint_sum += acc.per_joint_sum;
                overall.estimation_sum += acc.estimation_sum;
                overall.count += acc.count;
            }
            compare.rows.push_back({method, "overall", "per_joint_error",
                                    format_mm(overall.per_joint_sum / overall.count),
                                    std::to_string(overall.count)});
            compare.rows.push_back({method, "overall", "estimation_error",
                                    format_mm(overall.estimation_sum / overall.count),
                                    std::to_string(overall.count)});
        };
        emit("sr", sr_cat);
        emit("sdm", sdm_cat);
        write_results(out / "bench_compare.csv", compare);

        ResultsTable cdf;
        cdf.header = {"threshold_mm", "method", "fraction"};
        std::sort(sdm_samples.begin(), sdm_samples.end());
        std::sort(sr_samples.begin(), sr_samples.end());
        auto fraction_below = [](const std::vector<double>& sorted, double threshold) {
            const auto it = std::lower_bound(sorted.begin(), sorted.end(), threshold);
            return static_cast<double>(it - sorted.begin()) / static_cast<double>(sorted.size());
        };
        for (double threshold = 0.0; threshold <= cfg.bench.cdf_max_mm + 1e-9;
             threshold += cfg.bench.cdf_step_mm) {
            cdf.rows.push_back({format_mm(threshold), "sr", format_mm(fraction_below(sr_samples, threshold))});
            cdf.rows.push_back({format_mm(threshold), "sdm", format_mm(fraction_below(sdm_samples, threshold))});
        }
        write_results(out / "bench_cdf.csv", cdf);
        std::cout << "bench: noise curve, comparison table, error CDF -> " << out.string() << "\n";
    }
    return 0;
}

}  // namespace sdm::pipeline
