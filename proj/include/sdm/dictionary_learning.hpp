#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "sdm/dictionary.hpp"
#include "sdm/errors.hpp"
#include "sdm/pose.hpp"
#include "sdm/rng.hpp"

namespace sdm {

struct DictLearnConfig {
    double gamma = 0.01;  // sparse weight on C_u
    double eta = 1.0;     // dense weight on C_v
    int k = 16;           // atoms per dictionary
    std::array<double, 4> steps{1.0, 1.0, 1.0, 1.0};  // initial steps: C_u, C_v, B_u*, B_v*
    double tol = 1e-6;    // relative loss-improvement stop over a 10-sweep window
    int max_iter = 1000;
    std::uint64_t seed = 0;
    bool learn_deformation = true;  // false trains a classic single sparse dictionary
};

inline void validate(const DictLearnConfig& cfg) {
    if (!(cfg.gamma >= 0.0) || !(cfg.eta >= 0.0)) throw ConfigError("gamma and eta must be nonnegative");
    if (cfg.k < 1) throw ConfigError("dictionary size k must be >= 1");
    for (double s : cfg.steps) {
        if (!(s > 0.0)) throw ConfigError("step sizes must be positive");
    }
    if (!(cfg.tol > 0.0)) throw ConfigError("tol must be positive");
    if (cfg.max_iter < 0) throw ConfigError("max_iter must be nonnegative");
}

enum class CodeKind { Sparse, Dense };

/// Per-pose coefficient vectors stacked as columns, k x N.
struct CodeMatrix {
    Eigen::MatrixXd columns;
    CodeKind kind = CodeKind::Sparse;
};

struct TrainReport {
    PoseDictionary dict_u;
    PoseDictionary dict_v;
    CodeMatrix codes_u;
    CodeMatrix codes_v;
    std::vector<double> loss_history;  // initial loss, then one entry per sweep
    int iterations = 0;
};

struct LossGradients {
    Eigen::MatrixXd codes_u;  // smooth part only; the gamma term is proximal
    Eigen::MatrixXd codes_v;
    Eigen::MatrixXd dict_u;   // 3P x k, flattened like PoseDictionary::to_matrix
    Eigen::MatrixXd dict_v;
};

namespace detail {

inline Eigen::MatrixXd stack_poses(const std::vector<Pose3D>& poses) {
    if (poses.empty()) throw EmptyTrainingSet("no training poses");
    const Eigen::Index p = poses.front().joint_count();
    Eigen::MatrixXd d(3 * p, static_cast<Eigen::Index>(poses.size()));
    for (std::size_t m = 0; m < poses.size(); ++m) {
        if (poses[m].joint_count() != p) {
            throw DimensionMismatch("training poses disagree on joint count");
        }
        if (!is_centered(poses[m])) {
            throw NotCentered("training pose " + std::to_string(m) + " is not centered");
        }
        d.col(static_cast<Eigen::Index>(m)) =
            Eigen::Map<const Eigen::VectorXd>(poses[m].joints.data(), 3 * p);
    }
    return d;
}

inline double dictlearn_loss_mats(const Eigen::MatrixXd& d, const Eigen::MatrixXd& bu,
                                  const Eigen::MatrixXd& bv, const Eigen::MatrixXd& cu,
                                  const Eigen::MatrixXd& cv, double gamma, double eta) {
    const Eigen::MatrixXd residual = d - bu * cu - bv * cv;
    return 0.5 * residual.squaredNorm() + gamma * cu.cwiseAbs().sum() + eta * cv.squaredNorm();
}

// Projects every column (a flattened 3xP atom) onto the feasible set:
// centered, Frobenius norm <= 1.
inline Eigen::MatrixXd project_dict_matrix(const Eigen::MatrixXd& b, Eigen::Index p) {
    Eigen::MatrixXd out(b.rows(), b.cols());
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
        Pose3D atom(Eigen::Map<const Eigen::Matrix3Xd>(b.col(j).data(), 3, p));
        const Pose3D projected = project_atom(atom);
        out.col(j) = Eigen::Map<const Eigen::VectorXd>(projected.joints.data(), 3 * p);
    }
    return out;
}

inline PoseDictionary dictionary_from_matrix(const Eigen::MatrixXd& b, Eigen::Index p,
                                             DictionaryKind kind) {
    PoseDictionary d;
    d.kind = kind;
    d.atoms.reserve(static_cast<std::size_t>(b.cols()));
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
        d.atoms.emplace_back(Eigen::Matrix3Xd(Eigen::Map<const Eigen::Matrix3Xd>(b.col(j).data(), 3, p)));
    }
    return d;
}

}  // namespace detail

/// Eq. 15 evaluated exactly:
/// Σ_m ½‖D_m − Σ_j(B_uj c_ujm + B_vj c_vjm)‖² + γ‖C_u‖₁ + η‖C_v‖₂².
inline double dictlearn_loss(const std::vector<Pose3D>& train, const PoseDictionary& dict_u,
                             const PoseDictionary& dict_v, const CodeMatrix& codes_u,
                             const CodeMatrix& codes_v, const DictLearnConfig& cfg) {
    const Eigen::MatrixXd d = detail::stack_poses(train);
    const Eigen::MatrixXd bu = dict_u.to_matrix();
    const Eigen::MatrixXd bv = dict_v.to_matrix();
    if (bu.rows() != d.rows() || bv.rows() != d.rows()) {
        throw DimensionMismatch("dictionary joint count differs from training poses");
    }
    if (codes_u.columns.rows() != bu.cols() || codes_v.columns.rows() != bv.cols() ||
        codes_u.columns.cols() != d.cols() || codes_v.columns.cols() != d.cols()) {
        throw DimensionMismatch("code matrix shape mismatch");
    }
    return detail::dictlearn_loss_mats(d, bu, bv, codes_u.columns, codes_v.columns, cfg.gamma,
                                       cfg.eta);
}

/// Gradients of the smooth part of Eq. 15 with respect to each block.
inline LossGradients loss_gradients(const std::vector<Pose3D>& train, const PoseDictionary& dict_u,
                                    const PoseDictionary& dict_v, const CodeMatrix& codes_u,
                                    const CodeMatrix& codes_v, const DictLearnConfig& cfg) {
    const Eigen::MatrixXd d = detail::stack_poses(train);
    const Eigen::MatrixXd bu = dict_u.to_matrix();
    const Eigen::MatrixXd bv = dict_v.to_matrix();
    const Eigen::MatrixXd residual = d - bu * codes_u.columns - bv * codes_v.columns;
    LossGradients g;
    g.codes_u = -bu.transpose() * residual;
    g.codes_v = -bv.transpose() * residual + 2.0 * cfg.eta * codes_v.columns;
    g.dict_u = -residual * codes_u.columns.transpose();
    g.dict_v = -residual * codes_v.columns.transpose();
    return g;
}

/// Joint projected-gradient learning of both dictionaries (Algorithm 2 shape):
/// per sweep, proximal step on C_u, gradient steps on C_v, B_u*, B_v*, each
/// with backtracking so the loss never increases. Initialization is
/// data-seeded for the global atoms and near-zero noise for the deformation
/// atoms.
inline TrainReport learn_dictionaries(const std::vector<Pose3D>& train,
                                      const DictLearnConfig& cfg) {
    validate(cfg);
    const Eigen::MatrixXd d = detail::stack_poses(train);
    const Eigen::Index p = train.front().joint_count();
    const Eigen::Index n = d.cols();
    const Eigen::Index k = cfg.k;

    Rng rng(cfg.seed);

    // Global atoms: k training poses sampled without replacement (all of them
    // plus noise fills when k > N), centered and projected.
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    for (Eigen::Index i = n - 1; i > 0; --i) {
        const auto j = static_cast<Eigen::Index>(rng.next_u64() % static_cast<std::uint64_t>(i + 1));
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
    Eigen::MatrixXd bu(3 * p, k);
    const Eigen::Index sampled = std::min(n, k);
    for (Eigen::Index j = 0; j < sampled; ++j) bu.col(j) = d.col(order[static_cast<std::size_t>(j)]);
    bu.leftCols(sampled) = detail::project_dict_matrix(bu.leftCols(sampled), p);

    std::vector<double> norms;
    norms.reserve(static_cast<std::size_t>(sampled));
    for (Eigen::Index j = 0; j < sampled; ++j) norms.push_back(bu.col(j).norm());
    std::sort(norms.begin(), norms.end());
    const double median_norm = norms[norms.size() / 2];
    const double sigma = 0.01 * median_norm;

    for (Eigen::Index j = sampled; j < k; ++j) {
        for (Eigen::Index i = 0; i < bu.rows(); ++i) bu(i, j) = sigma * rng.gaussian();
    }
    if (sampled < k) bu = detail::project_dict_matrix(bu, p);

    // Deformation atoms: normalized deviations of sampled training poses from
    // the training mean. These are actual deformation directions at full
    // norm, which the dense coding path needs to engage at all (near-zero
    // atoms never accumulate code mass against the eta pull).
    Eigen::MatrixXd bv(3 * p, k);
    const Eigen::VectorXd mean_pose = d.rowwise().mean();
    for (Eigen::Index j = 0; j < k; ++j) {
        const auto pick = static_cast<Eigen::Index>(rng.next_u64() % static_cast<std::uint64_t>(n));
        Eigen::VectorXd deviation = d.col(pick) - mean_pose;
        if (deviation.norm() > 1e-9) {
            bv.col(j) = deviation / deviation.norm();
        } else {
            for (Eigen::Index i = 0; i < bv.rows(); ++i) bv(i, j) = sigma * rng.gaussian();
        }
    }
    bv = detail::project_dict_matrix(bv, p);

    Eigen::MatrixXd cu = Eigen::MatrixXd::Zero(k, n);
    Eigen::MatrixXd cv = Eigen::MatrixXd::Zero(k, n);

    const auto loss = [&](const Eigen::MatrixXd& bu_, const Eigen::MatrixXd& bv_,
                          const Eigen::MatrixXd& cu_, const Eigen::MatrixXd& cv_) {
        return detail::dictlearn_loss_mats(d, bu_, bv_, cu_, cv_, cfg.gamma, cfg.eta);
    };

    TrainReport report;
    double current = loss(bu, bv, cu, cv);
    report.loss_history.push_back(current);

    std::array<double, 4> step = cfg.steps;
    constexpr int max_halvings = 30;

    // Backtracking acceptance for one block: tries the candidate at the
    // block's current step, halving until the loss does not increase. The
    // accepted step seeds the next sweep (grown slightly to re-probe).
    const auto backtrack = [&](int which, auto&& candidate_at) {
        double s = step[static_cast<std::size_t>(which)];
        for (int h = 0; h <= max_halvings; ++h) {
            const double cand_loss = candidate_at(s);
            if (cand_loss <= current) {
                current = cand_loss;
                step[static_cast<std::size_t>(which)] = s * 1.5;
                return true;
            }
            s *= 0.5;
        }
        step[static_cast<std::size_t>(which)] = s;
        return false;  // block skipped this sweep
    };

    for (int it = 0; it < cfg.max_iter; ++it) {
        {  // C_u: proximal gradient (soft threshold at gamma * step).
            const Eigen::MatrixXd grad = -bu.transpose() * (d - bu * cu - bv * cv);
            Eigen::MatrixXd accepted;
            const bool ok = backtrack(0, [&](double s) {
                Eigen::MatrixXd cand = (cu - s * grad).unaryExpr([&](double v) {
                    const double mag = std::abs(v) - cfg.gamma * s;
                    return mag > 0.0 ? (v < 0.0 ? -mag : mag) : 0.0;
                });
                const double l = loss(bu, bv, cand, cv);
                if (l <= current) accepted = std::move(cand);
                return l;
            });
            if (ok) cu = std::move(accepted);
        }
        if (cfg.learn_deformation) {  // C_v: plain gradient step.
            const Eigen::MatrixXd grad = -bv.transpose() * (d - bu * cu - bv * cv) + 2.0 * cfg.eta * cv;
            Eigen::MatrixXd accepted;
            const bool ok = backtrack(1, [&](double s) {
                Eigen::MatrixXd cand = cv - s * grad;
                const double l = loss(bu, bv, cu, cand);
                if (l <= current) accepted = std::move(cand);
                return l;
            });
            if (ok) cv = std::move(accepted);
        }
        {  // B_u*: projected gradient step.
            const Eigen::MatrixXd grad = -(d - bu * cu - bv * cv) * cu.transpose();
            Eigen::MatrixXd accepted;
            const bool ok = backtrack(2, [&](double s) {
                Eigen::MatrixXd cand = detail::project_dict_matrix(bu - s * grad, p);
                const double l = loss(cand, bv, cu, cv);
                if (l <= current) accepted = std::move(cand);
                return l;
            });
            if (ok) bu = std::move(accepted);
        }
        if (cfg.learn_deformation) {  // B_v*: projected gradient step.
            const Eigen::MatrixXd grad = -(d - bu * cu - bv * cv) * cv.transpose();
            Eigen::MatrixXd accepted;
            const bool ok = backtrack(3, [&](double s) {
                Eigen::MatrixXd cand = detail::project_dict_matrix(bv - s * grad, p);
                const double l = loss(bu, cand, cu, cv);
                if (l <= current) accepted = std::move(cand);
                return l;
            });
            if (ok) bv = std::move(accepted);
        }

        report.loss_history.push_back(current);
        ++report.iterations;

        // Stop when the trailing window shows no relative progress.
        constexpr int window = 10;
        const auto& hist = report.loss_history;
        if (report.iterations >= window) {
            const double before = hist[hist.size() - 1 - window];
            const double now = hist.back();
            if (before - now < cfg.tol * std::max(1.0, std::abs(before))) break;
        }
    }

    report.dict_u = detail::dictionary_from_matrix(bu, p, DictionaryKind::GlobalStructure);
    report.dict_v = detail::dictionary_from_matrix(bv, p, DictionaryKind::Deformation);
    report.codes_u = CodeMatrix{std::move(cu), CodeKind::Sparse};
    report.codes_v = CodeMatrix{std::move(cv), CodeKind::Dense};
    return report;
}

}  // namespace sdm
