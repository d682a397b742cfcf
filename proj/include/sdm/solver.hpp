#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "sdm/camera.hpp"
#include "sdm/dictionary.hpp"
#include "sdm/errors.hpp"
#include "sdm/pose.hpp"

namespace sdm {

struct SolverConfig {
    double alpha = 0.4;     // sparse weight on c_u
    double beta = 20.0;     // dense weight on c_v
    double tol = 1e-6;      // residual-norm stopping threshold
    int max_iter = 10000;   // outer block sweeps
    int apg_iters = 50;     // inner FISTA iterations per sweep
    double apg_tol = 1e-8;  // inner successive-iterate stop
    // Coarse-to-fine schedule: keep c_v at zero for this many initial sweeps
    // so the camera settles against the global structure before the dense
    // block engages. Zero reproduces the plain alternation.
    int cv_warmup_sweeps = 0;
    // Evaluation protocols with a calibrated view pin the camera to the init
    // and skip its block update.
    bool fix_camera = false;
};

inline void validate(const SolverConfig& cfg) {
    if (!(cfg.alpha >= 0.0) || !(cfg.beta >= 0.0)) throw ConfigError("alpha and beta must be nonnegative");
    if (!(cfg.tol > 0.0)) throw ConfigError("solver tol must be positive");
    if (cfg.max_iter < 1) throw ConfigError("solver max_iter must be >= 1");
    if (cfg.apg_iters < 1) throw ConfigError("solver apg_iters must be >= 1");
}

enum class Termination { Converged, MaxIter };

struct SolveReport {
    Pose3D pose;
    CameraMatrix camera;
    Codes codes;
    std::vector<double> objective_history;
    std::vector<double> residual_history;
    int iterations = 0;
    Termination termination = Termination::MaxIter;
    bool stalled = false;  // objective improvement dried up before the residual target
};

/// Elementwise sign(v)·max(|v| − lambda, 0): the proximal operator of
/// lambda·‖·‖₁.
inline Eigen::VectorXd soft_threshold(const Eigen::VectorXd& v, double lambda) {
    return v.unaryExpr([lambda](double x) {
        const double mag = std::abs(x) - lambda;
        return mag > 0.0 ? (x < 0.0 ? -mag : mag) : 0.0;
    });
}

namespace detail {

// Per-sweep flattening: column j of `a_u` is vec(R*·B_uj).
inline Eigen::MatrixXd project_atoms(const CameraMatrix& cam, const Eigen::MatrixXd& dict_mat,
                                     Eigen::Index p) {
    Eigen::MatrixXd a(2 * p, dict_mat.cols());
    for (Eigen::Index j = 0; j < dict_mat.cols(); ++j) {
        const Eigen::Map<const Eigen::Matrix3Xd> atom(dict_mat.col(j).data(), 3, p);
        const Eigen::Matrix2Xd projected = cam.m * atom;
        a.col(j) = Eigen::Map<const Eigen::VectorXd>(projected.data(), 2 * p);
    }
    return a;
}

inline double l1_norm(const Eigen::VectorXd& v) { return v.cwiseAbs().sum(); }

// FISTA on ½‖b − A c‖² + lambda‖c‖₁ starting from c0.
inline Eigen::VectorXd fista(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                             const Eigen::VectorXd& c0, double lambda, int iters, double tol) {
    const double sigma_max = a.jacobiSvd().singularValues()(0);
    const double lip = sigma_max * sigma_max;
    if (lip <= 0.0) {
        return lambda > 0.0 ? Eigen::VectorXd::Zero(c0.size()).eval() : c0;
    }
    Eigen::VectorXd c = c0;
    Eigen::VectorXd y = c0;
    double t = 1.0;
    for (int it = 0; it < iters; ++it) {
        const Eigen::VectorXd grad = a.transpose() * (a * y - b);
        const Eigen::VectorXd c_next = soft_threshold(y - grad / lip, lambda / lip);
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        y = c_next + ((t - 1.0) / t_next) * (c_next - c);
        const double change = (c_next - c).norm();
        c = c_next;
        t = t_next;
        if (change < tol) break;
    }
    return c;
}

struct SolveContext {
    const Pose2D& x;
    Eigen::MatrixXd dict_u_mat;  // 3P x k_u
    Eigen::MatrixXd dict_v_mat;  // 3P x k_v (empty columns in SR mode)
    Eigen::VectorXd x_vec;       // vec(X), 2P
};

}  // namespace detail

/// Eq. 9 evaluated exactly: ½‖X − R*(B_u*c_u + B_v*c_v)‖²_F + α‖c_u‖₁ + β‖c_v‖₂².
inline double objective_sdm(const Pose2D& x, const CameraMatrix& cam, const PoseDictionary& dict_u,
                            const PoseDictionary& dict_v, const Codes& codes,
                            const SolverConfig& cfg) {
    const Pose3D recon = combine(dict_u, dict_v, codes);
    if (x.joint_count() != recon.joint_count()) {
        throw DimensionMismatch("2D observation joint count differs from dictionaries");
    }
    const double data = 0.5 * (x.joints - cam.m * recon.joints).squaredNorm();
    return data + cfg.alpha * detail::l1_norm(codes.c_u) + cfg.beta * codes.c_v.squaredNorm();
}

/// One Eq. 11 block: FISTA for the sparse code, keeping the input c_u if the
/// inner result would increase the block objective.
inline Eigen::VectorXd update_cu(const Pose2D& x, const CameraMatrix& cam,
                                 const PoseDictionary& dict_u, const PoseDictionary& dict_v,
                                 const Codes& codes, const SolverConfig& cfg) {
    const Eigen::Index p = x.joint_count();
    const Eigen::MatrixXd a_u = detail::project_atoms(cam, dict_u.to_matrix(), p);
    const Eigen::MatrixXd a_v = detail::project_atoms(cam, dict_v.to_matrix(), p);
    const Eigen::VectorXd x_vec = Eigen::Map<const Eigen::VectorXd>(x.joints.data(), 2 * p);
    const Eigen::VectorXd b = x_vec - a_v * codes.c_v;

    const Eigen::VectorXd cand =
        detail::fista(a_u, b, codes.c_u, cfg.alpha, cfg.apg_iters, cfg.apg_tol);
    const auto eq11 = [&](const Eigen::VectorXd& c) {
        return 0.5 * (b - a_u * c).squaredNorm() + cfg.alpha * detail::l1_norm(c);
    };
    return eq11(cand) <= eq11(codes.c_u) ? cand : codes.c_u;
}

/// Eq. 13 block: the exact ridge minimizer of Eq. 12,
/// c_v = (ZᵀZ + 2βI)⁻¹ Zᵀ (X − R*·B_u*c_u), Z stacking the projected
/// deformation atoms.
inline Eigen::VectorXd update_cv(const Pose2D& x, const CameraMatrix& cam,
                                 const PoseDictionary& dict_u, const PoseDictionary& dict_v,
                                 const Codes& codes, const SolverConfig& cfg) {
    const Eigen::Index p = x.joint_count();
    const Eigen::MatrixXd z = detail::project_atoms(cam, dict_v.to_matrix(), p);
    const Eigen::MatrixXd a_u = detail::project_atoms(cam, dict_u.to_matrix(), p);
    const Eigen::VectorXd x_vec = Eigen::Map<const Eigen::VectorXd>(x.joints.data(), 2 * p);
    const Eigen::VectorXd rhs = x_vec - a_u * codes.c_u;

    Eigen::MatrixXd normal = z.transpose() * z;
    if (cfg.beta > 0.0) {
        normal.diagonal().array() += 2.0 * cfg.beta;
    } else {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(normal);
        const double largest = eig.eigenvalues().maxCoeff();
        if (largest <= 0.0 || eig.eigenvalues().minCoeff() <= 1e-12 * largest) {
            throw SingularSystem("ZᵀZ is singular and beta is zero");
        }
    }
    return Eigen::LDLT<Eigen::MatrixXd>(normal).solve(z.transpose() * rhs);
}

namespace detail {

inline SolveReport solve_blocks(const Pose2D& x, const PoseDictionary& dict_u,
                                const PoseDictionary& dict_v, const SolverConfig& cfg,
                                const std::optional<std::pair<CameraMatrix, Codes>>& init,
                                bool sr_mode) {
    validate(cfg);
    if (!is_centered(x)) throw NotCentered("solver input 2D pose is not centered");
    if (dict_u.joint_count() != x.joint_count() || dict_v.joint_count() != x.joint_count()) {
        throw DimensionMismatch("dictionary skeleton does not match the 2D input");
    }

    CameraMatrix cam = init ? init->first : CameraMatrix::identity_embedding();
    Codes codes;
    codes.c_u = init ? init->second.c_u : Eigen::VectorXd::Zero(dict_u.size()).eval();
    codes.c_v = init ? init->second.c_v : Eigen::VectorXd::Zero(dict_v.size()).eval();
    if (codes.c_u.size() != dict_u.size() || codes.c_v.size() != dict_v.size()) {
        throw DimensionMismatch("init codes do not match dictionary sizes");
    }

    SolveReport report;
    report.objective_history.reserve(std::min(cfg.max_iter, 1024));
    report.residual_history.reserve(std::min(cfg.max_iter, 1024));

    const auto objective = [&](const CameraMatrix& c, const Codes& cd) {
        return objective_sdm(x, c, dict_u, dict_v, cd, cfg);
    };
    double current = objective(cam, codes);

    double residual_norm = std::numeric_limits<double>::infinity();
    constexpr int stall_window = 20;
    for (int it = 0; it < cfg.max_iter; ++it) {
        // Camera block: exact minimizer of the data term; kept only if the
        // recomputed objective does not increase, so the recorded history is
        // non-increasing as floating-point values.
        if (!cfg.fix_camera) {
            try {
                const Pose3D recon = combine(dict_u, dict_v, codes);
                const CameraMatrix cand = update_camera(x, recon, cam);
                const double val = objective(cand, codes);
                if (val <= current) {
                    cam = cand;
                    current = val;
                }
            } catch (const DegenerateGeometry&) {
                // Reconstruction (still) rank-deficient: keep the previous camera.
            }
        }

        {
            Codes cand = codes;
            cand.c_u = update_cu(x, cam, dict_u, dict_v, codes, cfg);
            const double val = objective(cam, cand);
            if (val <= current) {
                codes = std::move(cand);
                current = val;
            }
        }

        if (!sr_mode && it >= cfg.cv_warmup_sweeps) {
            Codes cand = codes;
            cand.c_v = update_cv(x, cam, dict_u, dict_v, codes, cfg);
            const double val = objective(cam, cand);
            if (val <= current) {
                codes = std::move(cand);
                current = val;
            }
        }

        const Pose3D recon = combine(dict_u, dict_v, codes);
        residual_norm = (x.joints - cam.m * recon.joints).norm();
        report.objective_history.push_back(current);
        report.residual_history.push_back(residual_norm);
        ++report.iterations;

        if (residual_norm <= cfg.tol) break;
        const int n = report.iterations;
        // Stall detection starts once the warmup window is fully behind us.
        if (n > stall_window && (sr_mode || n > cfg.cv_warmup_sweeps + stall_window)) {
            const double before = report.objective_history[n - 1 - stall_window];
            const double now = report.objective_history[n - 1];
            if (before - now < 1e-10 * std::max(1.0, std::abs(before))) {
                report.stalled = true;
                break;
            }
        }
    }

    report.termination =
        residual_norm <= cfg.tol ? Termination::Converged : Termination::MaxIter;
    report.camera = cam;
    report.codes = codes;
    report.pose = combine(dict_u, dict_v, codes);
    return report;
}

}  // namespace detail

/// Block-alternating minimization of Eq. 9: camera, then c_u, then c_v per
/// sweep, until the reprojection residual norm reaches cfg.tol or the sweep
/// budget runs out. Default start is the identity-embedding camera and zero
/// codes.
inline SolveReport solve_sdm(const Pose2D& x, const PoseDictionary& dict_u,
                             const PoseDictionary& dict_v, const SolverConfig& cfg,
                             const std::optional<std::pair<CameraMatrix, Codes>>& init = {}) {
    return detail::solve_blocks(x, dict_u, dict_v, cfg, init, /*sr_mode=*/false);
}

/// Standard sparse-representation baseline (relaxed Lagrangian of Eq. 3):
/// the same loop with the dense block disabled and c_v pinned to zero.
/// `init` mirrors solve_sdm's so comparisons can share a starting camera.
inline SolveReport solve_sr_baseline(const Pose2D& x, const PoseDictionary& dict,
                                     double alpha, const SolverConfig& cfg,
                                     const std::optional<std::pair<CameraMatrix, Codes>>& init = {}) {
    SolverConfig sr_cfg = cfg;
    sr_cfg.alpha = alpha;
    sr_cfg.beta = 0.0;  // no dense term; the block never runs
    return detail::solve_blocks(x, dict, dict, sr_cfg, init, /*sr_mode=*/true);
}

}  // namespace sdm
