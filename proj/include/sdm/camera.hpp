#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "sdm/errors.hpp"
#include "sdm/pose.hpp"

namespace sdm {

/// The merged weak-perspective camera R* = S·R, a 2x3 matrix. Feasible
/// cameras have mutually orthogonal rows of equal norm s (isotropic scale).
struct CameraMatrix {
    Eigen::Matrix<double, 2, 3> m = Eigen::Matrix<double, 2, 3>::Zero();

    static CameraMatrix identity_embedding() {
        CameraMatrix c;
        c.m << 1, 0, 0, 0, 1, 0;
        return c;
    }

    static CameraMatrix from_scale_rotation(double scale, const Eigen::Matrix3d& rotation) {
        CameraMatrix c;
        c.m = scale * rotation.topRows<2>();
        return c;
    }

    double scale() const { return m.norm() / std::sqrt(2.0); }
};

/// X = R*·Y + t·1ᵀ.
inline Pose2D project(const Pose3D& y, const CameraMatrix& cam, const Eigen::Vector2d& t) {
    validate(y);
    Pose2D out((cam.m * y.joints).colwise() + t);
    return out;
}

namespace detail {

// The camera block solves, for G = WWᵀ and M = XWᵀ,
//   max over R in SO(3) of  h(R) = <M, ER>² / tr(ERG(ER)ᵀ),   E = [I2 | 0],
// which is the profile of ½‖X − sQW‖² after minimizing the scale s >= 0 for
// each row-orthonormal Q = ER. The ratio is smooth and low-degree in R, so a
// coarse deterministic Euler grid finds every basin and a Newton polish
// finishes each candidate off.
struct CameraObjective {
    Eigen::Matrix<double, 2, 3> m;  // X Wᵀ
    Eigen::Matrix3d g;              // W Wᵀ

    double numerator(const Eigen::Matrix3d& r) const {
        return m.row(0).dot(r.row(0)) + m.row(1).dot(r.row(1));
    }

    double denominator(const Eigen::Matrix3d& r) const {
        return r.row(0).dot(g * r.row(0).transpose()) + r.row(1).dot(g * r.row(1).transpose());
    }

    double value(const Eigen::Matrix3d& r) const {
        const double den = denominator(r);
        if (den <= 0.0) return 0.0;
        const double num = numerator(r);
        return num * num / den;
    }

    // Gradient in so(3) under the left perturbation R <- exp([w]x) R.
    Eigen::Vector3d gradient(const Eigen::Matrix3d& r) const {
        const double den = denominator(r);
        if (den <= 0.0) return Eigen::Vector3d::Zero();
        const double num = numerator(r);
        Eigen::Matrix3d mt = Eigen::Matrix3d::Zero();
        mt.topRows<2>() = m;  // Eᵀ M
        const Eigen::Matrix3d a = r * mt.transpose();   // d num = <[w]x, tr(.)> terms
        Eigen::Matrix3d p = Eigen::Matrix3d::Zero();
        p(0, 0) = 1.0;
        p(1, 1) = 1.0;
        const Eigen::Matrix3d k = r * g * r.transpose();
        const Eigen::Matrix3d b = k * p - p * k;        // d den
        auto axial = [](const Eigen::Matrix3d& x) {
            return Eigen::Vector3d(x(1, 2) - x(2, 1), x(2, 0) - x(0, 2), x(0, 1) - x(1, 0));
        };
        const Eigen::Vector3d dn = axial(a);
        const Eigen::Vector3d dd = axial(b);
        return (2.0 * num * den * dn - num * num * dd) / (den * den);
    }
};

inline Eigen::Matrix3d rotation_exp(const Eigen::Vector3d& w) {
    const double theta = w.norm();
    if (theta < 1e-14) return Eigen::Matrix3d::Identity();
    const Eigen::Vector3d k = w / theta;
    Eigen::Matrix3d kx;
    kx << 0, -k.z(), k.y(), k.z(), 0, -k.x(), -k.y(), k.x(), 0;
    return Eigen::Matrix3d::Identity() + std::sin(theta) * kx + (1.0 - std::cos(theta)) * (kx * kx);
}

// Rz(a)·Ry(b)·Rx(c) written out; the grid sweep calls this with tabulated
// sines and cosines.
inline Eigen::Matrix3d euler_rotation_sc(double ca, double sa, double cb, double sb, double cc,
                                         double sc) {
    Eigen::Matrix3d r;
    r << ca * cb, ca * sb * sc - sa * cc, ca * sb * cc + sa * sc,
         sa * cb, sa * sb * sc + ca * cc, sa * sb * cc - ca * sc,
         -sb,     cb * sc,                cb * cc;
    return r;
}

inline Eigen::Matrix3d euler_rotation(double a, double b, double c) {
    return euler_rotation_sc(std::cos(a), std::sin(a), std::cos(b), std::sin(b), std::cos(c),
                             std::sin(c));
}

// Ascends h from r0: backtracking gradient steps to enter the basin, then
// Newton steps (numerical Hessian over the analytic gradient) to converge to
// machine precision. Deterministic.
inline std::pair<Eigen::Matrix3d, double> polish_rotation(const CameraObjective& obj,
                                                          Eigen::Matrix3d r) {
    double val = obj.value(r);
    double step = 0.5;
    for (int it = 0; it < 60; ++it) {
        const Eigen::Vector3d grad = obj.gradient(r);
        const double gn = grad.norm();
        if (gn <= 1e-16 * std::max(1.0, val)) break;
        bool improved = false;
        for (int bt = 0; bt < 50; ++bt) {
            const Eigen::Matrix3d rn = rotation_exp(step * grad) * r;
            const double vn = obj.value(rn);
            if (vn > val) {
                r = rn;
                val = vn;
                step *= 1.8;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if (!improved) break;
    }
    // Newton refinement.
    for (int it = 0; it < 12; ++it) {
        const Eigen::Vector3d grad = obj.gradient(r);
        if (grad.norm() <= 1e-14 * std::max(1.0, val)) break;
        Eigen::Matrix3d hess;
        const double h = 1e-5;
        for (int i = 0; i < 3; ++i) {
            Eigen::Vector3d e = Eigen::Vector3d::Zero();
            e(i) = h;
            const Eigen::Vector3d gp = obj.gradient(rotation_exp(e) * r);
            const Eigen::Vector3d gm = obj.gradient(rotation_exp(-e) * r);
            hess.col(i) = (gp - gm) / (2.0 * h);
        }
        hess = 0.5 * (hess + hess.transpose()).eval();
        const Eigen::Vector3d newton = hess.fullPivLu().solve(-grad);
        bool improved = false;
        for (double damp : {1.0, 0.5, 0.25, 0.1}) {
            const Eigen::Matrix3d rn = rotation_exp(damp * newton) * r;
            const double vn = obj.value(rn);
            if (vn > val) {
                r = rn;
                val = vn;
                improved = true;
                break;
            }
        }
        if (!improved) break;
    }
    return {r, val};
}

inline CameraMatrix camera_from_rotation(const CameraObjective& obj, const Eigen::Matrix3d& r) {
    Eigen::Matrix<double, 2, 3> q = r.topRows<2>();
    double num = obj.numerator(r);
    if (num < 0.0) {
        q = -q;
        num = -num;
    }
    const double den = obj.denominator(r);
    const double s = den > 0.0 ? std::max(0.0, num / den) : 0.0;
    CameraMatrix cam;
    cam.m = s * q;
    return cam;
}

}  // namespace detail

/// Minimizes ½‖X − R*W‖²_F over feasible cameras R* = s·Q (s >= 0, Q with
/// orthonormal rows). `x` must be centered; `w` is the current reconstruction.
/// When two optima tie numerically (depth flip), the result closest to `prev`
/// wins; without `prev`, the one closest to the SVD construction.
inline CameraMatrix update_camera(const Pose2D& x, const Pose3D& w,
                                  const std::optional<CameraMatrix>& prev = std::nullopt) {
    if (x.joint_count() != w.joint_count()) {
        throw DimensionMismatch("2D observation and reconstruction joint counts differ");
    }
    detail::CameraObjective obj;
    obj.m = x.joints * w.joints.transpose();
    obj.g = w.joints * w.joints.transpose();

    Eigen::JacobiSVD<Eigen::Matrix<double, 2, 3>> svd(obj.m,
                                                      Eigen::ComputeFullU | Eigen::ComputeFullV);
    if (svd.singularValues()(1) < 1e-12) {
        throw DegenerateGeometry("camera cross-product XWᵀ is numerically rank-deficient");
    }

    // Canonical start: orthogonal-Procrustes factor of XWᵀ, completed to a
    // rotation. It is not the optimum (the denominator varies with Q) but it
    // sits in a good basin and pins the tie-break when no prev is given.
    const Eigen::Matrix<double, 2, 3> q_svd =
        svd.matrixU() * svd.matrixV().leftCols<2>().transpose();
    Eigen::Matrix3d r_svd;
    r_svd.topRows<2>() = q_svd;
    r_svd.row(2) = q_svd.row(0).cross(q_svd.row(1));

    std::vector<Eigen::Matrix3d> starts;
    starts.push_back(r_svd);
    if (prev) {
        // Re-orthonormalize the previous camera's rotation part.
        Eigen::Vector3d r0 = prev->m.row(0);
        Eigen::Vector3d r1 = prev->m.row(1);
        if (r0.norm() > 1e-12 && r1.norm() > 1e-12) {
            r0.normalize();
            r1 = (r1 - r1.dot(r0) * r0).eval();
            if (r1.norm() > 1e-12) {
                r1.normalize();
                Eigen::Matrix3d rp;
                rp.row(0) = r0;
                rp.row(1) = r1;
                rp.row(2) = r0.cross(r1);
                starts.push_back(rp);
            }
        }
    }

    // Coarse deterministic sweep of SO(3); keep the best few cells.
    constexpr int na = 20, nb = 10, nc = 20;
    constexpr std::size_t keep = 8;
    std::vector<std::pair<double, Eigen::Matrix3d>> best_cells;
    best_cells.reserve(keep + 1);
    constexpr double pi = 3.141592653589793238462643383279502884;
    std::array<double, na> cos_a, sin_a;
    std::array<double, nb> cos_b, sin_b;
    std::array<double, nc> cos_c, sin_c;
    for (int i = 0; i < na; ++i) {
        cos_a[i] = std::cos(2.0 * pi * i / na);
        sin_a[i] = std::sin(2.0 * pi * i / na);
    }
    for (int i = 0; i < nb; ++i) {
        cos_b[i] = std::cos(-0.5 * pi + pi * (i + 0.5) / nb);
        sin_b[i] = std::sin(-0.5 * pi + pi * (i + 0.5) / nb);
    }
    for (int i = 0; i < nc; ++i) {
        cos_c[i] = std::cos(2.0 * pi * i / nc);
        sin_c[i] = std::sin(2.0 * pi * i / nc);
    }
    for (int ia = 0; ia < na; ++ia) {
        for (int ib = 0; ib < nb; ++ib) {
            for (int ic = 0; ic < nc; ++ic) {
                const Eigen::Matrix3d r = detail::euler_rotation_sc(
                    cos_a[ia], sin_a[ia], cos_b[ib], sin_b[ib], cos_c[ic], sin_c[ic]);
                const double v = obj.value(r);
                if (best_cells.size() < keep || v > best_cells.back().first) {
                    auto pos = std::upper_bound(
                        best_cells.begin(), best_cells.end(), v,
                        [](double lhs, const auto& rhs) { return lhs > rhs.first; });
                    best_cells.insert(pos, {v, r});
                    if (best_cells.size() > keep) best_cells.pop_back();
                }
            }
        }
    }
    for (const auto& [v, r] : best_cells) starts.push_back(r);

    double best_val = -1.0;
    std::vector<std::pair<double, Eigen::Matrix3d>> polished;
    polished.reserve(starts.size());
    for (const Eigen::Matrix3d& r0 : starts) {
        auto [r, v] = detail::polish_rotation(obj, r0);
        polished.emplace_back(v, r);
        best_val = std::max(best_val, v);
    }

    // Tie-break among numerically equal optima.
    const CameraMatrix anchor = prev ? *prev : detail::camera_from_rotation(obj, r_svd);
    CameraMatrix result;
    double best_dist = std::numeric_limits<double>::infinity();
    for (const auto& [v, r] : polished) {
        if (v < best_val * (1.0 - 1e-12)) continue;
        const CameraMatrix cand = detail::camera_from_rotation(obj, r);
        const double dist = (cand.m - anchor.m).norm();
        if (dist < best_dist) {
            best_dist = dist;
            result = cand;
        }
    }
    return result;
}

}  // namespace sdm
