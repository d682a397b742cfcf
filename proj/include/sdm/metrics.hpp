#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>
#include <vector>

#include "sdm/errors.hpp"
#include "sdm/pose.hpp"

namespace sdm {

/// Mean Euclidean distance over joints, in the poses' units (mm by
/// convention). Both poses must already be in the same frame.
inline double per_joint_error(const Pose3D& est, const Pose3D& gt) {
    if (est.joint_count() != gt.joint_count()) {
        throw DimensionMismatch("poses disagree on joint count");
    }
    return (est.joints - gt.joints).colwise().norm().mean();
}

struct RigidAlignment {
    Pose3D aligned;
    Eigen::Matrix3d rotation;
    Eigen::Vector3d translation;
};

/// Least-squares rigid registration of est onto gt: rotation (det +1) and
/// translation only, no scaling. Classic Procrustes via SVD of the centered
/// cross-covariance with determinant sign correction.
inline RigidAlignment rigid_align(const Pose3D& est, const Pose3D& gt) {
    if (est.joint_count() != gt.joint_count()) {
        throw DimensionMismatch("poses disagree on joint count");
    }
    if (est.joint_count() < 3) {
        throw DegenerateGeometry("rigid alignment needs at least 3 joints");
    }
    const Eigen::Vector3d est_centroid = est.joints.rowwise().mean();
    const Eigen::Vector3d gt_centroid = gt.joints.rowwise().mean();
    const Eigen::Matrix3Xd a = est.joints.colwise() - est_centroid;
    const Eigen::Matrix3Xd b = gt.joints.colwise() - gt_centroid;

    const Eigen::Matrix3d h = b * a.transpose();
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::Vector3d sv = svd.singularValues();
    if (sv(1) <= 1e-12 * std::max(1.0, sv(0))) {
        throw DegenerateGeometry("cross-covariance rank below 2 (collinear joints)");
    }
    Eigen::Matrix3d r = svd.matrixU() * svd.matrixV().transpose();
    if (r.determinant() < 0.0) {
        Eigen::Matrix3d flip = Eigen::Matrix3d::Identity();
        flip(2, 2) = -1.0;
        r = svd.matrixU() * flip * svd.matrixV().transpose();
    }
    const Eigen::Vector3d t = gt_centroid - r * est_centroid;
    RigidAlignment out;
    out.rotation = r;
    out.translation = t;
    out.aligned = Pose3D((r * est.joints).colwise() + t);
    return out;
}

/// Per-joint error after optimal rigid alignment (scale differences remain).
inline double estimation_error(const Pose3D& est, const Pose3D& gt) {
    return per_joint_error(rigid_align(est, gt).aligned, gt);
}

/// Component i is the mean, over pairs, of joint i's distance after per-pair
/// rigid alignment.
inline Eigen::VectorXd joint_breakdown(const std::vector<std::pair<Pose3D, Pose3D>>& pairs) {
    if (pairs.empty()) throw EmptyBatch("joint_breakdown over an empty batch");
    const Eigen::Index p = pairs.front().first.joint_count();
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(p);
    for (const auto& [est, gt] : pairs) {
        if (est.joint_count() != p || gt.joint_count() != p) {
            throw DimensionMismatch("batch poses disagree on joint count");
        }
        const Pose3D aligned = rigid_align(est, gt).aligned;
        acc += (aligned.joints - gt.joints).colwise().norm().transpose();
    }
    return acc / static_cast<double>(pairs.size());
}

}  // namespace sdm
