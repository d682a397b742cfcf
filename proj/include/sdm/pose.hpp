#pragma once

#include <Eigen/Dense>
#include <utility>

#include "sdm/errors.hpp"

namespace sdm {

/// A 3D skeleton pose: 3 rows (x, y, z) by P joint columns, millimeters.
/// Joint order is fixed by the skeleton definition, not stored per pose.
struct Pose3D {
    Eigen::Matrix3Xd joints;

    Pose3D() = default;
    explicit Pose3D(Eigen::Matrix3Xd j) : joints(std::move(j)) {}

    Eigen::Index joint_count() const { return joints.cols(); }
};

/// A 2D observation of a pose: 2 rows by P joint columns. Units are
/// caller-defined (pixels or millimeters) but must be consistent per dataset.
struct Pose2D {
    Eigen::Matrix2Xd joints;

    Pose2D() = default;
    explicit Pose2D(Eigen::Matrix2Xd j) : joints(std::move(j)) {}

    Eigen::Index joint_count() const { return joints.cols(); }
};

// A pose counts as centered when every per-row mean is below this bound.
inline constexpr double kCenteredTolerance = 1e-9;

// Row means below this are snapped to exactly zero when centering, which
// makes centering bitwise idempotent.
inline constexpr double kCenterSnapTolerance = 1e-10;

inline void validate(const Pose3D& p) {
    if (p.joint_count() < 2) throw InvalidPose("pose needs at least 2 joints");
    if (!p.joints.allFinite()) throw InvalidPose("pose has non-finite coordinates");
}

inline void validate(const Pose2D& p) {
    if (p.joint_count() < 2) throw InvalidPose("pose needs at least 2 joints");
    if (!p.joints.allFinite()) throw InvalidPose("pose has non-finite coordinates");
}

inline bool is_centered(const Pose3D& p, double tol = kCenteredTolerance) {
    return (p.joints.rowwise().mean().cwiseAbs().array() <= tol).all();
}

inline bool is_centered(const Pose2D& p, double tol = kCenteredTolerance) {
    return (p.joints.rowwise().mean().cwiseAbs().array() <= tol).all();
}

/// Removes the per-row mean. Returns the centered pose and the removed
/// offset, so `centered.joints.colwise() + offset` reproduces the input.
inline std::pair<Pose3D, Eigen::Vector3d> center_pose(const Pose3D& p) {
    validate(p);
    Eigen::Vector3d offset = p.joints.rowwise().mean();
    for (int r = 0; r < 3; ++r) {
        if (std::abs(offset(r)) <= kCenterSnapTolerance) offset(r) = 0.0;
    }
    if (offset.isZero(0.0)) return {p, Eigen::Vector3d::Zero()};
    Pose3D out(p.joints.colwise() - offset);
    return {std::move(out), offset};
}

inline std::pair<Pose2D, Eigen::Vector2d> center_pose2d(const Pose2D& p) {
    validate(p);
    Eigen::Vector2d offset = p.joints.rowwise().mean();
    for (int r = 0; r < 2; ++r) {
        if (std::abs(offset(r)) <= kCenterSnapTolerance) offset(r) = 0.0;
    }
    if (offset.isZero(0.0)) return {p, Eigen::Vector2d::Zero()};
    Pose2D out(p.joints.colwise() - offset);
    return {std::move(out), offset};
}

}  // namespace sdm
