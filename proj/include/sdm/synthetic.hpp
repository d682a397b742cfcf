#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "sdm/errors.hpp"
#include "sdm/pose.hpp"
#include "sdm/rng.hpp"

namespace sdm {

/// One controllable deformation direction: every joint in `joints` is
/// displaced by amplitude·direction, amplitude drawn uniformly from
/// [amp_lo, amp_hi] millimeters per generated pose.
struct DeformAxis {
    std::vector<int> joints;
    Eigen::Vector3d direction;
    double amp_lo = 0.0;
    double amp_hi = 0.0;
};

struct FamilySpec {
    std::string name;
    Pose3D base;
    std::vector<DeformAxis> axes;
    int count = 0;
    std::uint64_t seed = 0;
    // Optional per-pose yaw about the vertical axis, drawn uniformly from
    // [yaw_lo, yaw_hi] radians. Training corpora keep the canonical facing
    // (zero range); test families use it so view azimuths cover the orbit.
    double yaw_lo = 0.0;
    double yaw_hi = 0.0;
    // Amplitude draw shape: amp = lo + (hi - lo)·u^amp_power with u uniform.
    // 1 is uniform; larger values bias draws toward lo, so each pose
    // exercises only a few axes strongly, the way natural poses bend a few
    // joints at a time.
    double amp_power = 1.0;
};

struct NoiseSpec {
    double sigma = 0.0;  // std of isotropic Gaussian per 2D coordinate
    std::uint64_t seed = 0;
};

inline constexpr int kArchetypeJoints = 16;

/// Joint order shared by the built-in archetypes. y is the vertical axis,
/// x lateral, z sagittal; coordinates in millimeters.
inline const std::array<std::string_view, kArchetypeJoints>& joint_names() {
    static const std::array<std::string_view, kArchetypeJoints> names = {
        "pelvis",     "spine",      "neck",    "head",   "r_shoulder", "r_elbow",
        "r_wrist",    "l_shoulder", "l_elbow", "l_wrist", "r_hip",      "r_knee",
        "r_ankle",    "l_hip",      "l_knee",  "l_ankle"};
    return names;
}

namespace detail {

inline Pose3D pose_from_table(const double (&t)[kArchetypeJoints][3]) {
    Eigen::Matrix3Xd j(3, kArchetypeJoints);
    for (int c = 0; c < kArchetypeJoints; ++c) {
        j(0, c) = t[c][0];
        j(1, c) = t[c][1];
        j(2, c) = t[c][2];
    }
    return Pose3D(std::move(j));
}

}  // namespace detail

/// Upright neutral pose.
inline Pose3D archetype_stand() {
    static const double t[kArchetypeJoints][3] = {
        {0, 1000, 0},     {0, 1260, 0},    {0, 1520, 0},    {0, 1680, 0},
        {-195, 1470, 0},  {-245, 1190, 10}, {-265, 930, 20}, {195, 1470, 0},
        {245, 1190, 10},  {265, 930, 20},  {-100, 990, 0},  {-108, 540, 5},
        {-115, 90, 0},    {100, 990, 0},   {108, 540, 5},   {115, 90, 0}};
    return detail::pose_from_table(t);
}

/// Mid-stride walking pose: right leg and left arm forward.
inline Pose3D archetype_stride() {
    static const double t[kArchetypeJoints][3] = {
        {0, 990, 0},      {0, 1250, 25},    {0, 1505, 45},   {0, 1665, 60},
        {-195, 1455, 40}, {-240, 1180, -120}, {-255, 935, -230}, {195, 1455, 40},
        {240, 1185, 190}, {250, 960, 330},  {-100, 980, 10}, {-108, 560, 260},
        {-112, 150, 420}, {100, 980, -10},  {106, 520, -230}, {110, 95, -430}};
    return detail::pose_from_table(t);
}

/// Perch-sitting pose: pelvis dropped onto a high seat, thighs angled
/// forward, forearms reaching toward the knees.
inline Pose3D archetype_seated() {
    static const double t[kArchetypeJoints][3] = {
        {0, 760, 20},     {0, 1030, 0},    {0, 1295, -20},  {0, 1455, -10},
        {-195, 1245, -20}, {-240, 980, 20}, {-250, 745, 160}, {195, 1245, -20},
        {240, 980, 20},   {250, 745, 160}, {-100, 755, 20}, {-107, 520, 290},
        {-112, 70, 250},  {100, 755, 20},  {107, 520, 290}, {112, 70, 250}};
    return detail::pose_from_table(t);
}

inline Pose3D archetype(std::string_view name) {
    if (name == "stand") return archetype_stand();
    if (name == "stride") return archetype_stride();
    if (name == "seated") return archetype_seated();
    throw ConfigError("unknown archetype '" + std::string(name) + "'");
}

/// Shared bend basis used by the default family configurations; families
/// draw nonnegative amplitudes along these directions, so two-sided bends
/// appear as mirrored axis pairs. The basis is deliberately larger than the
/// usual dictionary sizes: no small set of whole-pose atoms spans it.
inline std::vector<DeformAxis> default_deform_axes() {
    return {
        {{11, 12}, {0, 0, 1}, 0, 0},      // right leg forward
        {{11, 12}, {0, 0, -1}, 0, 0},     // right leg back
        {{14, 15}, {0, 0, 1}, 0, 0},      // left leg forward
        {{14, 15}, {0, 0, -1}, 0, 0},     // left leg back
        {{11, 14}, {0, 1, 0}, 0, 0},      // knees up
        {{12, 15}, {0, 1, 0}, 0, 0},      // ankles up
        {{5, 6}, {0, 0, 1}, 0, 0},        // right arm forward
        {{5, 6}, {0, 0, -1}, 0, 0},       // right arm back
        {{8, 9}, {0, 0, 1}, 0, 0},        // left arm forward
        {{8, 9}, {0, 0, -1}, 0, 0},       // left arm back
        {{5, 6}, {-1, 0, 0}, 0, 0},       // right arm out
        {{8, 9}, {1, 0, 0}, 0, 0},        // left arm out
        {{6, 9}, {0, 0, 1}, 0, 0},        // wrists forward
        {{6, 9}, {0, -1, 0}, 0, 0},       // wrists drop
        {{4, 7}, {0, 0, 1}, 0, 0},        // shoulders forward
        {{4, 7}, {0, 1, 0}, 0, 0},        // shoulder shrug
        {{1, 2, 3}, {0, 0, 1}, 0, 0},     // torso lean forward
        {{1, 2, 3}, {0, 0, -1}, 0, 0},    // torso lean back
        {{3}, {0, 0, 1}, 0, 0},           // head nod
        {{0, 10, 13}, {0, 0, 1}, 0, 0},   // pelvis forward
        {{0, 10, 13}, {0, -1, 0}, 0, 0},  // pelvis drop
    };
}

inline void validate(const FamilySpec& spec) {
    validate(spec.base);
    if (spec.count < 0) throw ConfigError("family count must be nonnegative");
    if (!(spec.yaw_hi >= spec.yaw_lo)) throw ConfigError("yaw range must satisfy lo <= hi");
    if (!(spec.amp_power > 0.0)) throw ConfigError("amp_power must be positive");
    for (const DeformAxis& axis : spec.axes) {
        if (!(axis.amp_lo >= 0.0) || !(axis.amp_hi >= axis.amp_lo)) {
            throw ConfigError("amplitude range must satisfy 0 <= lo <= hi");
        }
        if (!axis.direction.allFinite()) throw ConfigError("axis direction must be finite");
        for (int j : axis.joints) {
            if (j < 0 || j >= spec.base.joint_count()) {
                throw ConfigError("axis joint index out of range");
            }
        }
    }
}

/// `count` centered poses: base plus per-axis uniform-amplitude displacement.
/// Pose i draws from an independent stream seeded by mix(seed, i), so
/// generation order (or parallel generation) does not change results.
inline std::vector<Pose3D> generate_family(const FamilySpec& spec) {
    validate(spec);
    std::vector<Pose3D> out;
    out.reserve(static_cast<std::size_t>(spec.count));
    for (int i = 0; i < spec.count; ++i) {
        Rng rng(Rng::mix(spec.seed, static_cast<std::uint64_t>(i)));
        Eigen::Matrix3Xd joints = spec.base.joints;
        for (const DeformAxis& axis : spec.axes) {
            const double u = spec.amp_power == 1.0 ? rng.uniform() : std::pow(rng.uniform(), spec.amp_power);
            const double amp = axis.amp_lo + (axis.amp_hi - axis.amp_lo) * u;
            for (int j : axis.joints) joints.col(j) += amp * axis.direction;
        }
        if (spec.yaw_hi > spec.yaw_lo || spec.yaw_lo != 0.0) {
            const double yaw = rng.uniform(spec.yaw_lo, spec.yaw_hi);
            const double c = std::cos(yaw), s = std::sin(yaw);
            Eigen::Matrix3d rot;
            rot << c, 0, s, 0, 1, 0, -s, 0, c;
            joints = (rot * joints).eval();
        }
        out.push_back(center_pose(Pose3D(std::move(joints))).first);
    }
    return out;
}

/// Views of a 360° orbit about the vertical (y) axis: view j rotates by
/// azimuth 2πj/n_views and drops depth (orthographic, s = 1). Outputs are
/// centered.
inline std::vector<Pose2D> orbit_project(const Pose3D& y, int n_views) {
    validate(y);
    if (n_views < 1) throw ConfigError("orbit needs at least one view");
    std::vector<Pose2D> views;
    views.reserve(static_cast<std::size_t>(n_views));
    for (int j = 0; j < n_views; ++j) {
        const double theta = 2.0 * 3.141592653589793238462643383279502884 * j / n_views;
        const double c = std::cos(theta), s = std::sin(theta);
        Eigen::Matrix<double, 2, 3> proj;
        proj << c, 0, s, 0, 1, 0;
        views.push_back(center_pose2d(Pose2D(proj * y.joints)).first);
    }
    return views;
}

/// Adds independent N(0, σ²) to every coordinate; σ = 0 returns the input
/// unchanged. Seeded and deterministic.
inline Pose2D add_noise(const Pose2D& x, const NoiseSpec& spec) {
    if (!(spec.sigma >= 0.0)) throw ConfigError("noise sigma must be nonnegative");
    if (spec.sigma == 0.0) return x;
    Rng rng(spec.seed);
    Pose2D out = x;
    for (Eigen::Index c = 0; c < out.joints.cols(); ++c) {
        for (Eigen::Index r = 0; r < 2; ++r) {
            out.joints(r, c) += spec.sigma * rng.gaussian();
        }
    }
    return out;
}

}  // namespace sdm
