#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "sdm/errors.hpp"
#include "sdm/pose.hpp"

namespace sdm {

enum class DictionaryKind { GlobalStructure, Deformation };

inline const char* to_string(DictionaryKind k) {
    return k == DictionaryKind::GlobalStructure ? "GlobalStructure" : "Deformation";
}

/// An ordered set of basis poses. Atoms are centered and bounded to unit
/// Frobenius norm; the bound (rather than equality) lets unused atoms shrink.
struct PoseDictionary {
    std::vector<Pose3D> atoms;
    DictionaryKind kind = DictionaryKind::GlobalStructure;

    Eigen::Index size() const { return static_cast<Eigen::Index>(atoms.size()); }
    Eigen::Index joint_count() const { return atoms.empty() ? 0 : atoms.front().joint_count(); }

    /// Flattens to a 3P x k matrix; column j is atom j stacked column-major.
    Eigen::MatrixXd to_matrix() const {
        const Eigen::Index p = joint_count();
        Eigen::MatrixXd m(3 * p, size());
        for (Eigen::Index j = 0; j < size(); ++j) {
            m.col(j) = Eigen::Map<const Eigen::VectorXd>(atoms[j].joints.data(), 3 * p);
        }
        return m;
    }
};

/// Paired coefficient vectors: c_u sparse over the global-structure
/// dictionary, c_v dense over the deformation dictionary.
struct Codes {
    Eigen::VectorXd c_u;
    Eigen::VectorXd c_v;
};

// The file readers and learner enforce dictionary feasibility with this
// tolerance; violations at or above it are rejected.
inline constexpr double kDictionaryTolerance = 1e-6;

inline void validate_dictionary(const PoseDictionary& d, double tol = kDictionaryTolerance) {
    if (d.atoms.empty()) throw InvalidDictionary("dictionary has no atoms");
    const Eigen::Index p = d.atoms.front().joint_count();
    for (std::size_t j = 0; j < d.atoms.size(); ++j) {
        const Pose3D& a = d.atoms[j];
        const std::string where = "atom " + std::to_string(j);
        if (a.joint_count() != p) throw InvalidDictionary(where + ": joint count differs");
        if (!a.joints.allFinite()) throw InvalidDictionary(where + ": non-finite entries");
        if (!is_centered(a, tol)) throw InvalidDictionary(where + ": not centered");
        const double norm = a.joints.norm();
        if (norm > 1.0 + tol) {
            throw InvalidDictionary(where + ": Frobenius norm " + std::to_string(norm) + " exceeds 1");
        }
    }
}

namespace detail {

// Centers an atom and clamps its Frobenius norm to <= 1. Norms within 1e-12
// of the bound are left untouched so applying the projection twice is a
// bitwise no-op.
inline Pose3D project_atom(const Pose3D& atom) {
    Pose3D out = center_pose(atom).first;
    const double norm = out.joints.norm();
    if (norm > 1.0 + 1e-12) out.joints /= norm;
    return out;
}

}  // namespace detail

/// Feasibility projection used by the dictionary learner: every atom is
/// centered, then rescaled to Frobenius norm min(norm, 1). Idempotent.
inline PoseDictionary project_dictionary(const PoseDictionary& d) {
    PoseDictionary out;
    out.kind = d.kind;
    out.atoms.reserve(d.atoms.size());
    for (const Pose3D& a : d.atoms) {
        if (!a.joints.allFinite()) throw InvalidPose("dictionary atom has non-finite entries");
        out.atoms.push_back(detail::project_atom(a));
    }
    return out;
}

/// Reconstructs Y = B_u* c_u + B_v* c_v.
inline Pose3D combine(const PoseDictionary& dict_u, const PoseDictionary& dict_v, const Codes& codes) {
    if (codes.c_u.size() != dict_u.size() || codes.c_v.size() != dict_v.size()) {
        throw DimensionMismatch("code length does not match dictionary size");
    }
    if (dict_u.joint_count() != dict_v.joint_count()) {
        throw DimensionMismatch("dictionaries disagree on joint count");
    }
    const Eigen::Index p = dict_u.joint_count();
    Eigen::Matrix3Xd acc = Eigen::Matrix3Xd::Zero(3, p);
    for (Eigen::Index j = 0; j < dict_u.size(); ++j) {
        acc.noalias() += codes.c_u(j) * dict_u.atoms[j].joints;
    }
    for (Eigen::Index j = 0; j < dict_v.size(); ++j) {
        acc.noalias() += codes.c_v(j) * dict_v.atoms[j].joints;
    }
    return Pose3D(std::move(acc));
}

}  // namespace sdm
