#pragma once

#include "chainfit/nma.hpp"
#include "chainfit/structure.hpp"

#include <Eigen/Core>

#include <string>
#include <utility>
#include <vector>

namespace chainfit {

/// Columns (w1, w2, w1 x w2) of the Gram-Schmidt frame of two vectors.
/// Throws DegeneracyError when |v1| or the part of v2 orthogonal to v1 is
/// below 1e-8.
Eigen::Matrix3d gram_schmidt_rotation(const Eigen::Vector3d& v1, const Eigen::Vector3d& v2);

/// Pulls dL/dR back to (dL/dv1, dL/dv2) through gram_schmidt_rotation.
std::pair<Eigen::Vector3d, Eigen::Vector3d> gram_schmidt_backward(const Eigen::Vector3d& v1,
                                                                  const Eigen::Vector3d& v2,
                                                                  const Eigen::Matrix3d& grad_rotation);

/// Rotation about a pivot followed by a translation.
struct ChainTransform {
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();
    Eigen::Vector3d pivot = Eigen::Vector3d::Zero();
};

/// x -> R (x - pivot) + pivot + t for every atom of a flat 3n vector.
Eigen::VectorXd apply_chain_transform(const Eigen::Ref<const Eigen::VectorXd>& coords, const ChainTransform& transform);

/// Known orientation of the whole molecule and in-plane image shift (px).
struct GlobalPose {
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector2d shift = Eigen::Vector2d::Zero();
};

/// Per-chain latent block: mode weights plus the unconstrained rotation
/// vectors and translation.
struct ChainLatent {
    std::string chain_id;
    Eigen::VectorXd alpha;
    Eigen::Vector3d v1 = Eigen::Vector3d::UnitX();
    Eigen::Vector3d v2 = Eigen::Vector3d::UnitY();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    Eigen::Matrix3d rotation() const { return gram_schmidt_rotation(v1, v2); }
};

struct LatentState {
    std::vector<ChainLatent> chains;
    Eigen::VectorXd whole_alpha;  // empty unless a whole-structure basis is used
    GlobalPose pose;

    /// alpha = 0, R = I, t = 0 for every chain, sized to `bases`.
    static LatentState identity(const AtomicStructure& reference, const ModelBases& bases);
};

/// Rotation pivot of each chain: the centroid of its reference coordinates.
std::vector<Eigen::Vector3d> chain_pivots(const AtomicStructure& reference);

/// Deforms each chain by its modes (and the whole-structure modes when
/// present), then applies the chain transform about the reference pivot.
/// Chains are concatenated in reference order. Throws DimensionError naming
/// the chain on any size mismatch.
Eigen::VectorXd compose_coords(const AtomicStructure& reference, const ModelBases& bases, const LatentState& latents);
AtomicStructure compose_structure(const AtomicStructure& reference, const ModelBases& bases,
                                  const LatentState& latents);

/// R_z(z) R_y(y) R_x(x), angles in radians.
Eigen::Matrix3d euler_zyx(double x, double y, double z);

}  // namespace chainfit
