#include "chainfit/rigid.hpp"

#include "chainfit/errors.hpp"

#include <Eigen/Geometry>

#include <cmath>

namespace chainfit {

namespace {
constexpr double kDegenerate = 1e-8;
}

Eigen::Matrix3d gram_schmidt_rotation(const Eigen::Vector3d& v1, const Eigen::Vector3d& v2) {
    const double n1 = v1.norm();
    if (!(n1 > kDegenerate)) throw DegeneracyError("first rotation vector is (near) zero");
    Eigen::Vector3d w1 = v1 / n1;
    Eigen::Vector3d u = v2 - v2.dot(w1) * w1;
    const double nu = u.norm();
    if (!(nu > kDegenerate)) throw DegeneracyError("rotation vectors are (near) parallel");
    Eigen::Vector3d w2 = u / nu;
    Eigen::Matrix3d r;
    r.col(0) = w1;
    r.col(1) = w2;
    r.col(2) = w1.cross(w2);
    return r;
}

std::pair<Eigen::Vector3d, Eigen::Vector3d> gram_schmidt_backward(const Eigen::Vector3d& v1,
                                                                  const Eigen::Vector3d& v2,
                                                                  const Eigen::Matrix3d& grad_rotation) {
    const double n1 = v1.norm();
    Eigen::Vector3d w1 = v1 / n1;
    const double proj = v2.dot(w1);
    Eigen::Vector3d u = v2 - proj * w1;
    const double nu = u.norm();
    Eigen::Vector3d w2 = u / nu;

    const Eigen::Vector3d g3 = grad_rotation.col(2);
    // w3 = w1 x w2
    Eigen::Vector3d g_w1 = grad_rotation.col(0) + w2.cross(g3);
    Eigen::Vector3d g_w2 = grad_rotation.col(1) + g3.cross(w1);
    // w2 = u / |u|
    Eigen::Vector3d g_u = (g_w2 - w2 * w2.dot(g_w2)) / nu;
    // u = v2 - (v2 . w1) w1
    Eigen::Vector3d g_v2 = g_u - w1 * w1.dot(g_u);
    g_w1 += -w1.dot(g_u) * v2 - proj * g_u;
    // w1 = v1 / |v1|
    Eigen::Vector3d g_v1 = (g_w1 - w1 * w1.dot(g_w1)) / n1;
    return {g_v1, g_v2};
}

Eigen::VectorXd apply_chain_transform(const Eigen::Ref<const Eigen::VectorXd>& coords, const ChainTransform& transform) {
    if (coords.size() % 3 != 0) throw DimensionError("coordinate length is not a multiple of 3");
    if (transform.rotation == Eigen::Matrix3d::Identity()) {
        Eigen::VectorXd out = coords;
        if (!transform.translation.isZero(0.0))
            for (Eigen::Index j = 0; j < coords.size() / 3; ++j) out.segment<3>(3 * j) += transform.translation;
        return out;
    }
    Eigen::VectorXd out(coords.size());
    const Eigen::Vector3d offset = transform.pivot + transform.translation;
    for (Eigen::Index j = 0; j < coords.size() / 3; ++j)
        out.segment<3>(3 * j) = transform.rotation * (coords.segment<3>(3 * j) - transform.pivot) + offset;
    return out;
}

std::vector<Eigen::Vector3d> chain_pivots(const AtomicStructure& reference) {
    std::vector<Eigen::Vector3d> pivots;
    pivots.reserve(reference.chain_count());
    for (const auto& chain : reference.chains()) pivots.push_back(centroid(reference.chain_coords(chain)));
    return pivots;
}

LatentState LatentState::identity(const AtomicStructure& reference, const ModelBases& bases) {
    LatentState state;
    for (std::size_t c = 0; c < reference.chain_count(); ++c) {
        ChainLatent latent;
        latent.chain_id = reference.chains()[c].id;
        if (!bases.chains.empty()) latent.alpha = Eigen::VectorXd::Zero(bases.chains.at(c).mode_count());
        state.chains.push_back(std::move(latent));
    }
    if (bases.whole) state.whole_alpha = Eigen::VectorXd::Zero(bases.whole->mode_count());
    return state;
}

Eigen::VectorXd compose_coords(const AtomicStructure& reference, const ModelBases& bases, const LatentState& latents) {
    const auto& chains = reference.chains();
    if (latents.chains.size() != chains.size())
        throw DimensionError("latent state has " + std::to_string(latents.chains.size()) + " chains, reference has " +
                             std::to_string(chains.size()));
    if (!bases.chains.empty() && bases.chains.size() != chains.size())
        throw DimensionError("per-chain bases cover " + std::to_string(bases.chains.size()) + " chains, reference has " +
                             std::to_string(chains.size()));

    Eigen::VectorXd coords = reference.coords();
    if (bases.whole) {
        if (static_cast<Eigen::Index>(bases.whole->atom_count()) * 3 != coords.size())
            throw DimensionError("whole-structure basis atom count does not match the reference");
        if (latents.whole_alpha.size() != bases.whole->mode_count())
            throw DimensionError("whole-structure mode weights have length " + std::to_string(latents.whole_alpha.size()) +
                                 ", basis has " + std::to_string(bases.whole->mode_count()) + " modes");
        coords = deform(*bases.whole, latents.whole_alpha);
    } else if (latents.whole_alpha.size() != 0) {
        throw DimensionError("whole-structure mode weights given without a whole-structure basis");
    }

    for (std::size_t c = 0; c < chains.size(); ++c) {
        const auto& chain = chains[c];
        const auto& latent = latents.chains[c];
        if (latent.chain_id != chain.id)
            throw DimensionError("latent chain '" + latent.chain_id + "' does not match reference chain '" + chain.id +
                                 "'");
        auto segment = coords.segment(3 * chain.begin, 3 * chain.size());
        ChainTransform transform;
        transform.pivot = centroid(reference.chain_coords(chain));
        if (!bases.chains.empty()) {
            const auto& basis = bases.chains[c];
            if (basis.atom_count() != chain.size())
                throw DimensionError("chain " + chain.id + ": basis has " + std::to_string(basis.atom_count()) +
                                     " atoms, chain has " + std::to_string(chain.size()));
            if (latent.alpha.size() != basis.mode_count())
                throw DimensionError("chain " + chain.id + ": mode weights have length " +
                                     std::to_string(latent.alpha.size()) + ", basis has " +
                                     std::to_string(basis.mode_count()) + " modes");
            segment += basis.modes * latent.alpha;
        } else if (latent.alpha.size() != 0) {
            throw DimensionError("chain " + chain.id + ": mode weights given without a per-chain basis");
        }
        transform.rotation = latent.rotation();
        transform.translation = latent.translation;
        segment = apply_chain_transform(segment, transform);
    }
    return coords;
}

AtomicStructure compose_structure(const AtomicStructure& reference, const ModelBases& bases,
                                  const LatentState& latents) {
    return reference.with_coords(compose_coords(reference, bases, latents));
}

Eigen::Matrix3d euler_zyx(double x, double y, double z) {
    return (Eigen::AngleAxisd(z, Eigen::Vector3d::UnitZ()) * Eigen::AngleAxisd(y, Eigen::Vector3d::UnitY()) *
            Eigen::AngleAxisd(x, Eigen::Vector3d::UnitX()))
        .toRotationMatrix();
}

}  // namespace chainfit
