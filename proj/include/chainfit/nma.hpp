#pragma once

#include "chainfit/structure.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace chainfit {

/// Anisotropic network model parameters.
struct EnmConfig {
    double cutoff = 15.0;          // Å
    double spring_constant = 1.0;  // gamma
    int num_modes = 10;            // K
    double null_tolerance = 1e-6;  // relative to the largest eigenvalue

    /// Throws ConfigError.
    void validate() const;
};

/// Lowest non-rigid normal modes of one elastic network.
struct NormalModeBasis {
    Eigen::VectorXd reference;    // 3n, Å
    Eigen::VectorXd eigenvalues;  // K, ascending
    Eigen::MatrixXd modes;        // 3n x K, orthonormal columns
    /// Fraction of the total harmonic fluctuation (sum of 1/lambda over all
    /// non-null modes) captured by the first k+1 modes.
    Eigen::VectorXd cumulative_fraction;
    int null_count = 0;

    std::size_t atom_count() const { return static_cast<std::size_t>(reference.size() / 3); }
    int mode_count() const { return static_cast<int>(modes.cols()); }
};

/// Dense 3n x 3n ANM Hessian around `reference` (flat 3n coordinates).
Eigen::MatrixXd build_hessian(const Eigen::Ref<const Eigen::VectorXd>& reference, const EnmConfig& config);

/// Eigendecomposition of the Hessian; drops modes with
/// lambda < null_tolerance * lambda_max and keeps the next `k` in ascending
/// order. Eigenvector signs are fixed so the largest-magnitude component is
/// positive.
NormalModeBasis compute_modes(const Eigen::MatrixXd& hessian, const Eigen::VectorXd& reference, int k,
                              double null_tolerance = 1e-6);

/// reference + modes * alpha.
Eigen::VectorXd deform(const NormalModeBasis& basis, const Eigen::Ref<const Eigen::VectorXd>& alpha);

/// 1/2 (x - x0)^T H (x - x0).
double enm_energy(const Eigen::MatrixXd& hessian, const Eigen::VectorXd& coords, const Eigen::VectorXd& reference);

/// Modes for one chain slice of a structure.
NormalModeBasis chain_modes(const AtomicStructure& structure, const ChainRange& chain, const EnmConfig& config);

/// Per-chain bases plus an optional whole-structure basis. A composer uses
/// per-chain deformation when `chains` is non-empty and whole-structure
/// deformation when `whole` is set.
struct ModelBases {
    std::vector<NormalModeBasis> chains;
    std::optional<NormalModeBasis> whole;
};

ModelBases per_chain_bases(const AtomicStructure& structure, const EnmConfig& config, unsigned threads = 1);
ModelBases whole_structure_basis(const AtomicStructure& structure, const EnmConfig& config);

/// Binary layout, little-endian: uint64 n, uint64 K, float64 reference[3n],
/// float64 eigenvalues[K], float64 modes[3n*K] column-major. A JSON sidecar
/// `<path>.json` records the ENM configuration.
void write_basis(const std::filesystem::path& path, const NormalModeBasis& basis, const EnmConfig& config,
                 const std::string& label);
NormalModeBasis read_basis(const std::filesystem::path& path);

}  // namespace chainfit
