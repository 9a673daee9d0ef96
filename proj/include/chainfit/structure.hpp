#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace chainfit {

/// Per-atom annotations carried through from the PDB record. Coordinates
/// live separately in AtomicStructure::coords().
struct AtomRecord {
    bool hetatm = false;
    int serial = 0;
    std::string name;       // raw 4-column field, e.g. " CA "
    std::string res_name;
    std::string chain_id;
    int res_seq = 0;
    std::string element;

    /// Atom name without padding ("CA").
    std::string trimmed_name() const;
};

/// Half-open atom index range [begin, end) belonging to one chain.
struct ChainRange {
    std::string id;
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const { return end - begin; }
};

/// Chain-decomposed atom coordinates. Coordinates are stored flat as
/// (x0, y0, z0, x1, ...) in Å, the layout normal modes use. Immutable after
/// construction.
class AtomicStructure {
public:
    AtomicStructure() = default;

    /// Builds the chain index from consecutive equal chain ids. Throws
    /// DimensionError on size mismatch, ParseError if a chain id reappears
    /// after another chain, and Error on non-finite coordinates.
    AtomicStructure(std::vector<AtomRecord> atoms, Eigen::VectorXd coords);

    std::size_t atom_count() const { return atoms_.size(); }
    std::size_t chain_count() const { return chains_.size(); }
    const std::vector<AtomRecord>& atoms() const { return atoms_; }
    const Eigen::VectorXd& coords() const { return coords_; }
    const std::vector<ChainRange>& chains() const { return chains_; }

    /// Throws LookupError for unknown ids.
    const ChainRange& chain(std::string_view id) const;
    std::size_t chain_index(std::string_view id) const;

    Eigen::Vector3d position(std::size_t atom) const { return coords_.segment<3>(3 * atom); }
    Eigen::VectorXd chain_coords(const ChainRange& chain) const {
        return coords_.segment(3 * chain.begin, 3 * chain.size());
    }

    /// Same atoms and chains, new coordinates.
    AtomicStructure with_coords(Eigen::VectorXd coords) const;

private:
    std::vector<AtomRecord> atoms_;
    Eigen::VectorXd coords_;
    std::vector<ChainRange> chains_;
};

/// Parses ATOM/HETATM records of a fixed-column PDB document. Reading stops
/// at the first ENDMDL, so only the first model of a multi-model file is used.
AtomicStructure parse_structure(std::string_view text);
AtomicStructure read_structure(const std::filesystem::path& path);

/// Fixed-column PDB text, coordinates with 3 decimals.
std::string write_structure(const AtomicStructure& structure);
/// MODEL/ENDMDL blocks, one per structure.
std::string write_models(std::span<const AtomicStructure> models);
void save_structure(const std::filesystem::path& path, const AtomicStructure& structure);

/// Keeps only atoms with the given (trimmed) name; `--ca-only` uses "CA".
AtomicStructure filter_atom_name(const AtomicStructure& structure, std::string_view name);

/// Unweighted mean position of the chain's atoms.
Eigen::Vector3d center_of_mass(const AtomicStructure& structure, std::string_view chain_id);
/// Unweighted mean of a flat 3n coordinate vector.
Eigen::Vector3d centroid(const Eigen::Ref<const Eigen::VectorXd>& coords);

}  // namespace chainfit
