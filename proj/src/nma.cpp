#include "chainfit/nma.hpp"

#include "chainfit/errors.hpp"
#include "chainfit/parallel.hpp"

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>

namespace chainfit {

static_assert(std::endian::native == std::endian::little, "basis files assume a little-endian host");

void EnmConfig::validate() const {
    if (!(cutoff > 0.0)) throw ConfigError("ENM cutoff must be positive");
    if (!(spring_constant > 0.0)) throw ConfigError("ENM spring constant must be positive");
    if (num_modes < 1) throw ConfigError("number of normal modes must be at least 1");
    if (!(null_tolerance > 0.0)) throw ConfigError("null-mode tolerance must be positive");
}

Eigen::MatrixXd build_hessian(const Eigen::Ref<const Eigen::VectorXd>& reference, const EnmConfig& config) {
    config.validate();
    const Eigen::Index n = reference.size() / 3;
    if (reference.size() % 3 != 0) throw DimensionError("reference length is not a multiple of 3");
    if (n < 2) throw DimensionError("elastic network needs at least 2 atoms");
    if (!reference.allFinite()) throw Error("reference coordinates are not finite");

    const double cutoff2 = config.cutoff * config.cutoff;
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(3 * n, 3 * n);
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index k = j + 1; k < n; ++k) {
            Eigen::Vector3d d = reference.segment<3>(3 * j) - reference.segment<3>(3 * k);
            double d2 = d.squaredNorm();
            if (d2 > cutoff2) continue;
            if (d2 == 0.0)
                throw DegeneracyError("atoms " + std::to_string(j) + " and " + std::to_string(k) +
                                      " share a position");
            Eigen::Matrix3d block = -config.spring_constant * (d * d.transpose()) / d2;
            h.block<3, 3>(3 * j, 3 * k) = block;
            h.block<3, 3>(3 * k, 3 * j) = block;
            h.block<3, 3>(3 * j, 3 * j) -= block;
            h.block<3, 3>(3 * k, 3 * k) -= block;
        }
    }
    return h;
}

NormalModeBasis compute_modes(const Eigen::MatrixXd& hessian, const Eigen::VectorXd& reference, int k,
                              double null_tolerance) {
    if (hessian.rows() != hessian.cols() || hessian.rows() != reference.size())
        throw DimensionError("Hessian is " + std::to_string(hessian.rows()) + "x" + std::to_string(hessian.cols()) +
                             " for a reference of length " + std::to_string(reference.size()));
    if (k < 1) throw ConfigError("number of normal modes must be at least 1");

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(hessian);
    if (solver.info() != Eigen::Success) throw Error("Hessian eigendecomposition failed");
    const Eigen::VectorXd& values = solver.eigenvalues();  // ascending
    const double lambda_max = values.maxCoeff();
    const double threshold = null_tolerance * std::max(lambda_max, 0.0);

    Eigen::Index first = 0;
    while (first < values.size() && values[first] < threshold) ++first;
    const Eigen::Index available = values.size() - first;
    if (k > available) throw CapacityError("requested " + std::to_string(k) + " normal modes", available);

    NormalModeBasis basis;
    basis.reference = reference;
    basis.null_count = static_cast<int>(first);
    basis.eigenvalues = values.segment(first, k);
    basis.modes = solver.eigenvectors().middleCols(first, k);
    for (int c = 0; c < k; ++c) {
        Eigen::Index arg = 0;
        basis.modes.col(c).cwiseAbs().maxCoeff(&arg);
        if (basis.modes(arg, c) < 0.0) basis.modes.col(c) *= -1.0;
    }

    double total = 0.0;
    for (Eigen::Index i = first; i < values.size(); ++i) total += 1.0 / values[i];
    basis.cumulative_fraction.resize(k);
    double running = 0.0;
    for (int c = 0; c < k; ++c) {
        running += 1.0 / basis.eigenvalues[c];
        basis.cumulative_fraction[c] = running / total;
    }
    return basis;
}

Eigen::VectorXd deform(const NormalModeBasis& basis, const Eigen::Ref<const Eigen::VectorXd>& alpha) {
    if (alpha.size() != basis.modes.cols())
        throw DimensionError("mode weight vector has length " + std::to_string(alpha.size()) + ", basis has " +
                             std::to_string(basis.modes.cols()) + " modes");
    if (!alpha.allFinite()) throw Error("mode weights are not finite");
    return basis.reference + basis.modes * alpha;
}

double enm_energy(const Eigen::MatrixXd& hessian, const Eigen::VectorXd& coords, const Eigen::VectorXd& reference) {
    Eigen::VectorXd dx = coords - reference;
    return 0.5 * dx.dot(hessian * dx);
}

NormalModeBasis chain_modes(const AtomicStructure& structure, const ChainRange& chain, const EnmConfig& config) {
    Eigen::VectorXd reference = structure.chain_coords(chain);
    try {
        return compute_modes(build_hessian(reference, config), reference, config.num_modes, config.null_tolerance);
    } catch (const CapacityError& e) {
        throw CapacityError("chain " + chain.id + ": requested " + std::to_string(config.num_modes) + " normal modes",
                            e.maximum());
    } catch (const DegeneracyError& e) {
        throw DegeneracyError("chain " + chain.id + ": " + e.what());
    }
}

ModelBases per_chain_bases(const AtomicStructure& structure, const EnmConfig& config, unsigned threads) {
    ModelBases bases;
    bases.chains.resize(structure.chain_count());
    parallel_for(structure.chain_count(), threads,
                 [&](std::size_t c) { bases.chains[c] = chain_modes(structure, structure.chains()[c], config); });
    return bases;
}

ModelBases whole_structure_basis(const AtomicStructure& structure, const EnmConfig& config) {
    ModelBases bases;
    bases.whole = compute_modes(build_hessian(structure.coords(), config), structure.coords(), config.num_modes,
                                config.null_tolerance);
    return bases;
}

namespace {

template <typename T>
void write_raw(std::ofstream& out, const T* data, std::size_t count) {
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(T)));
}

template <typename T>
void read_raw(std::ifstream& in, T* data, std::size_t count, const std::filesystem::path& path) {
    in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * sizeof(T)));
    if (!in) throw IoError("truncated basis file " + path.string());
}

}  // namespace

void write_basis(const std::filesystem::path& path, const NormalModeBasis& basis, const EnmConfig& config,
                 const std::string& label) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write basis file " + path.string());
    const std::uint64_t header[2] = {basis.atom_count(), static_cast<std::uint64_t>(basis.mode_count())};
    write_raw(out, header, 2);
    write_raw(out, basis.reference.data(), basis.reference.size());
    write_raw(out, basis.eigenvalues.data(), basis.eigenvalues.size());
    write_raw(out, basis.modes.data(), basis.modes.size());
    if (!out) throw IoError("failed writing basis file " + path.string());

    nlohmann::json sidecar = {
        {"label", label},
        {"atoms", basis.atom_count()},
        {"modes", basis.mode_count()},
        {"null_modes_dropped", basis.null_count},
        {"enm", {{"cutoff", config.cutoff}, {"spring_constant", config.spring_constant},
                 {"num_modes", config.num_modes}, {"null_tolerance", config.null_tolerance}}},
        {"eigenvalues", std::vector<double>(basis.eigenvalues.begin(), basis.eigenvalues.end())},
        {"cumulative_fluctuation_fraction",
         std::vector<double>(basis.cumulative_fraction.begin(), basis.cumulative_fraction.end())},
    };
    std::ofstream side(path.string() + ".json");
    if (!side) throw IoError("cannot write basis sidecar " + path.string() + ".json");
    side << sidecar.dump(2) << '\n';
}

NormalModeBasis read_basis(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open basis file " + path.string());
    std::uint64_t header[2];
    read_raw(in, header, 2, path);
    const auto n = static_cast<Eigen::Index>(header[0]);
    const auto k = static_cast<Eigen::Index>(header[1]);
    NormalModeBasis basis;
    basis.reference.resize(3 * n);
    basis.eigenvalues.resize(k);
    basis.modes.resize(3 * n, k);
    read_raw(in, basis.reference.data(), basis.reference.size(), path);
    read_raw(in, basis.eigenvalues.data(), basis.eigenvalues.size(), path);
    read_raw(in, basis.modes.data(), basis.modes.size(), path);
    std::ifstream side(path.string() + ".json");
    if (side) {
        auto j = nlohmann::json::parse(side, nullptr, false);
        if (!j.is_discarded()) {
            basis.null_count = j.value("null_modes_dropped", 0);
            auto frac = j.value("cumulative_fluctuation_fraction", std::vector<double>{});
            if (static_cast<Eigen::Index>(frac.size()) == k)
                basis.cumulative_fraction = Eigen::Map<Eigen::VectorXd>(frac.data(), k);
        }
    }
    return basis;
}

}  // namespace chainfit
