#pragma once

#include "chainfit/imaging.hpp"
#include "chainfit/nma.hpp"
#include "chainfit/rigid.hpp"
#include "chainfit/rng.hpp"
#include "chainfit/serialization.hpp"
#include "chainfit/stack.hpp"
#include "chainfit/structure.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

namespace chainfit {

struct GmmComponent {
    double weight = 0.5;
    double mean = 0.0;
    double stddev = 0.25;
};

/// How heterogeneous conformations are drawn. Mode weights are
/// alpha_k = sqrt(N / K) d with d from the mixture, drawn independently per
/// chain and mode; chains are then rotated about their centroid by
/// R_z R_y R_x with each angle uniform in [-half_angle, +half_angle].
struct HeterogeneityRecipe {
    int num_modes = 15;
    std::vector<GmmComponent> gmm{{0.5, 0.0, 0.25}, {0.5, 2.5, 0.25}};
    Eigen::Vector3d rotation_half_angles_deg{5.0, 5.0, 5.0};
    std::size_t train_count = 50000;
    std::size_t val_count = 5000;
    std::size_t test_count = 5000;
    std::optional<double> snr_db;  // overrides the imaging config when set
    std::uint64_t seed = 0;

    /// Throws ConfigError.
    void validate() const;
};

Json to_json(const HeterogeneityRecipe& recipe);
HeterogeneityRecipe recipe_from_json(const Json& j, HeterogeneityRecipe base = {});

/// One mixture draw; `component` receives the chosen component index.
double sample_gmm(const std::vector<GmmComponent>& gmm, Rng& rng, int* component = nullptr);

/// Mixture CDF, used to validate the sampler.
double gmm_cdf(const std::vector<GmmComponent>& gmm, double x);

struct SampledConformation {
    AtomicStructure structure;
    LatentState latents;                     // exact generating latents, pose left at identity
    std::vector<Eigen::Vector3d> angles_rad;  // per chain (x, y, z)
};

/// Draws a conformation around `reference` using per-chain `bases` built on
/// that reference. Throws CapacityError if a basis has fewer than
/// recipe.num_modes modes.
SampledConformation sample_conformation(const AtomicStructure& reference, const ModelBases& bases,
                                        const HeterogeneityRecipe& recipe, Rng& rng);

/// Uniform rotation on SO(3) (uniform unit quaternion) and a shift uniform
/// in [-D/16, D/16] px per axis.
GlobalPose sample_pose(int image_size, Rng& rng);

/// `count` images of one split; image i draws everything from the stream
/// derive_rng(seed, i, split_salt), so results do not depend on `threads`.
ImageStack generate_split(const AtomicStructure& gt_reference, const ModelBases& gt_bases,
                          const HeterogeneityRecipe& recipe, const ImagingConfig& imaging, std::size_t count,
                          std::uint64_t split_salt, unsigned threads = 1);

struct Dataset {
    ImageStack train, val, test;
};

/// Train/val/test splits; when `out_path` is given each split is written to
/// out_path/<split>/.
Dataset generate_dataset(const AtomicStructure& gt_reference, const ModelBases& gt_bases,
                         const HeterogeneityRecipe& recipe, const ImagingConfig& imaging,
                         const std::optional<std::filesystem::path>& out_path, unsigned threads = 1);

struct MorphRecipe {
    int num_steps = 50;
    std::size_t count = 50;  // images; image i shows step i % num_steps
    std::uint64_t seed = 0;

    void validate() const;
};

/// (1 - s) A + s B with s = k / (num_steps - 1).
Eigen::VectorXd morph_coords(const AtomicStructure& a, const AtomicStructure& b, double s);

ImageStack generate_morph_dataset(const AtomicStructure& conf_a, const AtomicStructure& conf_b,
                                  const MorphRecipe& recipe, const ImagingConfig& imaging,
                                  const std::optional<std::filesystem::path>& out_path, unsigned threads = 1);

/// Synthetic multi-chain Calpha-like assembly: each chain is a compact
/// self-avoiding walk (3.8 Å steps, >= 4 Å non-bonded spacing) inside a
/// sphere, with sphere centres spaced along x so neighbouring chains touch.
/// Coordinates are rounded to 1e-3 Å so they survive a PDB round trip.
struct ToyAssemblyConfig {
    int chains = 2;
    int atoms_per_chain = 100;
    double chain_radius = 13.0;  // Å
    double chain_gap = 1.0;      // Å between neighbouring spheres
    std::uint64_t seed = 7;
};
AtomicStructure make_toy_assembly(const ToyAssemblyConfig& config);

}  // namespace chainfit
