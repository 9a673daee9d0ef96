#pragma once

#include "chainfit/imaging.hpp"
#include "chainfit/nma.hpp"
#include "chainfit/rigid.hpp"
#include "chainfit/serialization.hpp"
#include "chainfit/stack.hpp"
#include "chainfit/structure.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace chainfit {

/// Which latent blocks the fitter optimizes.
///   NWhole  whole-structure modes only
///   cN      per-chain modes only
///   cR      per-chain rotations only
///   cRT     per-chain rotations and translations
///   Full    per-chain modes, rotations and translations
enum class FitMode { NWhole, cN, cR, cRT, Full };

std::string_view to_string(FitMode mode);
/// Accepts "N_whole", "cN", "cR", "cRT", "full". Throws ConfigError.
FitMode parse_fit_mode(std::string_view text);

bool uses_chain_modes(FitMode mode);
bool uses_whole_modes(FitMode mode);
bool uses_rotation(FitMode mode);
bool uses_translation(FitMode mode);

struct FitConfig {
    FitMode mode = FitMode::Full;
    int num_modes = 50;  // per chain, or for the whole structure in NWhole mode
    /// Adam learning rate, expressed as the RMS atom displacement (Å) one
    /// step of any single parameter produces (see DecoderObjective::step_scales).
    double step = 0.01;
    int iterations = 500;
    double grad_tol = 1e-6;
    int restarts = 1;
    /// Backtrack rejected Adam proposals so accepted losses never increase.
    bool monotone = false;
    std::uint64_t seed = 0;
    int trace_every = 1;
    /// When positive, fit_stack first fits one latent state shared by all
    /// images (minibatch Adam) and starts every per-image fit from it.
    int consensus_iterations = 0;
    int consensus_batch = 32;
    /// Weight of a quadratic penalty on the approximate mean squared atom
    /// displacement (Å^2) between a fit and its starting latents.
    double prior_weight = 0.0;
    EnmConfig enm;  // cutoff / spring constant; num_modes comes from above

    /// Throws ConfigError.
    void validate() const;
};

Json to_json(const FitConfig& config);
FitConfig fit_config_from_json(const Json& j, FitConfig base = {});

/// Bases required by the mode, built on the source reference.
ModelBases prepare_bases(const AtomicStructure& source, const FitConfig& config, unsigned threads = 1);

/// Pixel MSE between an observed image and the decoder output, as a function
/// of the flat vector of active latent parameters. Layout per chain, for the
/// active blocks only: alpha (K), v1 (3), v2 (3), t (3); whole-structure
/// alpha comes first in NWhole mode. Inactive blocks stay at identity.
class DecoderObjective {
public:
    DecoderObjective(const AtomicStructure& source, const ModelBases& bases, FitMode mode,
                     const ImagingConfig& imaging, const ImageArray& observed, const GlobalPose& pose);

    Eigen::Index dimension() const { return dimension_; }
    Eigen::VectorXd pack(const LatentState& state) const;
    LatentState unpack(const Eigen::Ref<const Eigen::VectorXd>& params) const;
    Eigen::VectorXd identity_params() const;

    /// Composed coordinates for a parameter vector.
    Eigen::VectorXd coords(const Eigen::Ref<const Eigen::VectorXd>& params) const;

    /// MSE; fills `grad` (d MSE / d params) when non-null.
    double evaluate(const Eigen::Ref<const Eigen::VectorXd>& params, Eigen::VectorXd* grad);

    /// Per-parameter factor turning a displacement scale in Å into a
    /// parameter step: sqrt(n) for mode weights, 1 for translations and
    /// 1 / rms_radius for rotation vectors.
    Eigen::VectorXd step_scales() const;

private:
    struct ChainBlock {
        std::size_t begin = 0, size = 0;  // atom range
        Eigen::Vector3d pivot;
        double rms_radius = 1.0;
        Eigen::Index alpha_at = -1, v1_at = -1, v2_at = -1, t_at = -1;
        int alpha_size = 0;
    };

    const AtomicStructure& source_;
    const ModelBases& bases_;
    FitMode mode_;
    GlobalPose pose_;
    const ImageArray& observed_;
    Renderer renderer_;
    std::vector<ChainBlock> blocks_;
    Eigen::Index whole_at_ = -1;
    int whole_size_ = 0;
    Eigen::Index dimension_ = 0;

    ImageArray image_, residual_;
    Eigen::VectorXd atom_grad_;
};

struct FitEntry {
    std::size_t index = 0;
    bool ok = false;
    std::string error;
    LatentState latents;
    double mse = 0.0;
    int iterations = 0;
    int restart = 0;  // restart that produced the kept result
    std::vector<double> loss_trace;
    std::optional<double> rmsd;  // to ground truth, when available
};

struct FitAggregate {
    std::size_t ok = 0, failed = 0;
    std::optional<double> rmsd_mean, rmsd_median, rmsd_std, rmsd_min, rmsd_max;
    double mse_mean = 0.0;
};

struct FitReport {
    FitConfig config;
    ImagingConfig imaging;
    std::string source_path;
    std::string source_digest;
    bool ca_only = false;
    std::string stack_path;
    std::optional<LatentState> consensus;
    std::vector<FitEntry> entries;
    FitAggregate aggregate;
};

/// Fits one image starting from `anchor` (identity latents when null).
/// Returns the lowest-loss iterate over all restarts. Throws
/// DivergenceError on a non-finite loss.
FitEntry fit_image(const ImageArray& image, const GlobalPose& pose, const AtomicStructure& source,
                   const ModelBases& bases, const FitConfig& config, const ImagingConfig& imaging,
                   std::size_t index = 0, const LatentState* anchor = nullptr);

/// Latent state minimizing the mean MSE over the whole stack. Uses
/// config.consensus_iterations minibatch Adam steps with a linearly
/// decaying step. The result does not depend on the thread count.
LatentState fit_consensus(const ImageStack& stack, const AtomicStructure& source, const ModelBases& bases,
                          const FitConfig& config, unsigned threads = 1);

/// Independent fits of every image, preceded by the consensus fit when
/// enabled; per-image failures are recorded, not thrown. Adds RMSD to ground truth when the stack carries it.
FitReport fit_stack(const ImageStack& stack, const AtomicStructure& source, const ModelBases& bases,
                    const FitConfig& config, unsigned threads = 1);

void recompute_aggregate(FitReport& report);

Json to_json(const FitReport& report);
FitReport report_from_json(const Json& j);

/// Composed coordinates of every successful entry, in entry order.
std::vector<AtomicStructure> fitted_structures(const FitReport& report, const AtomicStructure& source,
                                               const ModelBases& bases);

}  // namespace chainfit
