#include "chainfit/fitter.hpp"

#include "chainfit/analysis.hpp"
#include "chainfit/errors.hpp"
#include "chainfit/parallel.hpp"
#include "chainfit/rng.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace chainfit {

std::string_view to_string(FitMode mode) {
    switch (mode) {
    case FitMode::NWhole: return "N_whole";
    case FitMode::cN: return "cN";
    case FitMode::cR: return "cR";
    case FitMode::cRT: return "cRT";
    case FitMode::Full: return "full";
    }
    return "?";
}

FitMode parse_fit_mode(std::string_view text) {
    for (auto m : {FitMode::NWhole, FitMode::cN, FitMode::cR, FitMode::cRT, FitMode::Full})
        if (text == to_string(m)) return m;
    throw ConfigError("unknown fit mode '" + std::string(text) + "' (expected N_whole, cN, cR, cRT or full)");
}

bool uses_chain_modes(FitMode mode) { return mode == FitMode::cN || mode == FitMode::Full; }
bool uses_whole_modes(FitMode mode) { return mode == FitMode::NWhole; }
bool uses_rotation(FitMode mode) { return mode == FitMode::cR || mode == FitMode::cRT || mode == FitMode::Full; }
bool uses_translation(FitMode mode) { return mode == FitMode::cRT || mode == FitMode::Full; }

void FitConfig::validate() const {
    if (uses_chain_modes(mode) || uses_whole_modes(mode)) {
        if (num_modes < 1) throw ConfigError("mode " + std::string(to_string(mode)) + " needs at least one normal mode");
    }
    if (!(step > 0.0) || !std::isfinite(step)) throw ConfigError("step size must be positive");
    if (iterations < 1) throw ConfigError("iterations must be at least 1");
    if (!(grad_tol >= 0.0)) throw ConfigError("gradient tolerance must be non-negative");
    if (restarts < 1) throw ConfigError("restarts must be at least 1");
    if (trace_every < 1) throw ConfigError("trace_every must be at least 1");
    if (consensus_iterations < 0) throw ConfigError("consensus iterations must be non-negative");
    if (consensus_batch < 1) throw ConfigError("consensus batch must be at least 1");
    if (!(prior_weight >= 0.0) || !std::isfinite(prior_weight)) throw ConfigError("prior weight must be non-negative");
    EnmConfig e = enm;
    e.num_modes = std::max(1, num_modes);
    e.validate();
}

Json to_json(const FitConfig& config) {
    return {{"mode", std::string(to_string(config.mode))},
            {"num_modes", config.num_modes},
            {"step", config.step},
            {"iterations", config.iterations},
            {"grad_tol", config.grad_tol},
            {"restarts", config.restarts},
            {"monotone", config.monotone},
            {"seed", config.seed},
            {"trace_every", config.trace_every},
            {"consensus_iterations", config.consensus_iterations},
            {"consensus_batch", config.consensus_batch},
            {"prior_weight", config.prior_weight},
            {"enm", to_json(config.enm)}};
}

FitConfig fit_config_from_json(const Json& j, FitConfig base) {
    try {
        if (j.contains("mode")) base.mode = parse_fit_mode(j.at("mode").get<std::string>());
        base.num_modes = j.value("num_modes", base.num_modes);
        base.step = j.value("step", base.step);
        base.iterations = j.value("iterations", base.iterations);
        base.grad_tol = j.value("grad_tol", base.grad_tol);
        base.restarts = j.value("restarts", base.restarts);
        base.monotone = j.value("monotone", base.monotone);
        base.seed = j.value("seed", base.seed);
        base.trace_every = j.value("trace_every", base.trace_every);
        base.consensus_iterations = j.value("consensus_iterations", base.consensus_iterations);
        base.consensus_batch = j.value("consensus_batch", base.consensus_batch);
        base.prior_weight = j.value("prior_weight", base.prior_weight);
        if (j.contains("enm")) base.enm = enm_from_json(j.at("enm"), base.enm);
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("malformed fit config: ") + e.what());
    }
    return base;
}

ModelBases prepare_bases(const AtomicStructure& source, const FitConfig& config, unsigned threads) {
    EnmConfig enm = config.enm;
    enm.num_modes = config.num_modes;
    if (uses_whole_modes(config.mode)) return whole_structure_basis(source, enm);
    if (uses_chain_modes(config.mode)) return per_chain_bases(source, enm, threads);
    return {};
}

// ---------------------------------------------------------------------------
// DecoderObjective

DecoderObjective::DecoderObjective(const AtomicStructure& source, const ModelBases& bases, FitMode mode,
                                   const ImagingConfig& imaging, const ImageArray& observed, const GlobalPose& pose)
    : source_(source), bases_(bases), mode_(mode), pose_(pose), observed_(observed), renderer_(imaging) {
    if (observed.rows() != imaging.image_size || observed.cols() != imaging.image_size)
        throw DimensionError("observed image is " + std::to_string(observed.rows()) + "x" +
                             std::to_string(observed.cols()) + ", imaging config expects " +
                             std::to_string(imaging.image_size));
    if (uses_whole_modes(mode)) {
        if (!bases.whole) throw DimensionError("mode N_whole needs a whole-structure basis");
        if (bases.whole->atom_count() != source.atom_count())
            throw DimensionError("whole-structure basis does not match the source reference");
        whole_at_ = dimension_;
        whole_size_ = bases.whole->mode_count();
        dimension_ += whole_size_;
    }
    if (uses_chain_modes(mode) && bases.chains.size() != source.chain_count())
        throw DimensionError("mode " + std::string(to_string(mode)) + " needs one basis per chain");

    for (std::size_t c = 0; c < source.chain_count(); ++c) {
        const auto& chain = source.chains()[c];
        ChainBlock b;
        b.begin = chain.begin;
        b.size = chain.size();
        Eigen::VectorXd ref = source.chain_coords(chain);
        b.pivot = centroid(ref);
        double r2 = 0.0;
        for (std::size_t j = 0; j < b.size; ++j) r2 += (ref.segment<3>(3 * j) - b.pivot).squaredNorm();
        b.rms_radius = std::max(1.0, std::sqrt(r2 / static_cast<double>(b.size)));
        if (uses_chain_modes(mode)) {
            const auto& basis = bases.chains[c];
            if (basis.atom_count() != chain.size())
                throw DimensionError("chain " + chain.id + ": basis atom count does not match the source");
            b.alpha_at = dimension_;
            b.alpha_size = basis.mode_count();
            dimension_ += b.alpha_size;
        }
        if (uses_rotation(mode)) {
            b.v1_at = dimension_;
            b.v2_at = dimension_ + 3;
            dimension_ += 6;
        }
        if (uses_translation(mode)) {
            b.t_at = dimension_;
            dimension_ += 3;
        }
        blocks_.push_back(b);
    }
}

Eigen::VectorXd DecoderObjective::identity_params() const { return pack(LatentState::identity(source_, bases_)); }

Eigen::VectorXd DecoderObjective::pack(const LatentState& state) const {
    if (state.chains.size() != blocks_.size()) throw DimensionError("latent state chain count mismatch");
    Eigen::VectorXd p = Eigen::VectorXd::Zero(dimension_);
    if (whole_at_ >= 0) {
        if (state.whole_alpha.size() != whole_size_) throw DimensionError("whole-structure mode weight length mismatch");
        p.segment(whole_at_, whole_size_) = state.whole_alpha;
    }
    for (std::size_t c = 0; c < blocks_.size(); ++c) {
        const auto& b = blocks_[c];
        const auto& l = state.chains[c];
        if (b.alpha_at >= 0) {
            if (l.alpha.size() != b.alpha_size)
                throw DimensionError("chain " + l.chain_id + ": mode weight length mismatch");
            p.segment(b.alpha_at, b.alpha_size) = l.alpha;
        }
        if (b.v1_at >= 0) {
            p.segment<3>(b.v1_at) = l.v1;
            p.segment<3>(b.v2_at) = l.v2;
        }
        if (b.t_at >= 0) p.segment<3>(b.t_at) = l.translation;
    }
    return p;
}

LatentState DecoderObjective::unpack(const Eigen::Ref<const Eigen::VectorXd>& params) const {
    if (params.size() != dimension_) throw DimensionError("parameter vector length mismatch");
    LatentState state = LatentState::identity(source_, bases_);
    state.pose = pose_;
    if (whole_at_ >= 0) state.whole_alpha = params.segment(whole_at_, whole_size_);
    for (std::size_t c = 0; c < blocks_.size(); ++c) {
        const auto& b = blocks_[c];
        auto& l = state.chains[c];
        if (b.alpha_at >= 0) l.alpha = params.segment(b.alpha_at, b.alpha_size);
        if (b.v1_at >= 0) {
            l.v1 = params.segment<3>(b.v1_at);
            l.v2 = params.segment<3>(b.v2_at);
        }
        if (b.t_at >= 0) l.translation = params.segment<3>(b.t_at);
    }
    return state;
}

Eigen::VectorXd DecoderObjective::coords(const Eigen::Ref<const Eigen::VectorXd>& params) const {
    return compose_coords(source_, bases_, unpack(params));
}

double DecoderObjective::evaluate(const Eigen::Ref<const Eigen::VectorXd>& params, Eigen::VectorXd* grad) {
    if (params.size() != dimension_) throw DimensionError("parameter vector length mismatch");
    // Deformed (pre-rotation) coordinates and per-chain rotations.
    Eigen::VectorXd deformed = source_.coords();
    if (whole_at_ >= 0) deformed.noalias() += bases_.whole->modes * params.segment(whole_at_, whole_size_);

    std::vector<Eigen::Matrix3d> rotations(blocks_.size(), Eigen::Matrix3d::Identity());
    Eigen::VectorXd x(deformed.size());
    for (std::size_t c = 0; c < blocks_.size(); ++c) {
        const auto& b = blocks_[c];
        auto seg = deformed.segment(3 * b.begin, 3 * b.size);
        if (b.alpha_at >= 0) seg.noalias() += bases_.chains[c].modes * params.segment(b.alpha_at, b.alpha_size);
        Eigen::Vector3d t = b.t_at >= 0 ? Eigen::Vector3d(params.segment<3>(b.t_at)) : Eigen::Vector3d::Zero();
        if (b.v1_at >= 0) rotations[c] = gram_schmidt_rotation(params.segment<3>(b.v1_at), params.segment<3>(b.v2_at));
        const Eigen::Matrix3d& r = rotations[c];
        const Eigen::Vector3d offset = b.pivot + t;
        const bool identity = r == Eigen::Matrix3d::Identity();
        for (std::size_t j = 0; j < b.size; ++j) {
            const auto k = static_cast<Eigen::Index>(3 * (b.begin + j));
            if (identity) x.segment<3>(k) = deformed.segment<3>(k) + t;
            else x.segment<3>(k) = r * (deformed.segment<3>(k) - b.pivot) + offset;
        }
    }

    renderer_.render(x, pose_, image_);
    residual_ = image_ - observed_;
    const double mse = residual_.squaredNorm() / static_cast<double>(residual_.size());
    if (!grad) return mse;

    renderer_.backward(residual_, atom_grad_);
    grad->setZero(dimension_);
    // Gradient w.r.t. the deformed coordinates: R^T g per atom.
    Eigen::VectorXd deformed_grad(atom_grad_.size());
    for (std::size_t c = 0; c < blocks_.size(); ++c) {
        const auto& b = blocks_[c];
        const Eigen::Matrix3d& r = rotations[c];
        Eigen::Matrix3d g_rot = Eigen::Matrix3d::Zero();
        Eigen::Vector3d g_t = Eigen::Vector3d::Zero();
        for (std::size_t j = 0; j < b.size; ++j) {
            const auto k = static_cast<Eigen::Index>(3 * (b.begin + j));
            const Eigen::Vector3d g = atom_grad_.segment<3>(k);
            deformed_grad.segment<3>(k) = r.transpose() * g;
            g_t += g;
            g_rot.noalias() += g * (deformed.segment<3>(k) - b.pivot).transpose();
        }
        if (b.t_at >= 0) grad->segment<3>(b.t_at) = g_t;
        if (b.v1_at >= 0) {
            auto [g1, g2] = gram_schmidt_backward(params.segment<3>(b.v1_at), params.segment<3>(b.v2_at), g_rot);
            grad->segment<3>(b.v1_at) = g1;
            grad->segment<3>(b.v2_at) = g2;
        }
        if (b.alpha_at >= 0)
            grad->segment(b.alpha_at, b.alpha_size).noalias() =
                bases_.chains[c].modes.transpose() * deformed_grad.segment(3 * b.begin, 3 * b.size);
    }
    if (whole_at_ >= 0) grad->segment(whole_at_, whole_size_).noalias() = bases_.whole->modes.transpose() * deformed_grad;
    return mse;
}

Eigen::VectorXd DecoderObjective::step_scales() const {
    Eigen::VectorXd s = Eigen::VectorXd::Ones(dimension_);
    if (whole_at_ >= 0) s.segment(whole_at_, whole_size_).setConstant(std::sqrt(static_cast<double>(source_.atom_count())));
    for (const auto& b : blocks_) {
        if (b.alpha_at >= 0) s.segment(b.alpha_at, b.alpha_size).setConstant(std::sqrt(static_cast<double>(b.size)));
        if (b.v1_at >= 0) s.segment(b.v1_at, 6).setConstant(1.0 / b.rms_radius);
    }
    return s;
}

// ---------------------------------------------------------------------------
// Optimizer

namespace {

constexpr double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-12;

struct RunResult {
    Eigen::VectorXd params;
    double loss = 0.0;
    double mse = 0.0;
    int iterations = 0;
    std::vector<double> trace;
};

// MSE plus the displacement penalty toward `anchor`.
class PenalizedObjective {
public:
    PenalizedObjective(DecoderObjective& objective, const Eigen::VectorXd& anchor, double weight)
        : objective_(objective), anchor_(anchor), weight_(weight) {
        inv_scale2_ = objective.step_scales().cwiseAbs2().cwiseInverse();
    }

    double evaluate(const Eigen::VectorXd& params, Eigen::VectorXd* grad, double& mse) {
        mse = objective_.evaluate(params, grad);
        if (weight_ == 0.0) return mse;
        const Eigen::VectorXd d = params - anchor_;
        if (grad) *grad += (2.0 * weight_) * d.cwiseProduct(inv_scale2_);
        return mse + weight_ * d.cwiseAbs2().dot(inv_scale2_);
    }

private:
    DecoderObjective& objective_;
    const Eigen::VectorXd& anchor_;
    double weight_;
    Eigen::VectorXd inv_scale2_;
};

RunResult run_adam(DecoderObjective& decoder, const Eigen::VectorXd& anchor, Eigen::VectorXd params,
                   const FitConfig& config) {
    constexpr double beta1 = adam_beta1, beta2 = adam_beta2, eps = adam_eps;
    PenalizedObjective objective(decoder, anchor, config.prior_weight);
    const Eigen::VectorXd lr = config.step * decoder.step_scales();
    const Eigen::Index n = params.size();
    Eigen::VectorXd m = Eigen::VectorXd::Zero(n), v = Eigen::VectorXd::Zero(n), grad(n), trial_grad(n);

    RunResult best;
    double mse = 0.0, trial_mse = 0.0;
    double loss = objective.evaluate(params, &grad, mse);
    if (!std::isfinite(loss)) throw DivergenceError("non-finite loss", 0, config.step);
    best.params = params;
    best.loss = loss;
    best.mse = mse;
    best.trace.push_back(loss);

    int it = 0;
    for (; it < config.iterations; ++it) {
        if (grad.norm() <= config.grad_tol) break;
        m = beta1 * m + (1.0 - beta1) * grad;
        v = beta2 * v + (1.0 - beta2) * grad.cwiseAbs2();
        const double c1 = 1.0 - std::pow(beta1, it + 1), c2 = 1.0 - std::pow(beta2, it + 1);
        Eigen::VectorXd direction = (m / c1).array() / ((v / c2).array().sqrt() + eps);
        direction.array() *= lr.array();

        double scale = 1.0;
        Eigen::VectorXd trial = params - direction;
        double trial_loss = objective.evaluate(trial, &trial_grad, trial_mse);
        if (config.monotone) {
            int halvings = 0;
            while (!(trial_loss <= loss) && halvings < 12) {
                scale *= 0.5;
                ++halvings;
                trial = params - scale * direction;
                trial_loss = objective.evaluate(trial, &trial_grad, trial_mse);
            }
            if (!(trial_loss <= loss)) {
                ++it;
                break;  // no descent along the Adam direction
            }
        }
        if (!std::isfinite(trial_loss)) throw DivergenceError("non-finite loss", it + 1, config.step * scale);
        params = trial;
        loss = trial_loss;
        grad = trial_grad;
        if ((it + 1) % config.trace_every == 0) best.trace.push_back(loss);
        if (loss < best.loss) {
            best.loss = loss;
            best.mse = trial_mse;
            best.params = params;
        }
    }
    best.iterations = it;
    return best;
}

Eigen::Matrix3d small_random_rotation(Rng& rng, double max_angle) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.0, max_angle);
    Eigen::Vector3d axis(normal(rng), normal(rng), normal(rng));
    return Eigen::AngleAxisd(uniform(rng), axis.normalized()).toRotationMatrix();
}

}  // namespace

FitEntry fit_image(const ImageArray& image, const GlobalPose& pose, const AtomicStructure& source,
                   const ModelBases& bases, const FitConfig& config, const ImagingConfig& imaging, std::size_t index,
                   const LatentState* anchor) {
    config.validate();
    DecoderObjective objective(source, bases, config.mode, imaging, image, pose);
    const int restarts = uses_rotation(config.mode) ? config.restarts : 1;
    const LatentState base = anchor ? *anchor : LatentState::identity(source, bases);
    const Eigen::VectorXd anchor_params = objective.pack(base);

    FitEntry entry;
    entry.index = index;
    bool have = false;
    RunResult kept;
    for (int r = 0; r < restarts; ++r) {
        LatentState start = base;
        if (r > 0) {
            Rng rng = derive_rng(config.seed, index, 100 + static_cast<std::uint64_t>(r));
            for (auto& chain : start.chains) {
                Eigen::Matrix3d q = small_random_rotation(rng, 10.0 * std::numbers::pi / 180.0) * chain.rotation();
                chain.v1 = q.col(0);
                chain.v2 = q.col(1);
            }
        }
        RunResult run = run_adam(objective, anchor_params, objective.pack(start), config);
        if (!have || run.loss < kept.loss) {
            kept = std::move(run);
            entry.restart = r;
            have = true;
        }
    }
    entry.ok = true;
    entry.latents = objective.unpack(kept.params);
    entry.mse = kept.mse;
    entry.iterations = kept.iterations;
    entry.loss_trace = std::move(kept.trace);
    return entry;
}

void recompute_aggregate(FitReport& report) {
    FitAggregate agg;
    std::vector<double> rmsds;
    double mse_sum = 0.0;
    for (const auto& e : report.entries) {
        if (!e.ok) {
            ++agg.failed;
            continue;
        }
        ++agg.ok;
        mse_sum += e.mse;
        if (e.rmsd) rmsds.push_back(*e.rmsd);
    }
    agg.mse_mean = agg.ok ? mse_sum / static_cast<double>(agg.ok) : 0.0;
    if (!rmsds.empty()) {
        const double n = static_cast<double>(rmsds.size());
        double sum = 0.0;
        for (double r : rmsds) sum += r;
        const double mean = sum / n;
        double var = 0.0;
        for (double r : rmsds) var += (r - mean) * (r - mean);
        std::vector<double> sorted = rmsds;
        std::sort(sorted.begin(), sorted.end());
        const std::size_t mid = sorted.size() / 2;
        agg.rmsd_mean = mean;
        agg.rmsd_std = std::sqrt(var / n);
        agg.rmsd_median = sorted.size() % 2 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
        agg.rmsd_min = sorted.front();
        agg.rmsd_max = sorted.back();
    }
    report.aggregate = agg;
}

LatentState fit_consensus(const ImageStack& stack, const AtomicStructure& source, const ModelBases& bases,
                          const FitConfig& config, unsigned threads) {
    config.validate();
    stack.check_consistency();
    if (stack.count == 0) throw EmptyInputError("cannot fit a consensus to an empty stack");
    const ImageArray probe = stack.image(0);
    const DecoderObjective layout(source, bases, config.mode, stack.imaging, probe, stack.poses[0]);
    const Eigen::Index n = layout.dimension();
    const Eigen::VectorXd lr = config.step * layout.step_scales();
    Eigen::VectorXd params = layout.identity_params();
    Eigen::VectorXd m = Eigen::VectorXd::Zero(n), v = Eigen::VectorXd::Zero(n), grad(n);

    const auto batch = static_cast<std::size_t>(config.consensus_batch);
    std::vector<std::size_t> picks(batch);
    std::vector<Eigen::VectorXd> grads(batch);
    Rng rng = derive_rng(config.seed, 0, 200);
    std::uniform_int_distribution<std::size_t> pick(0, stack.count - 1);
    for (int it = 0; it < config.consensus_iterations; ++it) {
        for (auto& p : picks) p = pick(rng);
        parallel_for(batch, threads, [&](std::size_t b) {
            const ImageArray image = stack.image(picks[b]);
            DecoderObjective objective(source, bases, config.mode, stack.imaging, image, stack.poses[picks[b]]);
            const double loss = objective.evaluate(params, &grads[b]);
            if (!std::isfinite(loss)) throw DivergenceError("non-finite consensus loss", it, config.step);
        });
        grad.setZero();
        for (const auto& g : grads) grad += g;
        grad /= static_cast<double>(batch);

        m = adam_beta1 * m + (1.0 - adam_beta1) * grad;
        v = adam_beta2 * v + (1.0 - adam_beta2) * grad.cwiseAbs2();
        const double c1 = 1.0 - std::pow(adam_beta1, it + 1), c2 = 1.0 - std::pow(adam_beta2, it + 1);
        const double decay = 1.0 - 0.9 * it / static_cast<double>(config.consensus_iterations);
        params.array() -= decay * lr.array() * (m / c1).array() / ((v / c2).array().sqrt() + adam_eps);
    }
    LatentState state = layout.unpack(params);
    state.pose = GlobalPose{};
    return state;
}

FitReport fit_stack(const ImageStack& stack, const AtomicStructure& source, const ModelBases& bases,
                    const FitConfig& config, unsigned threads) {
    config.validate();
    stack.check_consistency();
    FitReport report;
    report.config = config;
    report.imaging = stack.imaging;
    report.entries.resize(stack.count);
    const bool with_gt = stack.has_ground_truth_structures() &&
                         stack.gt_structures.rows() == static_cast<Eigen::Index>(3 * source.atom_count());

    if (config.consensus_iterations > 0) report.consensus = fit_consensus(stack, source, bases, config, threads);
    const LatentState* anchor = report.consensus ? &*report.consensus : nullptr;

    parallel_for(stack.count, threads, [&](std::size_t i) {
        FitEntry entry;
        try {
            entry = fit_image(stack.image(i), stack.poses[i], source, bases, config, stack.imaging, i, anchor);
            if (with_gt)
                entry.rmsd = rmsd(compose_coords(source, bases, entry.latents),
                                  stack.gt_structures.col(static_cast<Eigen::Index>(i)));
        } catch (const Error& e) {
            entry = FitEntry{};
            entry.index = i;
            entry.ok = false;
            entry.error = e.what();
        }
        report.entries[i] = std::move(entry);
    });
    recompute_aggregate(report);
    return report;
}

Json to_json(const FitReport& report) {
    Json entries = Json::array();
    for (const auto& e : report.entries) {
        Json j = {{"index", e.index}, {"ok", e.ok}};
        if (!e.ok) {
            j["error"] = e.error;
        } else {
            j["mse"] = e.mse;
            j["iterations"] = e.iterations;
            j["restart"] = e.restart;
            j["rmsd"] = e.rmsd ? Json(*e.rmsd) : Json(nullptr);
            j["latents"] = to_json(e.latents);
            j["loss_trace"] = e.loss_trace;
        }
        entries.push_back(std::move(j));
    }
    auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); };
    const auto& a = report.aggregate;
    return {{"format", "chainfit-fit-report-1"},
            {"config", to_json(report.config)},
            {"imaging", to_json(report.imaging)},
            {"source", {{"path", report.source_path}, {"digest", report.source_digest}, {"ca_only", report.ca_only}}},
            {"stack", report.stack_path},
            {"consensus", report.consensus ? to_json(*report.consensus) : Json(nullptr)},
            {"aggregate",
             {{"ok", a.ok},
              {"failed", a.failed},
              {"mse_mean", a.mse_mean},
              {"rmsd_mean", opt(a.rmsd_mean)},
              {"rmsd_median", opt(a.rmsd_median)},
              {"rmsd_std", opt(a.rmsd_std)},
              {"rmsd_min", opt(a.rmsd_min)},
              {"rmsd_max", opt(a.rmsd_max)}}},
            {"entries", entries}};
}

FitReport report_from_json(const Json& j) {
    FitReport report;
    try {
        report.config = fit_config_from_json(j.at("config"));
        report.imaging = imaging_from_json(j.at("imaging"));
        if (j.contains("source")) {
            const auto& s = j.at("source");
            report.source_path = s.value("path", "");
            report.source_digest = s.value("digest", "");
            report.ca_only = s.value("ca_only", false);
        }
        report.stack_path = j.value("stack", "");
        if (j.contains("consensus") && !j.at("consensus").is_null())
            report.consensus = latent_from_json(j.at("consensus"));
        for (const auto& e : j.at("entries")) {
            FitEntry entry;
            entry.index = e.at("index").get<std::size_t>();
            entry.ok = e.at("ok").get<bool>();
            if (!entry.ok) {
                entry.error = e.value("error", "");
            } else {
                entry.mse = e.at("mse").get<double>();
                entry.iterations = e.value("iterations", 0);
                entry.restart = e.value("restart", 0);
                if (e.contains("rmsd") && !e.at("rmsd").is_null()) entry.rmsd = e.at("rmsd").get<double>();
                entry.latents = latent_from_json(e.at("latents"));
                entry.loss_trace = e.value("loss_trace", std::vector<double>{});
            }
            report.entries.push_back(std::move(entry));
        }
    } catch (const Json::exception& e) {
        throw ParseError(std::string("malformed fit report: ") + e.what(), 0);
    }
    recompute_aggregate(report);
    return report;
}

std::vector<AtomicStructure> fitted_structures(const FitReport& report, const AtomicStructure& source,
                                               const ModelBases& bases) {
    std::vector<AtomicStructure> out;
    for (const auto& e : report.entries)
        if (e.ok) out.push_back(compose_structure(source, bases, e.latents));
    return out;
}

}  // namespace chainfit
