#include "chainfit/cli.hpp"

#include "chainfit/analysis.hpp"
#include "chainfit/datagen.hpp"
#include "chainfit/errors.hpp"
#include "chainfit/fitter.hpp"
#include "chainfit/nma.hpp"
#include "chainfit/parallel.hpp"
#include "chainfit/serialization.hpp"
#include "chainfit/stack.hpp"
#include "chainfit/structure.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;

namespace chainfit {

namespace {

constexpr const char* tool_version = "0.1.0";

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("failed writing " + path.string());
}

void ensure_parent(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

/// Config files are user input: anything wrong with them is a config error.
Json load_config_file(const std::string& path) {
    try {
        return read_json_file(path);
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
}

struct Common {
    unsigned threads = 0;
    std::optional<std::uint64_t> seed_flag;
    bool ca_only = false;
};

/// Flag, then config file, then CHAINFIT_SEED, then 0.
std::uint64_t resolve_seed(const Common& common, std::optional<std::uint64_t> from_config) {
    if (common.seed_flag) return *common.seed_flag;
    if (from_config) return *from_config;
    if (const char* env = std::getenv("CHAINFIT_SEED"); env && *env) {
        char* end = nullptr;
        errno = 0;
        const unsigned long long v = std::strtoull(env, &end, 10);
        if (errno != 0 || *end != '\0' || env[0] == '-') throw ConfigError(std::string("CHAINFIT_SEED is not an unsigned integer: ") + env);
        return v;
    }
    return 0;
}

unsigned resolve_threads(const Common& common) { return common.threads == 0 ? default_thread_count() : common.threads; }

AtomicStructure load_structure(const std::string& path, bool ca_only) {
    AtomicStructure s = read_structure(path);
    if (ca_only) s = filter_atom_name(s, "CA");
    return s;
}

struct ImagingFlags {
    std::string file;
    std::optional<int> image_size;
    std::optional<double> pixel_size, blob_sigma, psf_sigma, snr;

    void add(CLI::App* app) {
        app->add_option("--imaging", file, "Imaging config JSON");
        app->add_option("--image-size", image_size, "Image side length D in pixels");
        app->add_option("--pixel-size", pixel_size, "Pixel size in Å");
        app->add_option("--blob-sigma", blob_sigma, "Per-atom Gaussian width in Å");
        app->add_option("--psf-sigma", psf_sigma, "Gaussian PSF width in pixels");
        app->add_option("--snr", snr, "SNR in dB; omit for noise-free images");
    }

    ImagingConfig resolve(ImagingConfig base = {}) const {
        ImagingConfig c = file.empty() ? base : imaging_from_json(load_config_file(file), base);
        if (image_size) c.image_size = *image_size;
        if (pixel_size) c.pixel_size = *pixel_size;
        if (blob_sigma) c.blob_sigma = *blob_sigma;
        if (psf_sigma) c.psf_sigma = *psf_sigma;
        if (snr) c.snr_db = *snr;
        c.validate();
        return c;
    }
};

class Manifest {
public:
    Manifest(std::string subcommand, const std::vector<std::string>& args)
        : subcommand_(std::move(subcommand)), args_(args), start_(std::chrono::steady_clock::now()) {}

    void config(Json j) { config_ = std::move(j); }
    void seed(std::uint64_t s) { seed_ = s; }
    void threads(unsigned t) { threads_ = t; }
    void input(const std::string& path) {
        if (fs::is_directory(path)) {
            for (const auto& entry : fs::directory_iterator(path))
                if (entry.is_regular_file() && entry.path().filename() != "manifest.json")
                    inputs_[entry.path().string()] = file_digest(entry.path());
        } else {
            inputs_[path] = file_digest(path);
        }
    }
    void output(const fs::path& p) { outputs_.push_back(p.string()); }

    void write(const fs::path& path) const {
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        Json j = {{"tool", "chainfit"},
                  {"version", tool_version},
                  {"subcommand", subcommand_},
                  {"arguments", args_},
                  {"config", config_},
                  {"seed", seed_ ? Json(*seed_) : Json(nullptr)},
                  {"threads", threads_},
                  {"inputs", inputs_},
                  {"outputs", outputs_},
                  {"wall_clock_seconds", elapsed}};
        write_json_file(path, j);
    }

private:
    std::string subcommand_;
    std::vector<std::string> args_;
    std::chrono::steady_clock::time_point start_;
    Json config_ = Json::object();
    std::optional<std::uint64_t> seed_;
    unsigned threads_ = 0;
    std::map<std::string, std::string> inputs_;
    std::vector<std::string> outputs_;
};

fs::path manifest_beside(const fs::path& file) { return fs::path(file.string() + ".manifest.json"); }

// ---------------------------------------------------------------------------

struct NmaArgs {
    std::string pdb, out, config;
    std::optional<int> k;
    std::optional<double> cutoff, gamma;
    bool whole = false;
};

int cmd_nma(const NmaArgs& a, const Common& common, Manifest& manifest, std::ostream& out) {
    EnmConfig enm;
    if (!a.config.empty()) enm = enm_from_json(load_config_file(a.config));
    if (a.k) enm.num_modes = *a.k;
    if (a.cutoff) enm.cutoff = *a.cutoff;
    if (a.gamma) enm.spring_constant = *a.gamma;
    enm.validate();

    const AtomicStructure s = load_structure(a.pdb, common.ca_only);
    const unsigned threads = resolve_threads(common);
    const ModelBases bases = a.whole ? whole_structure_basis(s, enm) : per_chain_bases(s, enm, threads);

    fs::create_directories(a.out);
    if (a.whole) {
        const fs::path p = fs::path(a.out) / "whole.basis";
        write_basis(p, *bases.whole, enm, "whole");
        manifest.output(p);
        out << "whole structure: " << bases.whole->mode_count() << " modes over " << s.atom_count() << " atoms\n";
    } else {
        for (std::size_t c = 0; c < s.chain_count(); ++c) {
            const auto& id = s.chains()[c].id;
            const fs::path p = fs::path(a.out) / ("chain_" + (id == " " || id.empty() ? std::string("_") : id) + ".basis");
            write_basis(p, bases.chains[c], enm, "chain " + id);
            manifest.output(p);
            out << "chain " << id << ": " << bases.chains[c].mode_count() << " modes over "
                << bases.chains[c].atom_count() << " atoms\n";
        }
    }
    manifest.config({{"enm", to_json(enm)}, {"whole", a.whole}, {"ca_only", common.ca_only}});
    manifest.threads(threads);
    manifest.input(a.pdb);
    manifest.write(fs::path(a.out) / "manifest.json");
    return 0;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
    std::string recipe, pdb, out;
    ImagingFlags imaging;
    std::optional<std::size_t> train, val, test;
};

int cmd_simulate(const SimulateArgs& a, const Common& common, Manifest& manifest, std::ostream& out) {
    HeterogeneityRecipe recipe;
    std::optional<std::uint64_t> config_seed;
    if (!a.recipe.empty()) {
        const Json j = load_config_file(a.recipe);
        try {
            recipe = recipe_from_json(j);
        } catch (const Json::exception& e) {
            throw ConfigError(std::string("malformed recipe: ") + e.what());
        }
        if (j.contains("seed")) config_seed = recipe.seed;
    }
    if (a.train) recipe.train_count = *a.train;
    if (a.val) recipe.val_count = *a.val;
    if (a.test) recipe.test_count = *a.test;
    recipe.seed = resolve_seed(common, config_seed);
    ImagingConfig imaging = a.imaging.resolve();
    if (a.imaging.snr) recipe.snr_db = *a.imaging.snr;
    recipe.validate();

    const AtomicStructure gt = load_structure(a.pdb, common.ca_only);
    EnmConfig enm;
    enm.num_modes = recipe.num_modes;
    const unsigned threads = resolve_threads(common);
    const ModelBases bases = per_chain_bases(gt, enm, threads);
    const Dataset data = generate_dataset(gt, bases, recipe, imaging, fs::path(a.out), threads);
    for (const auto* split : {&data.train, &data.val, &data.test}) {
        manifest.output(fs::path(a.out) / split->split);
        out << split->split << ": " << split->count << " images";
        if (split->out_of_view_atoms) out << " (" << split->out_of_view_atoms << " atom splats outside the field of view)";
        out << '\n';
    }
    manifest.config({{"recipe", to_json(recipe)}, {"imaging", to_json(imaging)}, {"ca_only", common.ca_only}});
    manifest.seed(recipe.seed);
    manifest.threads(threads);
    manifest.input(a.pdb);
    if (!a.recipe.empty()) manifest.input(a.recipe);
    manifest.write(fs::path(a.out) / "manifest.json");
    return 0;
}

// ---------------------------------------------------------------------------

struct MorphArgs {
    std::string pdb_a, pdb_b, out;
    int steps = 50;
    std::optional<std::size_t> count;
    ImagingFlags imaging;
};

int cmd_morph(const MorphArgs& a, const Common& common, Manifest& manifest, std::ostream& out) {
    MorphRecipe recipe;
    recipe.num_steps = a.steps;
    recipe.count = a.count ? *a.count : static_cast<std::size_t>(std::max(0, a.steps));
    recipe.seed = resolve_seed(common, std::nullopt);
    recipe.validate();
    const ImagingConfig imaging = a.imaging.resolve();

    const AtomicStructure conf_a = load_structure(a.pdb_a, common.ca_only);
    const AtomicStructure conf_b = load_structure(a.pdb_b, common.ca_only);
    const unsigned threads = resolve_threads(common);
    const ImageStack stack = generate_morph_dataset(conf_a, conf_b, recipe, imaging, fs::path(a.out), threads);
    out << "morph: " << stack.count << " images over " << recipe.num_steps << " steps\n";
    manifest.config({{"num_steps", recipe.num_steps},
                     {"count", recipe.count},
                     {"imaging", to_json(imaging)},
                     {"ca_only", common.ca_only}});
    manifest.seed(recipe.seed);
    manifest.threads(threads);
    manifest.input(a.pdb_a);
    manifest.input(a.pdb_b);
    manifest.output(a.out);
    manifest.write(fs::path(a.out) / "manifest.json");
    return 0;
}

// ---------------------------------------------------------------------------

struct FitArgs {
    std::string stack, pdb, out, config, mode, models;
    std::optional<int> k, iterations, restarts, consensus, consensus_batch;
    std::optional<double> step, grad_tol, prior_weight;
    bool monotone = false;
};

int cmd_fit(const FitArgs& a, const Common& common, Manifest& manifest, std::ostream& out) {
    FitConfig config;
    std::optional<std::uint64_t> config_seed;
    if (!a.config.empty()) {
        const Json j = load_config_file(a.config);
        config = fit_config_from_json(j);
        if (j.contains("seed")) config_seed = config.seed;
    }
    if (!a.mode.empty()) config.mode = parse_fit_mode(a.mode);
    if (a.k) config.num_modes = *a.k;
    if (a.step) config.step = *a.step;
    if (a.iterations) config.iterations = *a.iterations;
    if (a.grad_tol) config.grad_tol = *a.grad_tol;
    if (a.restarts) config.restarts = *a.restarts;
    if (a.consensus) config.consensus_iterations = *a.consensus;
    if (a.consensus_batch) config.consensus_batch = *a.consensus_batch;
    if (a.prior_weight) config.prior_weight = *a.prior_weight;
    if (a.monotone) config.monotone = true;
    config.seed = resolve_seed(common, config_seed);
    config.validate();

    const AtomicStructure source = load_structure(a.pdb, common.ca_only);
    const ImageStack stack = read_stack(a.stack);
    const unsigned threads = resolve_threads(common);
    const ModelBases bases = prepare_bases(source, config, threads);

    FitReport report = fit_stack(stack, source, bases, config, threads);
    report.source_path = a.pdb;
    report.source_digest = file_digest(a.pdb);
    report.ca_only = common.ca_only;
    report.stack_path = a.stack;

    const fs::path out_path(a.out);
    ensure_parent(out_path);
    write_json_file(out_path, to_json(report));
    manifest.output(out_path);
    if (!a.models.empty()) {
        const fs::path models(a.models);
        ensure_parent(models);
        write_text(models, write_models(fitted_structures(report, source, bases)));
        manifest.output(models);
    }

    const auto& agg = report.aggregate;
    out << to_string(config.mode) << ": " << agg.ok << " fitted, " << agg.failed << " failed, mean MSE "
        << fmt(agg.mse_mean);
    if (agg.rmsd_mean) out << ", RMSD " << fmt(*agg.rmsd_mean) << " ± " << fmt(*agg.rmsd_std) << " Å";
    out << '\n';

    manifest.config({{"fit", to_json(config)}, {"imaging", to_json(stack.imaging)}, {"ca_only", common.ca_only}});
    manifest.seed(config.seed);
    manifest.threads(threads);
    manifest.input(a.pdb);
    manifest.input(a.stack);
    manifest.write(manifest_beside(out_path));
    return 0;
}

// ---------------------------------------------------------------------------

struct LoadedReport {
    std::string path;
    FitReport report;
};

std::vector<LoadedReport> load_reports(const std::vector<std::string>& paths) {
    std::vector<LoadedReport> out;
    for (const auto& p : paths) out.push_back({p, report_from_json(read_json_file(p))});
    return out;
}

/// Source structure and bases a report was fitted with.
std::pair<AtomicStructure, ModelBases> report_model(const FitReport& report, const std::string& pdb_override) {
    const std::string path = pdb_override.empty() ? report.source_path : pdb_override;
    if (path.empty()) throw LookupError("fit report does not name its source structure; pass --pdb");
    AtomicStructure source = load_structure(path, report.ca_only);
    ModelBases bases = prepare_bases(source, report.config);
    return {std::move(source), std::move(bases)};
}

struct AnalyzeArgs {
    std::vector<std::string> reports;
    std::string out, pca, stack, pdb;
    std::vector<double> quantiles{0.05, 0.5, 0.95};
};

int cmd_analyze(const AnalyzeArgs& a, const Common&, Manifest& manifest, std::ostream& out) {
    std::optional<LatentBlock> block;
    if (!a.pca.empty()) block = parse_latent_block(a.pca);
    for (double q : a.quantiles)
        if (!(q > 0.0 && q < 1.0)) throw ConfigError("quantiles must lie in (0, 1)");

    const auto loaded = load_reports(a.reports);
    std::size_t ok_total = 0;
    for (const auto& r : loaded) ok_total += r.report.aggregate.ok;
    if (ok_total == 0) throw EmptyInputError("fit reports contain no successful entries");
    if (!a.stack.empty() && loaded.size() != 1) throw ConfigError("--stack takes exactly one --report");

    const fs::path dir(a.out);
    fs::create_directories(dir);

    // RMSD summary across reports.
    {
        std::ostringstream csv;
        csv << "report,mode,ok,failed,mse_mean,rmsd_mean,rmsd_median,rmsd_std,rmsd_min,rmsd_max\n";
        std::vector<std::string> labels;
        std::vector<double> means, stds;
        auto opt = [](const std::optional<double>& v) { return v ? fmt(*v) : std::string(); };
        for (const auto& r : loaded) {
            const auto& g = r.report.aggregate;
            csv << r.path << ',' << to_string(r.report.config.mode) << ',' << g.ok << ',' << g.failed << ','
                << fmt(g.mse_mean) << ',' << opt(g.rmsd_mean) << ',' << opt(g.rmsd_median) << ','
                << opt(g.rmsd_std) << ',' << opt(g.rmsd_min) << ',' << opt(g.rmsd_max) << '\n';
            if (g.rmsd_mean) {
                labels.emplace_back(to_string(r.report.config.mode));
                means.push_back(*g.rmsd_mean);
                stds.push_back(*g.rmsd_std);
            }
        }
        write_text(dir / "rmsd.csv", csv.str());
        manifest.output(dir / "rmsd.csv");
        if (!means.empty()) {
            write_text(dir / "rmsd.svg", bar_svg(labels, means, stds, "Reconstruction error", "RMSD (Å)"));
            manifest.output(dir / "rmsd.svg");
        }
    }

    if (block) {
        std::vector<FitReport> reports;
        for (const auto& r : loaded) reports.push_back(r.report);
        const PCAResult result = latent_pca(reports, *block);
        for (const auto& w : result.warnings) out << "warning: " << w << '\n';

        std::ostringstream var;
        var << "pc,variance,explained_variance_pct\n";
        for (Eigen::Index p = 0; p < result.variances.size(); ++p)
            var << p + 1 << ',' << fmt(result.variances[p]) << ',' << fmt(result.explained_variance_pct[p]) << '\n';
        write_text(dir / "pca_variance.csv", var.str());

        std::ostringstream scores;
        scores << "sample";
        for (Eigen::Index p = 0; p < result.projected.cols(); ++p) scores << ",pc" << p + 1;
        scores << '\n';
        for (Eigen::Index i = 0; i < result.projected.rows(); ++i) {
            scores << i;
            for (Eigen::Index p = 0; p < result.projected.cols(); ++p) scores << ',' << fmt(result.projected(i, p));
            scores << '\n';
        }
        write_text(dir / "pca_scores.csv", scores.str());
        manifest.output(dir / "pca_variance.csv");
        manifest.output(dir / "pca_scores.csv");

        if (result.projected.cols() >= 1) {
            const Eigen::VectorXd pc1 = result.projected.col(0);
            const Eigen::VectorXd y = result.projected.cols() >= 2
                                          ? Eigen::VectorXd(result.projected.col(1))
                                          : Eigen::VectorXd::LinSpaced(pc1.size(), 0, static_cast<double>(pc1.size() - 1));
            const std::string title = "PCA of " + to_string(*block);
            auto pct = [&](Eigen::Index p) { return fmt(result.explained_variance_pct[p]) + "%"; };
            write_text(dir / "pca_scatter.svg",
                       scatter_svg(pc1, y, title, "PC1 (" + pct(0) + ")",
                                   result.projected.cols() >= 2 ? "PC2 (" + pct(1) + ")" : "sample"));
            manifest.output(dir / "pca_scatter.svg");
            out << "PC1 explains " << pct(0) << " of " << to_string(*block) << '\n';

            // Traversal: quantiles of PC1 applied to the first successful entry's latents.
            const FitReport& first = loaded.front().report;
            const auto it = std::find_if(first.entries.begin(), first.entries.end(), [](const FitEntry& e) { return e.ok; });
            if (it == first.entries.end()) throw EmptyInputError("first fit report has no successful entries");
            const auto [source, bases] = report_model(first, a.pdb);
            std::vector<AtomicStructure> models;
            for (const auto& v : traverse_pc(result, 0, a.quantiles))
                models.push_back(compose_structure(source, bases, with_latent_block(it->latents, *block, v)));
            write_text(dir / "pc1_traversal.pdb", write_models(models));
            manifest.output(dir / "pc1_traversal.pdb");
        }
    }

    if (!a.stack.empty()) {
        const ImageStack stack = read_stack(a.stack);
        if (!stack.has_ground_truth_structures()) throw LookupError("stack " + a.stack + " has no ground-truth structures");
        const FitReport& report = loaded.front().report;
        const auto [source, bases] = report_model(report, a.pdb);
        std::vector<Eigen::Index> cols;
        for (const auto& e : report.entries)
            if (e.ok) cols.push_back(static_cast<Eigen::Index>(e.index));
        Eigen::MatrixXd gt(stack.gt_structures.rows(), static_cast<Eigen::Index>(cols.size()));
        Eigen::MatrixXd fitted(gt.rows(), gt.cols());
        Eigen::Index k = 0;
        for (const auto& e : report.entries) {
            if (!e.ok) continue;
            if (e.index >= stack.count) throw DimensionError("report entry index exceeds the stack size");
            gt.col(k) = stack.gt_structures.col(static_cast<Eigen::Index>(e.index));
            fitted.col(k) = compose_coords(source, bases, e.latents);
            ++k;
        }
        const ErrorMap map = error_map(gt, fitted);
        std::ostringstream csv;
        csv << "atom,chain,res_seq,name,error\n";
        for (std::size_t i = 0; i < source.atom_count(); ++i) {
            const auto& rec = source.atoms()[i];
            csv << i << ',' << rec.chain_id << ',' << rec.res_seq << ',' << rec.trimmed_name() << ','
                << fmt(map.per_atom[static_cast<Eigen::Index>(i)]) << '\n';
        }
        write_text(dir / "error_map.csv", csv.str());
        write_text(dir / "error_histogram.svg",
                   histogram_svg(map.histogram, map.bin_width, "Per-atom error of the mean conformation", "error (Å)"));
        manifest.output(dir / "error_map.csv");
        manifest.output(dir / "error_histogram.svg");
        manifest.input(a.stack);
        out << "error map: max " << fmt(map.per_atom.maxCoeff()) << " Å, mean " << fmt(map.per_atom.mean()) << " Å\n";
    }

    manifest.config({{"pca", a.pca}, {"quantiles", a.quantiles}, {"stack", a.stack}});
    for (const auto& p : a.reports) manifest.input(p);
    manifest.write(dir / "manifest.json");
    return 0;
}

// ---------------------------------------------------------------------------

struct ExportArgs {
    std::string report, pdb, out;
    bool consensus = false;
};

int cmd_export(const ExportArgs& a, const Common&, Manifest& manifest, std::ostream& out) {
    const FitReport report = report_from_json(read_json_file(a.report));
    const auto [source, bases] = report_model(report, a.pdb);
    std::vector<AtomicStructure> models;
    if (a.consensus) {
        if (!report.consensus) throw LookupError("fit report has no consensus latents");
        models.push_back(compose_structure(source, bases, *report.consensus));
    } else {
        models = fitted_structures(report, source, bases);
    }
    if (models.empty()) throw EmptyInputError("fit report contains no successful entries");
    const fs::path path(a.out);
    ensure_parent(path);
    write_text(path, models.size() == 1 ? write_structure(models.front()) : write_models(models));
    out << "wrote " << models.size() << " model" << (models.size() == 1 ? "" : "s") << " to " << a.out << '\n';
    manifest.config({{"consensus", a.consensus}});
    manifest.input(a.report);
    manifest.output(path);
    manifest.write(manifest_beside(path));
    return 0;
}

// ---------------------------------------------------------------------------

struct ToyArgs {
    std::string out;
    ToyAssemblyConfig config;
};

int cmd_toy(ToyArgs a, const Common& common, Manifest& manifest, std::ostream& out) {
    a.config.seed = resolve_seed(common, std::nullopt);
    if (a.config.chains < 1 || a.config.chains > 26) throw ConfigError("toy assembly needs 1 to 26 chains");
    if (a.config.atoms_per_chain < 2) throw ConfigError("toy chains need at least 2 atoms");
    if (!(a.config.chain_radius > 0.0)) throw ConfigError("chain radius must be positive");
    const AtomicStructure s = make_toy_assembly(a.config);
    const fs::path path(a.out);
    ensure_parent(path);
    save_structure(path, s);
    out << "toy assembly: " << s.chain_count() << " chains, " << s.atom_count() << " atoms\n";
    manifest.config({{"chains", a.config.chains},
                     {"atoms_per_chain", a.config.atoms_per_chain},
                     {"chain_radius", a.config.chain_radius},
                     {"chain_gap", a.config.chain_gap}});
    manifest.seed(a.config.seed);
    manifest.output(path);
    manifest.write(manifest_beside(path));
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"chainfit: per-chain normal modes and rigid transforms fitted to projection images"};
    app.name("chainfit");
    app.set_version_flag("--version", tool_version);
    app.require_subcommand(1);

    Common common;
    std::optional<unsigned> threads;
    std::optional<std::uint64_t> seed;
    auto add_common = [&](CLI::App* sub, bool structures) {
        sub->add_option("--threads", threads, "Worker threads (default: all cores)")->check(CLI::NonNegativeNumber);
        sub->add_option("--seed", seed, "Random seed (fallback: CHAINFIT_SEED)");
        if (structures) sub->add_flag("--ca-only", common.ca_only, "Keep only CA atoms");
    };

    NmaArgs nma;
    auto* nma_cmd = app.add_subcommand("nma", "Normal modes of each chain or of the whole structure");
    nma_cmd->add_option("--pdb", nma.pdb, "Input structure")->required();
    nma_cmd->add_option("--out", nma.out, "Output directory")->required();
    nma_cmd->add_option("--config", nma.config, "ENM config JSON");
    nma_cmd->add_option("--k", nma.k, "Modes to keep");
    nma_cmd->add_option("--cutoff", nma.cutoff, "Spring cutoff in Å");
    nma_cmd->add_option("--gamma", nma.gamma, "Spring constant");
    nma_cmd->add_flag("--whole", nma.whole, "One basis for the whole structure");
    add_common(nma_cmd, true);

    SimulateArgs sim;
    auto* sim_cmd = app.add_subcommand("simulate", "Heterogeneous train/val/test image stacks");
    sim_cmd->add_option("--recipe", sim.recipe, "Heterogeneity recipe JSON");
    sim_cmd->add_option("--pdb", sim.pdb, "Ground-truth reference structure")->required();
    sim_cmd->add_option("--out", sim.out, "Output directory")->required();
    sim_cmd->add_option("--train", sim.train, "Training images");
    sim_cmd->add_option("--val", sim.val, "Validation images");
    sim_cmd->add_option("--test", sim.test, "Test images");
    sim.imaging.add(sim_cmd);
    add_common(sim_cmd, true);

    MorphArgs morph;
    auto* morph_cmd = app.add_subcommand("morph", "Images of a linear morph between two conformations");
    morph_cmd->add_option("--pdb-a", morph.pdb_a, "Start conformation")->required();
    morph_cmd->add_option("--pdb-b", morph.pdb_b, "End conformation")->required();
    morph_cmd->add_option("--out", morph.out, "Output directory")->required();
    morph_cmd->add_option("--steps", morph.steps, "Morph steps")->capture_default_str();
    morph_cmd->add_option("--count", morph.count, "Images (default: one per step)");
    morph.imaging.add(morph_cmd);
    add_common(morph_cmd, true);

    FitArgs fit;
    auto* fit_cmd = app.add_subcommand("fit", "Fit latents to every image of a stack");
    fit_cmd->add_option("--stack", fit.stack, "Image stack directory")->required();
    fit_cmd->add_option("--pdb", fit.pdb, "Source reference structure")->required();
    fit_cmd->add_option("--out", fit.out, "Fit report JSON")->required();
    fit_cmd->add_option("--config", fit.config, "Fit config JSON");
    fit_cmd->add_option("--mode", fit.mode, "N_whole, cN, cR, cRT or full");
    fit_cmd->add_option("--k", fit.k, "Modes per chain, or for the whole structure");
    fit_cmd->add_option("--step", fit.step, "Adam step as RMS atom displacement in Å");
    fit_cmd->add_option("--iterations", fit.iterations, "Iterations per image");
    fit_cmd->add_option("--grad-tol", fit.grad_tol, "Stop when the gradient norm falls below this");
    fit_cmd->add_option("--restarts", fit.restarts, "Runs per image from perturbed rotations");
    fit_cmd->add_option("--consensus", fit.consensus, "Minibatch iterations of a shared fit before per-image fits");
    fit_cmd->add_option("--consensus-batch", fit.consensus_batch, "Images per consensus minibatch");
    fit_cmd->add_option("--prior-weight", fit.prior_weight, "Penalty on displacement from the starting latents");
    fit_cmd->add_flag("--monotone", fit.monotone, "Backtrack so the loss never increases");
    fit_cmd->add_option("--models", fit.models, "Also write fitted structures as a multi-model PDB");
    add_common(fit_cmd, true);

    AnalyzeArgs an;
    auto* an_cmd = app.add_subcommand("analyze", "RMSD summaries, latent PCA and error maps");
    an_cmd->add_option("--report", an.reports, "Fit report JSON (repeatable)")->required();
    an_cmd->add_option("--out", an.out, "Output directory")->required();
    an_cmd->add_option("--pca", an.pca, "Latent block, e.g. rigid:0 or alpha:1 (0-based chain)");
    an_cmd->add_option("--quantiles", an.quantiles, "PC1 traversal quantiles")->capture_default_str();
    an_cmd->add_option("--stack", an.stack, "Stack with ground truth, for the error map");
    an_cmd->add_option("--pdb", an.pdb, "Source structure (default: the one named in the report)");
    add_common(an_cmd, false);

    ExportArgs ex;
    auto* ex_cmd = app.add_subcommand("export-pdb", "Write fitted structures of a report as PDB");
    ex_cmd->add_option("--report", ex.report, "Fit report JSON")->required();
    ex_cmd->add_option("--out", ex.out, "Output PDB")->required();
    ex_cmd->add_option("--pdb", ex.pdb, "Source structure (default: the one named in the report)");
    ex_cmd->add_flag("--consensus", ex.consensus, "Export the consensus structure only");
    add_common(ex_cmd, false);

    ToyArgs toy;
    auto* toy_cmd = app.add_subcommand("toy", "Synthetic multi-chain CA assembly");
    toy_cmd->add_option("--out", toy.out, "Output PDB")->required();
    toy_cmd->add_option("--chains", toy.config.chains, "Chains")->capture_default_str();
    toy_cmd->add_option("--atoms", toy.config.atoms_per_chain, "Atoms per chain")->capture_default_str();
    toy_cmd->add_option("--radius", toy.config.chain_radius, "Chain sphere radius in Å")->capture_default_str();
    add_common(toy_cmd, false);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? 0 : 1;
    }
    if (threads) common.threads = *threads;
    common.seed_flag = seed;

    CLI::App* chosen = app.get_subcommands().front();
    Manifest manifest(chosen->get_name(), args);
    try {
        if (chosen == nma_cmd) return cmd_nma(nma, common, manifest, out);
        if (chosen == sim_cmd) return cmd_simulate(sim, common, manifest, out);
        if (chosen == morph_cmd) return cmd_morph(morph, common, manifest, out);
        if (chosen == fit_cmd) return cmd_fit(fit, common, manifest, out);
        if (chosen == an_cmd) return cmd_analyze(an, common, manifest, out);
        if (chosen == ex_cmd) return cmd_export(ex, common, manifest, out);
        if (chosen == toy_cmd) return cmd_toy(toy, common, manifest, out);
    } catch (const ConfigError& e) {
        err << "chainfit " << chosen->get_name() << ": " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "chainfit " << chosen->get_name() << ": " << e.what() << '\n';
        return 2;
    }
    return 1;
}

}  // namespace chainfit
