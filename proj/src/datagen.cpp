#include "chainfit/datagen.hpp"

#include "chainfit/errors.hpp"
#include "chainfit/parallel.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <numbers>
#include <random>

namespace chainfit {

void HeterogeneityRecipe::validate() const {
    if (num_modes < 1) throw ConfigError("recipe needs at least one normal mode");
    if (gmm.empty()) throw ConfigError("recipe mixture has no components");
    double total = 0.0;
    for (const auto& c : gmm) {
        if (!(c.weight >= 0.0)) throw ConfigError("mixture weights must be non-negative");
        if (!(c.stddev > 0.0)) throw ConfigError("mixture standard deviations must be positive");
        if (!std::isfinite(c.mean)) throw ConfigError("mixture means must be finite");
        total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("mixture weights must sum to 1");
    for (int a = 0; a < 3; ++a)
        if (!(rotation_half_angles_deg[a] >= 0.0 && rotation_half_angles_deg[a] <= 180.0))
            throw ConfigError("rotation half-angles must lie in [0, 180] degrees");
    if (train_count < 1 || val_count < 1 || test_count < 1) throw ConfigError("split counts must be at least 1");
    if (snr_db && !std::isfinite(*snr_db)) throw ConfigError("SNR must be finite");
}

Json to_json(const HeterogeneityRecipe& recipe) {
    Json gmm = Json::array();
    for (const auto& c : recipe.gmm) gmm.push_back({{"weight", c.weight}, {"mean", c.mean}, {"stddev", c.stddev}});
    const auto& a = recipe.rotation_half_angles_deg;
    return {{"num_modes", recipe.num_modes},
            {"gmm", gmm},
            {"rotation_half_angles_deg", {a.x(), a.y(), a.z()}},
            {"counts", {{"train", recipe.train_count}, {"val", recipe.val_count}, {"test", recipe.test_count}}},
            {"snr_db", recipe.snr_db ? Json(*recipe.snr_db) : Json(nullptr)},
            {"seed", recipe.seed}};
}

HeterogeneityRecipe recipe_from_json(const Json& j, HeterogeneityRecipe base) {
    try {
        if (j.contains("num_modes")) base.num_modes = j.at("num_modes").get<int>();
        if (j.contains("gmm")) {
            base.gmm.clear();
            for (const auto& c : j.at("gmm"))
                base.gmm.push_back({c.at("weight").get<double>(), c.at("mean").get<double>(), c.at("stddev").get<double>()});
        }
        if (j.contains("rotation_half_angles_deg")) {
            const auto& a = j.at("rotation_half_angles_deg");
            if (a.is_number()) base.rotation_half_angles_deg.setConstant(a.get<double>());
            else {
                auto v = a.get<std::vector<double>>();
                if (v.size() != 3) throw ConfigError("rotation_half_angles_deg needs 3 entries");
                base.rotation_half_angles_deg = Eigen::Vector3d(v[0], v[1], v[2]);
            }
        }
        if (j.contains("counts")) {
            const auto& c = j.at("counts");
            base.train_count = c.value("train", base.train_count);
            base.val_count = c.value("val", base.val_count);
            base.test_count = c.value("test", base.test_count);
        }
        if (j.contains("snr_db")) {
            if (j.at("snr_db").is_null()) base.snr_db.reset();
            else base.snr_db = j.at("snr_db").get<double>();
        }
        if (j.contains("seed")) base.seed = j.at("seed").get<std::uint64_t>();
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("malformed recipe: ") + e.what());
    }
    return base;
}

double sample_gmm(const std::vector<GmmComponent>& gmm, Rng& rng, int* component) {
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    const double u = uniform(rng);
    std::size_t m = 0;
    double acc = gmm[0].weight;
    while (m + 1 < gmm.size() && u >= acc) acc += gmm[++m].weight;
    if (component) *component = static_cast<int>(m);
    std::normal_distribution<double> normal(gmm[m].mean, gmm[m].stddev);
    return normal(rng);
}

double gmm_cdf(const std::vector<GmmComponent>& gmm, double x) {
    double cdf = 0.0;
    for (const auto& c : gmm) cdf += c.weight * 0.5 * std::erfc(-(x - c.mean) / (c.stddev * std::numbers::sqrt2));
    return cdf;
}

SampledConformation sample_conformation(const AtomicStructure& reference, const ModelBases& bases,
                                        const HeterogeneityRecipe& recipe, Rng& rng) {
    if (bases.chains.size() != reference.chain_count())
        throw DimensionError("need one basis per reference chain");
    const double scale = std::sqrt(static_cast<double>(reference.atom_count()) / recipe.num_modes);
    const double deg = std::numbers::pi / 180.0;
    std::uniform_real_distribution<double> unit(-1.0, 1.0);

    SampledConformation out;
    Eigen::VectorXd coords = reference.coords();
    for (std::size_t c = 0; c < reference.chain_count(); ++c) {
        const auto& chain = reference.chains()[c];
        const auto& basis = bases.chains[c];
        if (basis.mode_count() < recipe.num_modes)
            throw CapacityError("chain " + chain.id + ": recipe needs " + std::to_string(recipe.num_modes) + " modes",
                                static_cast<std::size_t>(basis.mode_count()));
        if (basis.atom_count() != chain.size())
            throw DimensionError("chain " + chain.id + ": basis atom count does not match the reference");

        ChainLatent latent;
        latent.chain_id = chain.id;
        latent.alpha = Eigen::VectorXd::Zero(basis.mode_count());
        for (int k = 0; k < recipe.num_modes; ++k) latent.alpha[k] = scale * sample_gmm(recipe.gmm, rng);

        Eigen::Vector3d angles;
        for (int a = 0; a < 3; ++a) angles[a] = unit(rng) * recipe.rotation_half_angles_deg[a] * deg;
        Eigen::Matrix3d rotation = euler_zyx(angles.x(), angles.y(), angles.z());
        latent.v1 = rotation.col(0);
        latent.v2 = rotation.col(1);

        ChainTransform transform;
        transform.rotation = rotation;
        transform.pivot = centroid(reference.chain_coords(chain));
        Eigen::VectorXd deformed = deform(basis, latent.alpha);
        coords.segment(3 * chain.begin, 3 * chain.size()) = apply_chain_transform(deformed, transform);

        out.latents.chains.push_back(std::move(latent));
        out.angles_rad.push_back(angles);
    }
    out.structure = reference.with_coords(std::move(coords));
    return out;
}

GlobalPose sample_pose(int image_size, Rng& rng) {
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    const double u1 = uniform(rng), u2 = uniform(rng), u3 = uniform(rng);
    const double two_pi = 2.0 * std::numbers::pi;
    Eigen::Quaterniond q(std::sqrt(u1) * std::cos(two_pi * u3), std::sqrt(1.0 - u1) * std::sin(two_pi * u2),
                         std::sqrt(1.0 - u1) * std::cos(two_pi * u2), std::sqrt(u1) * std::sin(two_pi * u3));
    GlobalPose pose;
    pose.rotation = q.normalized().toRotationMatrix();
    const double half = image_size / 16.0;
    std::uniform_real_distribution<double> shift(-half, half);
    pose.shift.x() = shift(rng);
    pose.shift.y() = shift(rng);
    return pose;
}

namespace {

// Renders, optionally noises, and stores image i of a stack.
void finish_image(ImageStack& stack, std::size_t i, const Eigen::VectorXd& coords, const ImagingConfig& imaging,
                  Rng& rng, std::vector<std::size_t>& out_of_view) {
    RenderStats stats;
    ImageArray clean = render_clean(coords, stack.poses[i], imaging, &stats);
    out_of_view[i] = stats.out_of_view;
    stack.set_clean_image(i, clean);
    stack.set_image(i, imaging.snr_db ? add_noise(clean, *imaging.snr_db, rng) : clean);
}

}  // namespace

ImageStack generate_split(const AtomicStructure& gt_reference, const ModelBases& gt_bases,
                          const HeterogeneityRecipe& recipe, const ImagingConfig& imaging, std::size_t count,
                          std::uint64_t split_salt, unsigned threads) {
    recipe.validate();
    ImagingConfig config = imaging;
    if (recipe.snr_db) config.snr_db = recipe.snr_db;
    config.validate();

    ImageStack stack;
    stack.imaging = config;
    stack.seed = recipe.seed;
    stack.kind = "heterogeneous";
    stack.resize(count, true);
    stack.gt_latents.resize(count);
    stack.gt_structures.resize(gt_reference.coords().size(), static_cast<Eigen::Index>(count));
    std::vector<std::size_t> out_of_view(count, 0);

    parallel_for(count, threads, [&](std::size_t i) {
        Rng rng = derive_rng(recipe.seed, i, split_salt);
        SampledConformation conf = sample_conformation(gt_reference, gt_bases, recipe, rng);
        stack.poses[i] = sample_pose(config.image_size, rng);
        conf.latents.pose = stack.poses[i];
        stack.gt_structures.col(static_cast<Eigen::Index>(i)) = conf.structure.coords();
        stack.gt_latents[i] = std::move(conf.latents);
        finish_image(stack, i, conf.structure.coords(), config, rng, out_of_view);
    });
    for (auto n : out_of_view) stack.out_of_view_atoms += n;
    return stack;
}

Dataset generate_dataset(const AtomicStructure& gt_reference, const ModelBases& gt_bases,
                         const HeterogeneityRecipe& recipe, const ImagingConfig& imaging,
                         const std::optional<std::filesystem::path>& out_path, unsigned threads) {
    recipe.validate();
    Dataset data;
    data.train = generate_split(gt_reference, gt_bases, recipe, imaging, recipe.train_count, 0, threads);
    data.train.split = "train";
    data.val = generate_split(gt_reference, gt_bases, recipe, imaging, recipe.val_count, 1, threads);
    data.val.split = "val";
    data.test = generate_split(gt_reference, gt_bases, recipe, imaging, recipe.test_count, 2, threads);
    data.test.split = "test";
    if (out_path) {
        write_stack(*out_path / "train", data.train);
        write_stack(*out_path / "val", data.val);
        write_stack(*out_path / "test", data.test);
    }
    return data;
}

void MorphRecipe::validate() const {
    if (num_steps < 2) throw ConfigError("a morph needs at least 2 steps");
    if (count < 1) throw ConfigError("morph image count must be at least 1");
}

Eigen::VectorXd morph_coords(const AtomicStructure& a, const AtomicStructure& b, double s) {
    if (a.atom_count() != b.atom_count())
        throw DimensionError("morph endpoints have " + std::to_string(a.atom_count()) + " and " +
                             std::to_string(b.atom_count()) + " atoms");
    if (s == 0.0) return a.coords();
    if (s == 1.0) return b.coords();
    return (1.0 - s) * a.coords() + s * b.coords();
}

ImageStack generate_morph_dataset(const AtomicStructure& conf_a, const AtomicStructure& conf_b,
                                  const MorphRecipe& recipe, const ImagingConfig& imaging,
                                  const std::optional<std::filesystem::path>& out_path, unsigned threads) {
    recipe.validate();
    imaging.validate();
    if (conf_a.atom_count() != conf_b.atom_count())
        throw DimensionError("morph endpoints have " + std::to_string(conf_a.atom_count()) + " and " +
                             std::to_string(conf_b.atom_count()) + " atoms");
    if (conf_a.chain_count() != conf_b.chain_count())
        throw DimensionError("morph endpoints have different chain layouts");
    for (std::size_t c = 0; c < conf_a.chain_count(); ++c)
        if (conf_a.chains()[c].size() != conf_b.chains()[c].size() || conf_a.chains()[c].id != conf_b.chains()[c].id)
            throw DimensionError("morph endpoints have different chain layouts");

    ImageStack stack;
    stack.imaging = imaging;
    stack.seed = recipe.seed;
    stack.kind = "morph";
    stack.resize(recipe.count, true);
    stack.morph_params.resize(recipe.count);
    stack.gt_structures.resize(conf_a.coords().size(), static_cast<Eigen::Index>(recipe.count));
    std::vector<std::size_t> out_of_view(recipe.count, 0);

    parallel_for(recipe.count, threads, [&](std::size_t i) {
        Rng rng = derive_rng(recipe.seed, i, 3);
        const int step = static_cast<int>(i % static_cast<std::size_t>(recipe.num_steps));
        const double s = static_cast<double>(step) / (recipe.num_steps - 1);
        Eigen::VectorXd coords = morph_coords(conf_a, conf_b, s);
        stack.morph_params[i] = s;
        stack.poses[i] = sample_pose(imaging.image_size, rng);
        stack.gt_structures.col(static_cast<Eigen::Index>(i)) = coords;
        finish_image(stack, i, coords, imaging, rng, out_of_view);
    });
    for (auto n : out_of_view) stack.out_of_view_atoms += n;
    if (out_path) write_stack(*out_path, stack);
    return stack;
}

namespace {

bool grow_chain(std::vector<Eigen::Vector3d>& atoms, int n, double radius, Rng& rng) {
    constexpr double bond = 3.8, clash = 4.0;
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(-1.0, 1.0);
    atoms.clear();
    Eigen::Vector3d start(uniform(rng), uniform(rng), uniform(rng));
    atoms.push_back(start * (0.5 * radius));
    while (static_cast<int>(atoms.size()) < n) {
        bool placed = false;
        for (int attempt = 0; attempt < 400 && !placed; ++attempt) {
            Eigen::Vector3d dir(normal(rng), normal(rng), normal(rng));
            dir.normalize();
            Eigen::Vector3d p = atoms.back() + bond * dir;
            if (p.norm() > radius) continue;
            bool ok = true;
            for (std::size_t k = 0; k + 1 < atoms.size() && ok; ++k) ok = (atoms[k] - p).norm() >= clash;
            if (ok) {
                atoms.push_back(p);
                placed = true;
            }
        }
        if (!placed) return false;
    }
    return true;
}

}  // namespace

AtomicStructure make_toy_assembly(const ToyAssemblyConfig& config) {
    if (config.chains < 1 || config.chains > 26) throw ConfigError("toy assembly supports 1 to 26 chains");
    if (config.atoms_per_chain < 3) throw ConfigError("toy chains need at least 3 atoms");
    if (!(config.chain_radius > 4.0)) throw ConfigError("toy chain radius must exceed 4 Å");

    Rng rng(config.seed);
    std::vector<AtomRecord> records;
    std::vector<double> xyz;
    const double spacing = 2.0 * config.chain_radius + config.chain_gap;
    const double first = -0.5 * spacing * (config.chains - 1);
    int serial = 1;
    for (int c = 0; c < config.chains; ++c) {
        std::vector<Eigen::Vector3d> atoms;
        int tries = 0;
        while (!grow_chain(atoms, config.atoms_per_chain, config.chain_radius, rng))
            if (++tries > 1000) throw Error("could not pack a toy chain; increase chain_radius");
        const Eigen::Vector3d centre(first + c * spacing, 0.0, 0.0);
        for (int j = 0; j < config.atoms_per_chain; ++j) {
            AtomRecord r;
            r.serial = serial++;
            r.name = " CA ";
            r.res_name = "ALA";
            r.chain_id = std::string(1, static_cast<char>('A' + c));
            r.res_seq = j + 1;
            r.element = "C";
            records.push_back(std::move(r));
            Eigen::Vector3d p = atoms[j] + centre;
            for (int a = 0; a < 3; ++a) xyz.push_back(std::round(p[a] * 1000.0) / 1000.0);
        }
    }
    return AtomicStructure(std::move(records), Eigen::Map<Eigen::VectorXd>(xyz.data(), xyz.size()));
}

}  // namespace chainfit
