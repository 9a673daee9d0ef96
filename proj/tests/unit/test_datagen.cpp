#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "chainfit/analysis.hpp"
#include "chainfit/datagen.hpp"
#include "chainfit/errors.hpp"
#include "chainfit/imaging.hpp"
#include "support.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>

using namespace chainfit;

namespace {

struct Scene {
    AtomicStructure reference;
    ModelBases bases;
};

Scene toy_scene(int atoms_per_chain = 40, int modes = 15) {
    ToyAssemblyConfig t;
    t.atoms_per_chain = atoms_per_chain;
    t.chain_radius = 9.0;
    Scene s{make_toy_assembly(t), {}};
    EnmConfig e;
    e.num_modes = modes;
    s.bases = per_chain_bases(s.reference, e);
    return s;
}

ImagingConfig desk_imaging(std::optional<double> snr = std::nullopt) {
    ImagingConfig c;
    c.image_size = 64;
    c.snr_db = snr;
    return c;
}

double normal_mixture_cdf(const std::vector<GmmComponent>& gmm, double x) {
    double acc = 0.0;
    for (const auto& c : gmm) acc += c.weight * 0.5 * (1.0 + std::erf((x - c.mean) / (c.stddev * std::sqrt(2.0))));
    return acc;
}

}  // namespace

TEST_CASE("default recipe carries the published parameters") {
    const HeterogeneityRecipe r;
    CHECK(r.num_modes == 15);
    REQUIRE(r.gmm.size() == 2);
    CHECK(r.gmm[0].weight == 0.5);
    CHECK(r.gmm[1].weight == 0.5);
    CHECK(r.gmm[0].mean == 0.0);
    CHECK(r.gmm[1].mean == 2.5);
    CHECK(r.gmm[0].stddev == 0.25);
    CHECK(r.gmm[1].stddev == 0.25);
    CHECK(r.rotation_half_angles_deg == Eigen::Vector3d(5, 5, 5));
    CHECK(r.train_count == 50000);
    CHECK(r.val_count == 5000);
    CHECK(r.test_count == 5000);
}

TEST_CASE("recipe validation") {
    HeterogeneityRecipe r;
    r.gmm[0].weight = 0.7;
    CHECK_THROWS_AS(r.validate(), ConfigError);
    r = {};
    r.gmm[1].stddev = 0.0;
    CHECK_THROWS_AS(r.validate(), ConfigError);
    r = {};
    r.test_count = 0;
    CHECK_THROWS_AS(r.validate(), ConfigError);
    r = {};
    r.num_modes = 0;
    CHECK_THROWS_AS(r.validate(), ConfigError);
}

TEST_CASE("recipe JSON round trip") {
    HeterogeneityRecipe r;
    r.num_modes = 7;
    r.gmm = {{0.25, -1.0, 0.5}, {0.75, 2.0, 0.125}};
    r.rotation_half_angles_deg = {1, 2, 3};
    r.train_count = 10;
    r.snr_db = -20.0;
    r.seed = 42;
    const auto back = recipe_from_json(Json::parse(to_json(r).dump()));
    CHECK(back.num_modes == 7);
    CHECK(back.gmm[1].mean == 2.0);
    CHECK(back.gmm[0].weight == 0.25);
    CHECK(back.rotation_half_angles_deg == r.rotation_half_angles_deg);
    CHECK(back.train_count == 10);
    CHECK(back.snr_db == r.snr_db);
    CHECK(back.seed == 42);
    CHECK_THROWS_AS(recipe_from_json(Json::parse(R"({"gmm": [{"weight": "x"}]})")), ConfigError);
}

TEST_CASE("mixture draws match the analytic CDF") {
    const HeterogeneityRecipe r;
    Rng rng(123);
    const int n = 100000;
    std::vector<double> draws(n);
    int first = 0;
    for (auto& d : draws) {
        int m = -1;
        d = sample_gmm(r.gmm, rng, &m);
        first += m == 0;
    }
    std::sort(draws.begin(), draws.end());
    double ks = 0.0;
    for (int i = 0; i < n; ++i) {
        const double f = normal_mixture_cdf(r.gmm, draws[i]);
        ks = std::max({ks, std::abs(f - static_cast<double>(i) / n), std::abs(f - static_cast<double>(i + 1) / n)});
        CHECK(gmm_cdf(r.gmm, draws[i]) == doctest::Approx(f).epsilon(1e-12));
    }
    CHECK(ks < 0.01);
    // Component frequencies within 3 sigma of the binomial mean.
    CHECK(std::abs(first - 0.5 * n) < 3.0 * std::sqrt(n * 0.25));
}

TEST_CASE("degenerate recipe returns the reference") {
    const Scene s = toy_scene();
    HeterogeneityRecipe r;
    r.gmm = {{0.5, 0.0, 1e-300}, {0.5, 0.0, 1e-300}};
    r.rotation_half_angles_deg.setZero();
    Rng rng(1);
    const auto conf = sample_conformation(s.reference, s.bases, r, rng);
    CHECK((conf.structure.coords() - s.reference.coords()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("sampled conformations respect the recipe") {
    const Scene s = toy_scene();
    HeterogeneityRecipe r;
    r.rotation_half_angles_deg = {5.0, 2.5, 1.0};
    const double scale = std::sqrt(static_cast<double>(s.reference.atom_count()) / r.num_modes);
    Rng rng(2);
    for (int i = 0; i < 200; ++i) {
        const auto conf = sample_conformation(s.reference, s.bases, r, rng);
        for (std::size_t c = 0; c < 2; ++c) {
            for (int a = 0; a < 3; ++a)
                CHECK(std::abs(conf.angles_rad[c][a]) <= r.rotation_half_angles_deg[a] * std::numbers::pi / 180.0);
            const Eigen::VectorXd d = conf.latents.chains[c].alpha / scale;
            CHECK(d.size() == 15);
            CHECK(d.minCoeff() > -2.0);
            CHECK(d.maxCoeff() < 4.5);
        }
        // Stored latents recompose to the conformation.
        CHECK(rmsd(compose_coords(s.reference, s.bases, conf.latents), conf.structure.coords()) < 1e-9);
    }
}

TEST_CASE("recipe needing more modes than the basis holds") {
    const Scene s = toy_scene(40, 5);
    HeterogeneityRecipe r;
    Rng rng(3);
    CHECK_THROWS_AS(sample_conformation(s.reference, s.bases, r, rng), CapacityError);
}

TEST_CASE("global poses") {
    Rng rng(4);
    Eigen::Vector3d mean_axis = Eigen::Vector3d::Zero();
    const int n = 4000;
    for (int i = 0; i < n; ++i) {
        const GlobalPose p = sample_pose(64, rng);
        CHECK((p.rotation.transpose() * p.rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(p.rotation.determinant() == doctest::Approx(1.0));
        CHECK(std::abs(p.shift.x()) <= 4.0);
        CHECK(std::abs(p.shift.y()) <= 4.0);
        mean_axis += p.rotation.col(2);
    }
    // A uniform rotation sends the beam axis uniformly over the sphere.
    CHECK((mean_axis / n).norm() < 0.06);
}

TEST_CASE("split generation is deterministic and thread independent") {
    const Scene s = toy_scene();
    HeterogeneityRecipe r;
    r.seed = 9;
    const auto one = generate_split(s.reference, s.bases, r, desk_imaging(0.0), 24, 2, 1);
    const auto many = generate_split(s.reference, s.bases, r, desk_imaging(0.0), 24, 2, 4);
    CHECK(one.images == many.images);
    CHECK(one.gt_structures == many.gt_structures);
    r.seed = 10;
    const auto other = generate_split(s.reference, s.bases, r, desk_imaging(0.0), 24, 2, 1);
    CHECK(one.images != other.images);
    const auto val = generate_split(s.reference, s.bases, r, desk_imaging(0.0), 24, 1, 1);
    CHECK(val.images != other.images);
}

TEST_CASE("stored ground truth re-renders the clean images") {
    const Scene s = toy_scene();
    HeterogeneityRecipe r;
    r.seed = 11;
    const auto stack = generate_split(s.reference, s.bases, r, desk_imaging(-20.0), 30, 2, 1);
    for (std::size_t i = 0; i < stack.count; ++i) {
        const auto& latents = stack.gt_latents[i];
        const ImageArray again = render_clean(compose_coords(s.reference, s.bases, latents), latents.pose, stack.imaging);
        const ImageArray stored = stack.clean_image(i);
        CHECK((again - stored).norm() / stored.norm() < 1e-6);
        CHECK(rmsd(compose_coords(s.reference, s.bases, latents), stack.gt_structures.col(static_cast<Eigen::Index>(i))) < 1e-9);
    }
}

TEST_CASE("recipe SNR overrides the imaging config") {
    const Scene s = toy_scene();
    HeterogeneityRecipe r;
    r.snr_db = 0.0;
    const auto stack = generate_split(s.reference, s.bases, r, desk_imaging(), 4, 2, 1);
    REQUIRE(stack.imaging.snr_db.has_value());
    CHECK(*stack.imaging.snr_db == 0.0);
    CHECK(stack.images != stack.clean);
}

TEST_CASE("desk-scale dataset round-trips through the container") {
    ToyAssemblyConfig t;
    const auto gt = make_toy_assembly(t);
    EnmConfig e;
    e.num_modes = 15;
    const auto bases = per_chain_bases(gt, e);
    HeterogeneityRecipe r;
    r.train_count = 2000;
    r.val_count = 200;
    r.test_count = 200;
    r.seed = 3;
    const auto dir = std::filesystem::temp_directory_path() / "chainfit_test_dataset";
    std::filesystem::remove_all(dir);
    const Dataset data = generate_dataset(gt, bases, r, desk_imaging(-20.0), dir, 0);
    for (const auto* split : {&data.train, &data.val, &data.test}) {
        const ImageStack back = read_stack(dir / split->split);
        CHECK(back.count == split->count);
        CHECK(back.images == split->images);
        CHECK(back.gt_structures == split->gt_structures);
        CHECK(back.gt_latents.size() == split->count);
    }
    CHECK(data.train.count == 2000);
    CHECK(data.test.count == 200);
    std::filesystem::remove_all(dir);
}

TEST_CASE("morph dataset") {
    const Scene s = toy_scene();
    auto latents = LatentState::identity(s.reference, s.bases);
    const Eigen::Matrix3d q = euler_zyx(0.0, 0.4, 0.0);
    latents.chains[1].v1 = q.col(0);
    latents.chains[1].v2 = q.col(1);
    const AtomicStructure b = compose_structure(s.reference, s.bases, latents);

    CHECK(morph_coords(s.reference, b, 0.0) == s.reference.coords());
    CHECK(morph_coords(s.reference, b, 1.0) == b.coords());
    const Eigen::VectorXd mid = morph_coords(s.reference, b, 0.5);
    CHECK(rmsd(mid, s.reference.coords()) == doctest::Approx(rmsd(mid, b.coords())).epsilon(1e-12));

    MorphRecipe m;
    CHECK(m.num_steps == 50);
    m.count = 120;
    m.seed = 4;
    const auto stack = generate_morph_dataset(s.reference, b, m, desk_imaging(), std::nullopt, 1);
    REQUIRE(stack.count == 120);
    for (std::size_t i = 0; i < stack.count; ++i)
        CHECK(stack.morph_params[i] == doctest::Approx(static_cast<double>(i % 50) / 49.0));
    CHECK(rmsd(stack.gt_structures.col(49), b.coords()) < 1e-12);
    CHECK(rmsd(stack.gt_structures.col(0), s.reference.coords()) < 1e-12);

    ToyAssemblyConfig small;
    small.atoms_per_chain = 10;
    CHECK_THROWS_AS(generate_morph_dataset(s.reference, make_toy_assembly(small), m, desk_imaging(), std::nullopt, 1),
                    DimensionError);
}

TEST_CASE("toy assembly geometry") {
    ToyAssemblyConfig t;
    const auto s = make_toy_assembly(t);
    CHECK(s.atom_count() == 200);
    CHECK(s.chain_count() == 2);
    for (std::size_t i = 0; i + 1 < s.atom_count(); ++i) {
        const bool same_chain = s.atoms()[i].chain_id == s.atoms()[i + 1].chain_id;
        if (same_chain) CHECK((s.position(i) - s.position(i + 1)).norm() == doctest::Approx(3.8).epsilon(1e-3));
    }
    double closest = 1e9;
    for (std::size_t i = 0; i < s.atom_count(); ++i)
        for (std::size_t j = i + 2; j < s.atom_count(); ++j) closest = std::min(closest, (s.position(i) - s.position(j)).norm());
    CHECK(closest >= 4.0 - 2e-3);
    CHECK(make_toy_assembly(t).coords() == s.coords());
    CHECK(parse_structure(write_structure(s)).coords() == s.coords());
}
