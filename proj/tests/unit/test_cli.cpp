#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "chainfit/cli.hpp"
#include "chainfit/datagen.hpp"
#include "chainfit/fitter.hpp"
#include "chainfit/serialization.hpp"
#include "chainfit/structure.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

namespace fs = std::filesystem;
using namespace chainfit;

namespace {

struct Run {
    int code;
    std::string out, err;
};

Run run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class TempDir {
public:
    TempDir() : path_(fs::temp_directory_path() / ("chainfit_cli_" + std::to_string(::getpid()) + "_" +
                                                   std::to_string(counter_++))) {
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    fs::path operator/(const std::string& name) const { return path_ / name; }
    const fs::path& path() const { return path_; }

private:
    static inline int counter_ = 0;
    fs::path path_;
};

std::string str(const fs::path& p) { return p.string(); }

void write(const fs::path& p, const std::string& text) {
    std::ofstream(p) << text;
}

/// toy -> simulate, small enough for unit tests.
void small_dataset(const TempDir& t, const std::string& threads) {
    REQUIRE(run({"toy", "--out", str(t / "toy.pdb"), "--atoms", "20", "--radius", "8", "--seed", "3"}).code == 0);
    HeterogeneityRecipe recipe;
    recipe.num_modes = 4;
    recipe.gmm = {{0.5, 0.0, 0.1}, {0.5, 0.5, 0.1}};
    recipe.rotation_half_angles_deg.setConstant(2.0);
    recipe.train_count = 2;
    recipe.val_count = 1;
    recipe.test_count = 6;
    recipe.seed = 9;
    write(t / "recipe.json", to_json(recipe).dump(2));
    const Run r = run({"simulate", "--recipe", str(t / "recipe.json"), "--pdb", str(t / "toy.pdb"), "--out",
                       str(t / "data"), "--image-size", "32", "--snr", "10", "--threads", threads});
    REQUIRE_MESSAGE(r.code == 0, r.err);
}

}  // namespace

TEST_CASE("usage errors exit with 1") {
    TempDir t;
    CHECK(run({}).code == 1);
    CHECK(run({"frobnicate"}).code == 1);
    CHECK(run({"fit", "--stack", "x"}).code == 1);
    const Run help = run({"--help"});
    CHECK(help.code == 0);
    CHECK(help.out.find("chainfit") != std::string::npos);
    CHECK(run({"--version"}).code == 0);

    small_dataset(t, "1");
    const Run bad = run({"fit", "--stack", str(t / "data" / "test"), "--pdb", str(t / "toy.pdb"), "--out",
                         str(t / "out" / "report.json"), "--mode", "cRTN"});
    CHECK(bad.code == 1);
    CHECK(bad.err.find("cRTN") != std::string::npos);
    CHECK_FALSE(fs::exists(t / "out"));
}

TEST_CASE("config errors leave no artifacts") {
    TempDir t;
    REQUIRE(run({"toy", "--out", str(t / "toy.pdb"), "--atoms", "20", "--radius", "8"}).code == 0);
    write(t / "bad.json", "{\"num_modes\": 0}");
    CHECK(run({"simulate", "--recipe", str(t / "bad.json"), "--pdb", str(t / "toy.pdb"), "--out", str(t / "sim")})
              .code == 1);
    CHECK_FALSE(fs::exists(t / "sim"));
    write(t / "broken.json", "{not json");
    CHECK(run({"nma", "--pdb", str(t / "toy.pdb"), "--out", str(t / "modes"), "--config", str(t / "broken.json")})
              .code == 1);
    CHECK_FALSE(fs::exists(t / "modes"));
    CHECK(run({"morph", "--pdb-a", str(t / "toy.pdb"), "--pdb-b", str(t / "toy.pdb"), "--out", str(t / "morph"),
               "--image-size", "0"})
              .code == 1);
    CHECK_FALSE(fs::exists(t / "morph"));
}

TEST_CASE("runtime errors exit with 2") {
    TempDir t;
    const Run missing = run({"nma", "--pdb", str(t / "absent.pdb"), "--out", str(t / "modes")});
    CHECK(missing.code == 2);
    CHECK(missing.err.find("absent.pdb") != std::string::npos);

    FitReport empty;
    write(t / "empty.json", to_json(empty).dump());
    CHECK(run({"analyze", "--report", str(t / "empty.json"), "--out", str(t / "plots")}).code == 2);
}

TEST_CASE("nma writes one basis per chain or one for the whole structure") {
    TempDir t;
    REQUIRE(run({"toy", "--out", str(t / "toy.pdb"), "--atoms", "20", "--radius", "8"}).code == 0);
    REQUIRE(run({"nma", "--pdb", str(t / "toy.pdb"), "--out", str(t / "chains"), "--k", "5"}).code == 0);
    CHECK(fs::exists(t / "chains" / "chain_A.basis"));
    CHECK(fs::exists(t / "chains" / "chain_B.basis"));
    CHECK(fs::exists(t / "chains" / "manifest.json"));
    REQUIRE(run({"nma", "--pdb", str(t / "toy.pdb"), "--out", str(t / "whole"), "--whole", "--k", "10"}).code == 0);
    CHECK(fs::exists(t / "whole" / "whole.basis"));
    CHECK(fs::exists(t / "toy.pdb.manifest.json"));
}

TEST_CASE("simulate, fit and analyze are independent of the thread count") {
    TempDir a, b;
    small_dataset(a, "1");
    small_dataset(b, "4");
    for (const char* f : {"images.f32", "clean.f32", "poses.json", "gt_latents.json", "gt_structures.f64"})
        CHECK(slurp(a / "data" / "test" / f) == slurp(b / "data" / "test" / f));

    const std::vector<std::string> fit{"fit",          "--stack", str(a / "data" / "test"), "--pdb",
                                       str(a / "toy.pdb"), "--mode", "full", "--k", "4", "--iterations", "15",
                                       "--consensus", "10", "--consensus-batch", "3", "--seed", "2"};
    auto one = fit, four = fit;
    one.insert(one.end(), {"--out", str(a / "r1.json"), "--threads", "1"});
    four.insert(four.end(), {"--out", str(a / "r4.json"), "--threads", "4"});
    const Run r1 = run(one);
    REQUIRE_MESSAGE(r1.code == 0, r1.err);
    REQUIRE(run(four).code == 0);
    CHECK(slurp(a / "r1.json") == slurp(a / "r4.json"));
    CHECK(fs::exists(a / "r1.json.manifest.json"));

    const Json manifest = Json::parse(slurp(a / "r1.json.manifest.json"));
    CHECK(manifest["subcommand"] == "fit");
    CHECK(manifest["seed"] == 2);
    CHECK(manifest["inputs"].size() >= 2);

    const std::vector<std::string> analyze{"analyze", "--report", str(a / "r1.json"), "--pca", "rigid:1",
                                           "--stack", str(a / "data" / "test"), "--pdb", str(a / "toy.pdb")};
    auto an1 = analyze, an2 = analyze;
    an1.insert(an1.end(), {"--out", str(a / "plots1")});
    an2.insert(an2.end(), {"--out", str(a / "plots2")});
    const Run p = run(an1);
    REQUIRE_MESSAGE(p.code == 0, p.err);
    REQUIRE(run(an2).code == 0);
    for (const char* f : {"rmsd.csv", "rmsd.svg", "pca_variance.csv", "pca_scores.csv", "pca_scatter.svg",
                          "pc1_traversal.pdb", "error_map.csv", "error_histogram.svg"}) {
        CAPTURE(f);
        CHECK(fs::exists(a / "plots1" / f));
        CHECK(slurp(a / "plots1" / f) == slurp(a / "plots2" / f));
    }
    CHECK(read_structure(a / "plots1" / "pc1_traversal.pdb").atom_count() == 40);
    CHECK(fs::exists(a / "plots1" / "manifest.json"));

    REQUIRE(run({"export-pdb", "--report", str(a / "r1.json"), "--pdb", str(a / "toy.pdb"), "--out",
                 str(a / "fits.pdb")})
                .code == 0);
    CHECK(fs::exists(a / "fits.pdb"));
}

TEST_CASE("CHAINFIT_SEED is the seed fallback") {
    TempDir t;
    ::setenv("CHAINFIT_SEED", "7", 1);
    REQUIRE(run({"toy", "--out", str(t / "env.pdb")}).code == 0);
    ::unsetenv("CHAINFIT_SEED");
    REQUIRE(run({"toy", "--out", str(t / "flag.pdb"), "--seed", "7"}).code == 0);
    REQUIRE(run({"toy", "--out", str(t / "zero.pdb")}).code == 0);
    CHECK(slurp(t / "env.pdb") == slurp(t / "flag.pdb"));
    CHECK(slurp(t / "env.pdb") != slurp(t / "zero.pdb"));
    CHECK(Json::parse(slurp(t / "env.pdb.manifest.json"))["seed"] == 7);

    ::setenv("CHAINFIT_SEED", "seven", 1);
    CHECK(run({"toy", "--out", str(t / "bad.pdb")}).code == 1);
    ::unsetenv("CHAINFIT_SEED");
    CHECK_FALSE(fs::exists(t / "bad.pdb"));
}

TEST_CASE("shipped recipes parse") {
    const fs::path root(CHAINFIT_SOURCE_DIR);
    for (const char* name : {"full_scale.json", "desk_scale.json"}) {
        CAPTURE(name);
        const HeterogeneityRecipe r = recipe_from_json(Json::parse(slurp(root / "recipes" / name)));
        CHECK_NOTHROW(r.validate());
    }
    const HeterogeneityRecipe full = recipe_from_json(Json::parse(slurp(root / "recipes" / "full_scale.json")));
    CHECK(full.num_modes == 15);
    CHECK(full.train_count == 50000);
    CHECK(full.snr_db == -20.0);
}
