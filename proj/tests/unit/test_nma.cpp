#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "chainfit/errors.hpp"
#include "chainfit/nma.hpp"
#include "support.hpp"

#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <filesystem>

using namespace chainfit;

namespace {

using Dense = std::vector<std::vector<double>>;

// Cyclic Jacobi rotations; returns eigenvalues (unsorted) and eigenvectors as columns of v.
std::vector<double> jacobi_eigen(Dense a, Dense& v) {
    const std::size_t n = a.size();
    v.assign(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) v[i][i] = 1.0;
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
        if (off < 1e-30) break;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::abs(a[p][q]) < 1e-300) continue;
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k][p], akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[p][k], aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v[k][p], vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
    }
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) w[i] = a[i][i];
    return w;
}

// Hessian of the two-atom system, written out by hand from the block formula.
Dense two_atom_hessian() {
    Dense h(6, std::vector<double>(6, 0.0));
    h[0][0] = h[3][3] = 1.0;
    h[0][3] = h[3][0] = -1.0;
    return h;
}

Eigen::VectorXd chain_coords(std::mt19937_64& rng, int n) {
    // Random walk with 3.8 Å steps: connected within the cutoff and non-collinear.
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd x(3 * n);
    Eigen::Vector3d p = Eigen::Vector3d::Zero();
    for (int j = 0; j < n; ++j) {
        x.segment<3>(3 * j) = p;
        Eigen::Vector3d d(normal(rng), normal(rng), normal(rng));
        p += 3.8 * d.normalized();
    }
    return x;
}

}  // namespace

TEST_CASE("two-atom Hessian blocks") {
    Eigen::VectorXd x(6);
    x << 0, 0, 0, 1, 0, 0;
    const Eigen::MatrixXd h = build_hessian(x, EnmConfig{});
    const Dense expected = two_atom_hessian();
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) CHECK(h(i, j) == doctest::Approx(expected[i][j]));
}

TEST_CASE("spring constant scales the Hessian") {
    Eigen::VectorXd x(6);
    x << 0, 0, 0, 1, 2, 2;
    EnmConfig c;
    c.spring_constant = 2.5;
    CHECK((build_hessian(x, c) - 2.5 * build_hessian(x, EnmConfig{})).norm() < 1e-12);
}

TEST_CASE("atoms beyond the cutoff do not interact") {
    Eigen::VectorXd x(9);
    x << 0, 0, 0, 3, 0, 0, 30, 0, 0;
    const Eigen::MatrixXd h = build_hessian(x, EnmConfig{});
    CHECK(h.block<3, 3>(0, 6).isZero());
    CHECK(h.block<3, 3>(3, 6).isZero());
    CHECK(h.block<3, 3>(6, 6).isZero());
}

TEST_CASE("Hessian is symmetric with zero row sums per 3-column group") {
    std::mt19937_64 rng(2);
    const Eigen::VectorXd x = chain_coords(rng, 25);
    const Eigen::MatrixXd h = build_hessian(x, EnmConfig{});
    CHECK((h - h.transpose()).cwiseAbs().maxCoeff() == 0.0);
    for (Eigen::Index r = 0; r < h.rows(); ++r)
        for (int a = 0; a < 3; ++a) {
            double sum = 0.0;
            for (Eigen::Index j = 0; j < h.cols() / 3; ++j) sum += h(r, 3 * j + a);
            CHECK(std::abs(sum) < 1e-12);
        }
}

TEST_CASE("coincident atoms and tiny inputs are rejected") {
    Eigen::VectorXd x(6);
    x << 1, 1, 1, 1, 1, 1;
    CHECK_THROWS_AS(build_hessian(x, EnmConfig{}), DegeneracyError);
    CHECK_THROWS_AS(build_hessian(Eigen::VectorXd::Zero(3), EnmConfig{}), Error);
}

TEST_CASE("ENM config validation") {
    EnmConfig c;
    c.cutoff = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.spring_constant = -1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.num_modes = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("two-atom system against brute-force diagonalization") {
    Dense vectors;
    const auto values = jacobi_eigen(two_atom_hessian(), vectors);
    int nonnull = -1, count = 0;
    for (int i = 0; i < 6; ++i)
        if (values[i] > 1e-9) {
            nonnull = i;
            ++count;
        }
    REQUIRE(count == 1);

    Eigen::VectorXd x(6);
    x << 0, 0, 0, 1, 0, 0;
    const auto basis = compute_modes(build_hessian(x, EnmConfig{}), x, 1);
    REQUIRE(basis.mode_count() == 1);
    CHECK(basis.eigenvalues[0] == doctest::Approx(values[nonnull]));
    double dot = 0.0;
    for (int i = 0; i < 6; ++i) dot += basis.modes(i, 0) * vectors[i][nonnull];
    CHECK(std::abs(dot) == doctest::Approx(1.0));
    // Opposed motion along x.
    CHECK(basis.modes(0, 0) == doctest::Approx(-basis.modes(3, 0)));
    CHECK(std::abs(basis.modes(0, 0)) == doctest::Approx(std::sqrt(0.5)));
    CHECK(basis.null_count == 5);
}

TEST_CASE("asking for more modes than exist reports the maximum") {
    Eigen::VectorXd x(6);
    x << 0, 0, 0, 1, 0, 0;
    try {
        compute_modes(build_hessian(x, EnmConfig{}), x, 2);
        FAIL("expected a capacity error");
    } catch (const CapacityError& e) {
        CHECK(e.maximum() == 1);
    }
}

TEST_CASE("connected non-collinear chain has six null modes") {
    std::mt19937_64 rng(4);
    for (int n : {3, 5, 20}) {
        const Eigen::VectorXd x = chain_coords(rng, n);
        const auto basis = compute_modes(build_hessian(x, EnmConfig{}), x, 1);
        CHECK(basis.null_count == 6);
    }
}

TEST_CASE("mode basis invariants") {
    std::mt19937_64 rng(6);
    const Eigen::VectorXd x = chain_coords(rng, 40);
    const Eigen::MatrixXd h = build_hessian(x, EnmConfig{});
    const auto basis = compute_modes(h, x, 20);
    const auto& u = basis.modes;
    CHECK((u.transpose() * u - Eigen::MatrixXd::Identity(20, 20)).cwiseAbs().maxCoeff() < 1e-8);
    for (int k = 1; k < 20; ++k) CHECK(basis.eigenvalues[k] >= basis.eigenvalues[k - 1]);
    CHECK(basis.eigenvalues.minCoeff() >= -1e-8);
    const Eigen::MatrixXd d = u.transpose() * h * u;
    const double scale = basis.eigenvalues.cwiseAbs().maxCoeff();
    CHECK((d - Eigen::MatrixXd(basis.eigenvalues.asDiagonal())).cwiseAbs().maxCoeff() < 1e-6 * scale);

    // Rigid-body displacements are in the null space, so stored modes are orthogonal to them.
    for (int a = 0; a < 3; ++a) {
        Eigen::VectorXd t = Eigen::VectorXd::Zero(x.size());
        for (Eigen::Index j = 0; j < x.size() / 3; ++j) t[3 * j + a] = 1.0;
        CHECK((h * t).cwiseAbs().maxCoeff() < 1e-6);
        CHECK((u.transpose() * t).cwiseAbs().maxCoeff() < 1e-8);

        Eigen::VectorXd w = Eigen::VectorXd::Zero(x.size());
        const Eigen::Vector3d axis = Eigen::Vector3d::Unit(a);
        for (Eigen::Index j = 0; j < x.size() / 3; ++j) w.segment<3>(3 * j) = axis.cross(Eigen::Vector3d(x.segment<3>(3 * j)));
        CHECK((h * w).cwiseAbs().maxCoeff() < 1e-6);
    }
    for (Eigen::Index k = 1; k < basis.cumulative_fraction.size(); ++k)
        CHECK(basis.cumulative_fraction[k] >= basis.cumulative_fraction[k - 1]);
    CHECK(basis.cumulative_fraction[basis.cumulative_fraction.size() - 1] <= 1.0 + 1e-12);
}

TEST_CASE("largest component of each mode is positive") {
    std::mt19937_64 rng(12);
    const Eigen::VectorXd x = chain_coords(rng, 15);
    const auto basis = compute_modes(build_hessian(x, EnmConfig{}), x, 8);
    for (int k = 0; k < 8; ++k) {
        Eigen::Index i;
        basis.modes.col(k).cwiseAbs().maxCoeff(&i);
        CHECK(basis.modes(i, k) > 0.0);
    }
}

TEST_CASE("ENM energy is zero at the reference and non-negative nearby") {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> normal(0.0, 0.3);
    const Eigen::VectorXd x = chain_coords(rng, 30);
    const Eigen::MatrixXd h = build_hessian(x, EnmConfig{});
    CHECK(enm_energy(h, x, x) == 0.0);
    for (int t = 0; t < 50; ++t) {
        Eigen::VectorXd y = x;
        for (Eigen::Index i = 0; i < y.size(); ++i) y[i] += normal(rng);
        CHECK(enm_energy(h, y, x) >= -1e-8);
    }
}

TEST_CASE("deform is the reference plus a linear combination of modes") {
    std::mt19937_64 rng(10);
    const Eigen::VectorXd x = chain_coords(rng, 20);
    const auto basis = compute_modes(build_hessian(x, EnmConfig{}), x, 6);
    CHECK(deform(basis, Eigen::VectorXd::Zero(6)) == x);
    for (int k = 0; k < 6; ++k)
        CHECK((deform(basis, Eigen::VectorXd::Unit(6, k)) - x).norm() == doctest::Approx(1.0).epsilon(1e-10));
    const Eigen::VectorXd a1 = Eigen::VectorXd::Random(6), a2 = Eigen::VectorXd::Random(6);
    const Eigen::VectorXd lhs = deform(basis, a1 + a2) - x;
    const Eigen::VectorXd rhs = (deform(basis, a1) - x) + (deform(basis, a2) - x);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
    CHECK_THROWS_AS(deform(basis, Eigen::VectorXd::Zero(5)), DimensionError);
}

TEST_CASE("per-chain bases do not depend on the thread count") {
    std::mt19937_64 rng(13);
    const auto s = testing::random_structure(rng, {30, 25, 20}, 5.0, 30.0);
    EnmConfig c;
    c.num_modes = 5;
    const auto one = per_chain_bases(s, c, 1);
    const auto many = per_chain_bases(s, c, 4);
    REQUIRE(one.chains.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(one.chains[i].modes == many.chains[i].modes);
        CHECK(one.chains[i].eigenvalues == many.chains[i].eigenvalues);
        CHECK(one.chains[i].atom_count() == s.chains()[i].size());
    }
    CHECK_FALSE(one.whole.has_value());
    const auto whole = whole_structure_basis(s, c);
    REQUIRE(whole.whole.has_value());
    CHECK(whole.whole->atom_count() == s.atom_count());
}

TEST_CASE("basis file round trip") {
    std::mt19937_64 rng(14);
    const Eigen::VectorXd x = chain_coords(rng, 12);
    EnmConfig c;
    c.num_modes = 4;
    const auto basis = compute_modes(build_hessian(x, c), x, 4);
    const auto path = std::filesystem::temp_directory_path() / "chainfit_test_basis.bin";
    write_basis(path, basis, c, "chain A");
    const auto back = read_basis(path);
    CHECK(back.reference == basis.reference);
    CHECK(back.eigenvalues == basis.eigenvalues);
    CHECK(back.modes == basis.modes);
    CHECK(std::filesystem::exists(path.string() + ".json"));
    CHECK(std::filesystem::file_size(path) == 16 + 8 * (12 * 3 + 4 + 12 * 3 * 4));
    std::filesystem::remove(path);
    std::filesystem::remove(path.string() + ".json");
    CHECK_THROWS_AS(read_basis(path), IoError);
}
