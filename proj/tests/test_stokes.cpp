#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <random>

#include "katolab/errors.hpp"
#include "katolab/grid.hpp"
#include "katolab/operators.hpp"
#include "katolab/stokes.hpp"

using namespace katolab;

namespace {

VectorGridField random_raw_field(const Domain& dom, std::mt19937_64& gen) {
    std::normal_distribution<double> nd(0.0, 1.0);
    VectorGridField f = VectorGridField::zeros(dom);
    for (double& x : f.u) x = nd(gen);
    for (double& x : f.v) x = nd(gen);
    return f;
}

NodeGridField random_stream(const Domain& dom, std::mt19937_64& gen) {
    std::normal_distribution<double> nd(0.0, 1.0);
    NodeGridField psi = NodeGridField::zeros(dom);
    for (int i = 1; i < dom.nx; ++i)
        for (int j = 1; j < dom.nx; ++j) psi.at(i, j) = nd(gen);
    return psi;
}

}  // namespace

TEST_CASE("eigenfields are orthonormal in the discrete inner product") {
    Domain dom = build_domain(16);
    SpectralBasis basis = build_basis(dom, 12);
    for (int i = 0; i < 12; ++i)
        for (int j = 0; j < 12; ++j) {
            double ip = dot(dom, basis.field(i), basis.field(j));
            CHECK(std::abs(ip - (i == j ? 1.0 : 0.0)) <= 1e-10);
        }
}

TEST_CASE("eigenpairs satisfy the projected operator equation") {
    Domain dom = build_domain(16);
    SpectralBasis basis = build_basis(dom, 10);
    for (int k = 0; k < 10; ++k) {
        VectorGridField a = basis.field(k);
        VectorGridField la = basis.leray->apply(discrete_laplacian(dom, a));
        double num = 0;
        for (size_t r = 0; r < la.u.size(); ++r) la.u[r] -= basis.eigenvalues[k] * a.u[r];
        for (size_t r = 0; r < la.v.size(); ++r) la.v[r] -= basis.eigenvalues[k] * a.v[r];
        num = norm(dom, la);
        CHECK(num <= 1e-8 * basis.eigenvalues[k]);
    }
}

TEST_CASE("eigenvalues are positive, sorted, and grid-converged") {
    double l1[3];
    std::vector<double> e16, e32;
    int idx = 0;
    for (int nx : {8, 16, 32}) {
        SpectralBasis b = build_basis(build_domain(nx), 6);
        for (int k = 0; k < 6; ++k) CHECK(b.eigenvalues[k] > 0);
        for (int k = 1; k < 6; ++k) CHECK(b.eigenvalues[k] >= b.eigenvalues[k - 1]);
        l1[idx++] = b.eigenvalues[0];
        if (nx == 16) e16 = b.eigenvalues;
        if (nx == 32) e32 = b.eigenvalues;
    }
    // second-order Richardson behavior of the ground eigenvalue
    double ratio = (l1[1] - l1[0]) / (l1[2] - l1[1]);
    CHECK(ratio > 3.3);
    CHECK(ratio < 4.7);
    // extrapolated ground eigenvalue lands on the square-cavity benchmark
    double extrap = l1[2] + (l1[2] - l1[1]) / 3.0;
    CHECK(extrap > 52.0);
    CHECK(extrap < 52.7);
    for (int k = 0; k < 5; ++k) {
        CHECK(std::abs(e16[k] / e32[k] - 1.0) < 0.05);
    }
}

TEST_CASE("eigenfields are discretely divergence-free with no-penetration walls") {
    Domain dom = build_domain(16);
    SpectralBasis basis = build_basis(dom, 8);
    for (int k = 0; k < 8; ++k) {
        VectorGridField a = basis.field(k);
        ScalarGridField d = divergence(dom, a);
        for (double x : d.data) CHECK(std::abs(x) <= 1e-12);
        for (int j = 0; j < dom.nx; ++j) {
            CHECK(a.u[0 * dom.nx + j] == 0.0);
            CHECK(a.u[dom.nx * dom.nx + j] == 0.0);
        }
        for (int i = 0; i < dom.nx; ++i) {
            CHECK(a.v[i * (dom.nx + 1) + 0] == 0.0);
            CHECK(a.v[i * (dom.nx + 1) + dom.nx] == 0.0);
        }
        // sign convention: the first entry above the noise floor is positive
        Eigen::VectorXd col = basis.faces.col(k);
        double amax = col.cwiseAbs().maxCoeff();
        for (int r = 0; r < col.size(); ++r) {
            if (std::abs(col[r]) > 1e-12 * amax) {
                CHECK(col[r] > 0);
                break;
            }
        }
    }
}

TEST_CASE("Leray projection is idempotent, self-adjoint, and exact on its range") {
    Domain dom = build_domain(16);
    LerayProjector proj(dom);
    std::mt19937_64 gen(71);
    for (int rep = 0; rep < 10; ++rep) {
        VectorGridField f = random_raw_field(dom, gen);
        VectorGridField pf = proj.apply(f);
        ScalarGridField d = divergence(dom, pf);
        for (double x : d.data) CHECK(std::abs(x) <= 1e-11);

        VectorGridField ppf = proj.apply(pf);
        double drift = 0;
        for (size_t k = 0; k < pf.u.size(); ++k) drift = std::max(drift, std::abs(ppf.u[k] - pf.u[k]));
        for (size_t k = 0; k < pf.v.size(); ++k) drift = std::max(drift, std::abs(ppf.v[k] - pf.v[k]));
        CHECK(drift <= 1e-12 * std::max(1.0, norm(dom, pf)));

        // self-adjointness: <Pf, g> == <f, Pg>
        VectorGridField g = random_raw_field(dom, gen);
        double lhs = dot(dom, pf, g);
        double rhs = dot(dom, f, proj.apply(g));
        CHECK(std::abs(lhs - rhs) <= 1e-11 * std::max(1.0, std::abs(lhs)));
    }

    // fixes divergence-free fields, annihilates gradients
    NodeGridField psi = random_stream(dom, gen);
    VectorGridField c = curl_to_faces(dom, psi);
    VectorGridField pc = proj.apply(c);
    double fix = 0;
    for (size_t k = 0; k < c.u.size(); ++k) fix = std::max(fix, std::abs(pc.u[k] - c.u[k]));
    for (size_t k = 0; k < c.v.size(); ++k) fix = std::max(fix, std::abs(pc.v[k] - c.v[k]));
    CHECK(fix <= 1e-12 * std::max(1.0, norm(dom, c)));

    ScalarGridField p = ScalarGridField::zeros(dom);
    std::normal_distribution<double> nd(0.0, 1.0);
    for (double& x : p.data) x = nd(gen);
    VectorGridField gp = gradient_to_faces(dom, p);
    VectorGridField pgp = proj.apply(gp);
    CHECK(norm(dom, pgp) <= 1e-11 * std::max(1.0, norm(dom, gp)));

    // free-function form agrees
    VectorGridField f = random_raw_field(dom, gen);
    VectorGridField via_free = leray_project(f);
    VectorGridField via_class = proj.apply(f);
    double gap = 0;
    for (size_t k = 0; k < f.u.size(); ++k) gap = std::max(gap, std::abs(via_free.u[k] - via_class.u[k]));
    CHECK(gap == 0.0);
}

TEST_CASE("coefficient round-trip and spectral tail bound") {
    Domain dom = build_domain(12);
    int full = (dom.nx - 1) * (dom.nx - 1);
    SpectralBasis basis = build_basis(dom, full);
    std::mt19937_64 gen(5);
    std::normal_distribution<double> nd(0.0, 1.0);

    std::vector<double> c(20);
    for (double& x : c) x = nd(gen);
    VelocityField f = basis.from_coeffs(c);
    std::vector<double> back = basis.project_grid(f.grid, 20);
    for (int k = 0; k < 20; ++k) CHECK(back[k] == doctest::Approx(c[k]).epsilon(1e-11));

    // tail bound lambda_n * ||(I-P_n)f||^2 <= ||f||_1^2 on random fields
    for (int rep = 0; rep < 100; ++rep) {
        VectorGridField raw = curl_to_faces(dom, random_stream(dom, gen));
        VelocityField vf = basis.from_grid(raw);
        int n = 10;
        VelocityField head = project_n(basis, vf, n);
        double tail2 = 0;
        for (int k = n; k < full; ++k) tail2 += vf.coeffs[k] * vf.coeffs[k];
        double h1sq = 0;
        for (int k = 0; k < full; ++k) h1sq += basis.eigenvalues[k] * vf.coeffs[k] * vf.coeffs[k];
        CHECK(basis.eigenvalues[n] * tail2 <= h1sq * (1 + 1e-10));
        // head + tail partition the energy
        double head2 = 0;
        for (int k = 0; k < n; ++k) head2 += head.coeffs[k] * head.coeffs[k];
        double tot = 0;
        for (int k = 0; k < full; ++k) tot += vf.coeffs[k] * vf.coeffs[k];
        CHECK(head2 + tail2 == doctest::Approx(tot).epsilon(1e-12));
    }

    // full-basis reconstruction reproduces any divergence-free field
    VectorGridField raw = curl_to_faces(dom, random_stream(dom, gen));
    VelocityField vf = basis.from_grid(raw);
    double err = 0;
    for (size_t k = 0; k < raw.u.size(); ++k) err = std::max(err, std::abs(vf.grid.u[k] - raw.u[k]));
    for (size_t k = 0; k < raw.v.size(); ++k) err = std::max(err, std::abs(vf.grid.v[k] - raw.v[k]));
    CHECK(err <= 1e-10 * std::max(1.0, norm(dom, raw)));
}

TEST_CASE("project_n edge cases") {
    Domain dom = build_domain(8);
    SpectralBasis basis = build_basis(dom, 6);
    std::vector<double> c = {1.0, -0.5, 0.25, 0.0, 2.0, -1.0};
    VelocityField f = basis.from_coeffs(c);
    VelocityField same = project_n(basis, f, 6);
    for (int k = 0; k < 6; ++k) CHECK(same.coeffs[k] == c[k]);
    VelocityField zero = project_n(basis, f, 0);
    CHECK(norm(dom, zero.grid) == 0.0);
    CHECK_THROWS_AS(project_n(basis, f, 7), ConfigError);
}

TEST_CASE("norm report ties coefficients and grid together") {
    Domain dom = build_domain(16);
    SpectralBasis basis = build_basis(dom, 10);

    VelocityField a0 = basis.from_coeffs({1.0});
    NormReport r = norms(basis, a0);
    CHECK(r.l2 == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.h1 == doctest::Approx(std::sqrt(basis.eigenvalues[0])).epsilon(1e-12));
    CHECK(r.w12 == doctest::Approx(std::sqrt(1.0 + basis.eigenvalues[0])).epsilon(1e-10));
    // whole-domain strip gradient equals the coefficient h1 norm exactly
    CHECK(r.strip_grad == doctest::Approx(r.h1).epsilon(1e-11));

    VelocityField z = basis.from_coeffs({});
    NormReport rz = norms(basis, z);
    CHECK(rz.l2 == 0.0);
    CHECK(rz.h1 == 0.0);
    CHECK(rz.w12 == 0.0);

    // strips partition the gradient energy
    std::mt19937_64 gen(9);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::vector<double> c(10);
    for (double& x : c) x = nd(gen);
    VelocityField f = basis.from_coeffs(c);
    BoundaryStrip strip = boundary_strip(dom, 0.25);
    NormReport rs = norms(basis, f, &strip);
    CHECK(rs.strip_grad <= rs.h1 * (1 + 1e-12));
    CHECK(rs.h1 >= std::sqrt(basis.eigenvalues[0]) * rs.l2 * (1 - 1e-12));
    // grid norms agree with coefficient norms for in-span fields
    NormReport rg = grid_norms(dom, f.grid, &strip);
    CHECK(rg.l2 == doctest::Approx(rs.l2).epsilon(1e-10));
    CHECK(rg.h1 == doctest::Approx(rs.h1).epsilon(1e-10));
    CHECK(rg.strip_grad == doctest::Approx(rs.strip_grad).epsilon(1e-10));
}

TEST_CASE("basis cache round-trips bit-exactly") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "katolab_cache_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
    setenv("KATOLAB_CACHE", dir.c_str(), 1);

    Domain dom = build_domain(12);
    SpectralBasis first = build_basis(dom, 9);
    CHECK(fs::exists(dir / "basis_nx12_n9_v1.bin"));
    SpectralBasis second = build_basis(dom, 9);
    CHECK(first.id == second.id);
    CHECK(first.eigenvalues == second.eigenvalues);
    CHECK((first.faces - second.faces).cwiseAbs().maxCoeff() == 0.0);
    CHECK((first.streams - second.streams).cwiseAbs().maxCoeff() == 0.0);

    // corrupted cache entries are rebuilt, not trusted
    {
        std::FILE* f = std::fopen((dir / "basis_nx12_n9_v1.bin").c_str(), "r+b");
        REQUIRE(f != nullptr);
        std::fseek(f, 64, SEEK_SET);
        double junk = 1e300;
        std::fwrite(&junk, sizeof junk, 1, f);
        std::fclose(f);
    }
    SpectralBasis third = build_basis(dom, 9);
    CHECK(third.id == first.id);
    CHECK((first.faces - third.faces).cwiseAbs().maxCoeff() == 0.0);

    unsetenv("KATOLAB_CACHE");
    fs::remove_all(dir);
}

TEST_CASE("basis construction rejects invalid mode counts") {
    Domain dom = build_domain(8);
    CHECK_THROWS_AS(build_basis(dom, 0), ConfigError);
    CHECK_THROWS_AS(build_basis(dom, 50), ConfigError);
    CHECK_NOTHROW(build_basis(dom, 49));
}
