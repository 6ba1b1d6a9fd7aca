#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "katolab/errors.hpp"
#include "katolab/grid.hpp"
#include "katolab/poisson.hpp"

using namespace katolab;

namespace {

// Applies the cell-centered Neumann -Laplacian stencil directly.
std::vector<double> apply_neumann(const Domain& dom, const std::vector<double>& p) {
    int nx = dom.nx;
    double ih2 = 1.0 / (dom.h * dom.h);
    std::vector<double> out(p.size(), 0.0);
    for (int i = 0; i < nx; ++i)
        for (int j = 0; j < nx; ++j) {
            double c = p[i * nx + j], s = 0;
            if (i > 0) s += c - p[(i - 1) * nx + j];
            if (i < nx - 1) s += c - p[(i + 1) * nx + j];
            if (j > 0) s += c - p[i * nx + j - 1];
            if (j < nx - 1) s += c - p[i * nx + j + 1];
            out[i * nx + j] = s * ih2;
        }
    return out;
}

std::vector<double> apply_dirichlet(const Domain& dom, const std::vector<double>& p) {
    int m = dom.nx - 1;
    double ih2 = 1.0 / (dom.h * dom.h);
    std::vector<double> out(p.size(), 0.0);
    auto at = [&](int i, int j) { return (i >= 0 && i < m && j >= 0 && j < m) ? p[i * m + j] : 0.0; };
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j)
            out[i * m + j] = (4 * at(i, j) - at(i - 1, j) - at(i + 1, j) - at(i, j - 1) - at(i, j + 1)) * ih2;
    return out;
}

}  // namespace

TEST_CASE("node Dirichlet solver inverts its own stencil to roundoff") {
    Domain dom = build_domain(16);
    NodePoissonDirichlet solver(dom);
    int m = dom.nx - 1;
    std::vector<double> exact(static_cast<size_t>(m) * m);
    for (int i = 1; i <= m; ++i)
        for (int j = 1; j <= m; ++j)
            exact[(i - 1) * m + (j - 1)] =
                std::sin(M_PI * i * dom.h) * std::sin(M_PI * j * dom.h) + 0.3 * i * dom.h;
    std::vector<double> rhs = apply_dirichlet(dom, exact);
    std::vector<double> got = solver.solve(rhs);
    double err = 0;
    for (size_t k = 0; k < exact.size(); ++k) err = std::max(err, std::abs(got[k] - exact[k]));
    CHECK(err <= 1e-11);
}

TEST_CASE("node Dirichlet solver converges at second order") {
    double errs[2];
    int sizes[2] = {16, 32};
    for (int t = 0; t < 2; ++t) {
        Domain dom = build_domain(sizes[t]);
        NodePoissonDirichlet solver(dom);
        int m = dom.nx - 1;
        std::vector<double> rhs(static_cast<size_t>(m) * m);
        for (int i = 1; i <= m; ++i)
            for (int j = 1; j <= m; ++j)
                rhs[(i - 1) * m + (j - 1)] =
                    2 * M_PI * M_PI * std::sin(M_PI * i * dom.h) * std::sin(M_PI * j * dom.h);
        std::vector<double> got = solver.solve(rhs);
        double err = 0;
        for (int i = 1; i <= m; ++i)
            for (int j = 1; j <= m; ++j)
                err = std::max(err, std::abs(got[(i - 1) * m + (j - 1)] -
                                             std::sin(M_PI * i * dom.h) * std::sin(M_PI * j * dom.h)));
        errs[t] = err;
    }
    CHECK(errs[0] / errs[1] > 3.5);
    CHECK(errs[0] / errs[1] < 4.5);
}

TEST_CASE("solve_full pads the boundary ring with zeros") {
    Domain dom = build_domain(8);
    NodePoissonDirichlet solver(dom);
    NodeGridField rhs = NodeGridField::zeros(dom);
    rhs.at(4, 4) = 1.0;
    NodeGridField psi = solver.solve_full(rhs);
    for (int k = 0; k <= dom.nx; ++k) {
        CHECK(psi.at(0, k) == 0.0);
        CHECK(psi.at(dom.nx, k) == 0.0);
        CHECK(psi.at(k, 0) == 0.0);
        CHECK(psi.at(k, dom.nx) == 0.0);
    }
    CHECK(psi.at(4, 4) > 0.0);
}

TEST_CASE("cell Neumann solver inverts its own stencil up to a constant") {
    Domain dom = build_domain(16);
    CellPoissonNeumann solver(dom);
    int nx = dom.nx;
    std::vector<double> exact(static_cast<size_t>(nx) * nx);
    for (int i = 0; i < nx; ++i)
        for (int j = 0; j < nx; ++j)
            exact[i * nx + j] = std::cos(M_PI * dom.cell_x(i)) * std::cos(2 * M_PI * dom.cell_y(j));
    std::vector<double> rhs = apply_neumann(dom, exact);
    std::vector<double> got = solver.solve(rhs);
    double shift = got[0] - exact[0];
    double err = 0;
    for (size_t k = 0; k < exact.size(); ++k)
        err = std::max(err, std::abs(got[k] - exact[k] - shift));
    CHECK(err <= 1e-10);
}

TEST_CASE("cell Neumann solver converges on a smooth compatible problem") {
    double errs[2];
    int sizes[2] = {16, 32};
    for (int t = 0; t < 2; ++t) {
        Domain dom = build_domain(sizes[t]);
        CellPoissonNeumann solver(dom);
        int nx = dom.nx;
        std::vector<double> rhs(static_cast<size_t>(nx) * nx);
        std::vector<double> exact(rhs.size());
        for (int i = 0; i < nx; ++i)
            for (int j = 0; j < nx; ++j) {
                double phi = std::cos(M_PI * dom.cell_x(i)) * std::cos(2 * M_PI * dom.cell_y(j));
                exact[i * nx + j] = phi;
                rhs[i * nx + j] = 5 * M_PI * M_PI * phi;
            }
        // remove the quadrature-level mean so the discrete system is compatible
        double mean = 0;
        for (double x : rhs) mean += x;
        mean /= rhs.size();
        for (double& x : rhs) x -= mean;
        std::vector<double> got = solver.solve(rhs);
        double gm = 0, em = 0;
        for (size_t k = 0; k < exact.size(); ++k) { gm += got[k]; em += exact[k]; }
        gm /= exact.size();
        em /= exact.size();
        double err = 0;
        for (size_t k = 0; k < exact.size(); ++k)
            err = std::max(err, std::abs((got[k] - gm) - (exact[k] - em)));
        errs[t] = err;
    }
    CHECK(errs[0] / errs[1] > 3.0);
    CHECK(errs[0] / errs[1] < 5.0);
}

TEST_CASE("cell Neumann solver rejects incompatible data") {
    Domain dom = build_domain(8);
    CellPoissonNeumann solver(dom);
    std::vector<double> rhs(static_cast<size_t>(dom.nx) * dom.nx, 1.0);
    CHECK_THROWS_AS(solver.solve(rhs), NumericsError);
    std::vector<double> bad(3, 0.0);
    CHECK_THROWS_AS(solver.solve(bad), ConfigError);
}
