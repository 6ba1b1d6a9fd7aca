#include "katolab/poisson.hpp"

#include <cmath>
#include <numeric>

#include "katolab/errors.hpp"

namespace katolab {

namespace {

using Trip = Eigen::Triplet<double>;

double max_abs(const std::vector<double>& v) {
    double m = 0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

}  // namespace

CellPoissonNeumann::CellPoissonNeumann(const Domain& dom) : dom_(dom) {
    int nx = dom.nx;
    int n = nx * nx;
    double ih2 = 1.0 / (dom.h * dom.h);
    std::vector<Trip> trips;
    trips.reserve(static_cast<size_t>(5) * n);
    for (int i = 0; i < nx; ++i) {
        for (int j = 0; j < nx; ++j) {
            int c = dom.cell(i, j);
            double diag = 0;
            // Neumann ghosts mirror the interior value, which removes the
            // off-diagonal and the corresponding diagonal contribution.
            if (i > 0) { trips.emplace_back(c, dom.cell(i - 1, j), -ih2); diag += ih2; }
            if (i < nx - 1) { trips.emplace_back(c, dom.cell(i + 1, j), -ih2); diag += ih2; }
            if (j > 0) { trips.emplace_back(c, dom.cell(i, j - 1), -ih2); diag += ih2; }
            if (j < nx - 1) { trips.emplace_back(c, dom.cell(i, j + 1), -ih2); diag += ih2; }
            trips.emplace_back(c, c, diag);
        }
    }
    lap_.resize(n, n);
    lap_.setFromTriplets(trips.begin(), trips.end());

    // Grounded copy: clear row/column 0 symmetrically and pin the diagonal.
    std::vector<Trip> gt;
    gt.reserve(trips.size());
    for (const Trip& t : trips) {
        if (t.row() == 0 || t.col() == 0) continue;
        gt.push_back(t);
    }
    gt.emplace_back(0, 0, 1.0);
    Eigen::SparseMatrix<double> grounded(n, n);
    grounded.setFromTriplets(gt.begin(), gt.end());
    solver_.compute(grounded);
    if (solver_.info() != Eigen::Success) {
        throw NumericsError("CellPoissonNeumann: factorization failed");
    }
}

std::vector<double> CellPoissonNeumann::solve(const std::vector<double>& rhs) const {
    int n = dom_.nx * dom_.nx;
    if (static_cast<int>(rhs.size()) != n) {
        throw ConfigError("CellPoissonNeumann::solve: rhs size mismatch");
    }
    double scale = max_abs(rhs);
    double mean = std::accumulate(rhs.begin(), rhs.end(), 0.0) / n;
    if (std::abs(mean) > 1e-8 * std::max(1.0, scale)) {
        throw NumericsError("CellPoissonNeumann::solve: rhs is not mean-compatible");
    }
    Eigen::VectorXd b(n);
    for (int k = 0; k < n; ++k) b[k] = rhs[k] - mean;
    b[0] = 0.0;
    Eigen::VectorXd x = solver_.solve(b);
    // Residual against the ungrounded operator and the mean-adjusted rhs.
    b[0] = rhs[0] - mean;
    double res = (lap_ * x - b).cwiseAbs().maxCoeff();
    if (!(res <= 1e-7 * std::max(1.0, scale))) {
        throw NumericsError("CellPoissonNeumann::solve: residual too large");
    }
    return std::vector<double>(x.data(), x.data() + n);
}

NodePoissonDirichlet::NodePoissonDirichlet(const Domain& dom) : dom_(dom) {
    int m = dom.nx - 1;
    int n = m * m;
    double ih2 = 1.0 / (dom.h * dom.h);
    auto idx = [m](int i, int j) { return (i - 1) * m + (j - 1); };
    std::vector<Trip> trips;
    trips.reserve(static_cast<size_t>(5) * n);
    for (int i = 1; i <= m; ++i) {
        for (int j = 1; j <= m; ++j) {
            int c = idx(i, j);
            trips.emplace_back(c, c, 4.0 * ih2);
            if (i > 1) trips.emplace_back(c, idx(i - 1, j), -ih2);
            if (i < m) trips.emplace_back(c, idx(i + 1, j), -ih2);
            if (j > 1) trips.emplace_back(c, idx(i, j - 1), -ih2);
            if (j < m) trips.emplace_back(c, idx(i, j + 1), -ih2);
        }
    }
    lap_.resize(n, n);
    lap_.setFromTriplets(trips.begin(), trips.end());
    solver_.compute(lap_);
    if (solver_.info() != Eigen::Success) {
        throw NumericsError("NodePoissonDirichlet: factorization failed");
    }
}

std::vector<double> NodePoissonDirichlet::solve(const std::vector<double>& rhs) const {
    int n = n_interior();
    if (static_cast<int>(rhs.size()) != n) {
        throw ConfigError("NodePoissonDirichlet::solve: rhs size mismatch");
    }
    Eigen::Map<const Eigen::VectorXd> b(rhs.data(), n);
    Eigen::VectorXd x = solver_.solve(b);
    double scale = std::max(1.0, b.cwiseAbs().maxCoeff());
    double res = (lap_ * x - b).cwiseAbs().maxCoeff();
    if (!(res <= 1e-7 * scale)) {
        throw NumericsError("NodePoissonDirichlet::solve: residual too large");
    }
    return std::vector<double>(x.data(), x.data() + n);
}

NodeGridField NodePoissonDirichlet::solve_full(const NodeGridField& rhs) const {
    if (rhs.nx != dom_.nx) {
        throw ConfigError("NodePoissonDirichlet::solve_full: grid mismatch");
    }
    int m = dom_.nx - 1;
    std::vector<double> b(static_cast<size_t>(m) * m);
    for (int i = 1; i <= m; ++i)
        for (int j = 1; j <= m; ++j) b[(i - 1) * m + (j - 1)] = rhs.at(i, j);
    std::vector<double> x = solve(b);
    NodeGridField out = NodeGridField::zeros(dom_);
    for (int i = 1; i <= m; ++i)
        for (int j = 1; j <= m; ++j) out.at(i, j) = x[(i - 1) * m + (j - 1)];
    return out;
}

}  // namespace katolab
