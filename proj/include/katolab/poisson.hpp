#pragma once

#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "katolab/grid.hpp"

namespace katolab {

// Prefactored 5-point -Laplacian on cell centers with homogeneous Neumann
// walls (ghost cell = interior cell). The operator annihilates constants, so
// the system is grounded by pinning cell 0 to zero; solve() accepts any
// mean-compatible right-hand side and returns the solution with phi[0] = 0.
class CellPoissonNeumann {
public:
    explicit CellPoissonNeumann(const Domain& dom);

    // Solves (-Lap_h) phi = rhs. Throws NumericsError if rhs is not
    // mean-compatible or the factored solve leaves a residual.
    std::vector<double> solve(const std::vector<double>& rhs) const;

    const Domain& domain() const { return dom_; }

private:
    Domain dom_;
    Eigen::SparseMatrix<double> lap_;       // ungrounded operator, for residual checks
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver_;
};

// Prefactored 5-point -Laplacian on interior nodes with zero boundary values.
// Interior nodes are (i, j) with 1 <= i, j <= nx - 1, flattened as
// (i - 1) * (nx - 1) + (j - 1).
class NodePoissonDirichlet {
public:
    explicit NodePoissonDirichlet(const Domain& dom);

    std::vector<double> solve(const std::vector<double>& rhs) const;

    // Convenience wrapper on full node fields: boundary entries of rhs are
    // ignored, the result carries zeros on the boundary ring.
    NodeGridField solve_full(const NodeGridField& rhs) const;

    const Domain& domain() const { return dom_; }
    int n_interior() const { return (dom_.nx - 1) * (dom_.nx - 1); }

private:
    Domain dom_;
    Eigen::SparseMatrix<double> lap_;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver_;
};

}  // namespace katolab
