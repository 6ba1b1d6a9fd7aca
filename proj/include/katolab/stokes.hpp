#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "katolab/grid.hpp"
#include "katolab/poisson.hpp"

namespace katolab {

// Orthogonal projection onto the discretely divergence-free, no-penetration
// subspace: zero the stored wall-normal faces, then subtract the discrete
// gradient of the pressure Poisson solution. Idempotent and self-adjoint to
// roundoff; the factorization is reused across calls.
class LerayProjector {
public:
    explicit LerayProjector(const Domain& dom);
    VectorGridField apply(const VectorGridField& f) const;
    const Domain& domain() const { return dom_; }

private:
    Domain dom_;
    CellPoissonNeumann poisson_;
};

// Convenience wrapper that builds (and discards) the factorization.
VectorGridField leray_project(const VectorGridField& f);

// Stacking order for face vectors: all u faces first (i*nx+j), then all v
// faces (i*(nx+1)+j), matching the sparse operators used in the eigensolve.
Eigen::VectorXd stack_faces(const VectorGridField& f);
VectorGridField unstack_faces(const Domain& dom, const Eigen::VectorXd& x);

struct VelocityField;

// Discrete Stokes eigenpairs on one grid: lambda_k ascending, eigenfields
// orthonormal in the discrete L^2 inner product, stream functions retained so
// derived solvers can reuse them. `faces` holds the stacked eigenfields
// column by column.
struct SpectralBasis {
    Domain dom;
    int n_modes = 0;
    std::vector<double> eigenvalues;
    Eigen::MatrixXd streams;  // (nx-1)^2 x n_modes, interior stream functions
    Eigen::MatrixXd faces;    // (n_u + n_v) x n_modes
    std::uint64_t id = 0;
    std::shared_ptr<const LerayProjector> leray;

    VectorGridField field(int k) const;
    NodeGridField stream(int k) const;

    // Coefficients of f against the first n eigenfields (all when n < 0).
    std::vector<double> project_grid(const VectorGridField& f, int n = -1) const;
    VectorGridField reconstruct(const std::vector<double>& coeffs) const;

    VelocityField from_coeffs(std::vector<double> coeffs) const;
    VelocityField from_grid(const VectorGridField& f) const;
};

// A velocity state carried redundantly: spectral coefficients plus their grid
// reconstruction. The two stay coherent because the grid member is always the
// reconstruction of the coefficients.
struct VelocityField {
    std::vector<double> coeffs;
    VectorGridField grid;
    std::uint64_t basis_id = 0;
};

// Dense generalized eigensolve of the Stokes operator in stream-function
// variables. When the environment variable KATOLAB_CACHE names a directory,
// results are memoized there in a bit-exact binary format.
SpectralBasis build_basis(const Domain& dom, int n_modes);

// Truncation to the first n modes; tail coefficients are zeroed and the grid
// carrier re-reconstructed.
VelocityField project_n(const SpectralBasis& basis, const VelocityField& f, int n);

struct NormReport {
    double l2 = 0;
    double h1 = 0;
    double w12 = 0;
    double strip_grad = 0;
};

// l2 and h1 from coefficients, w12 and strip_grad from grid differences.
// Without a strip, strip_grad carries the whole-domain gradient norm.
NormReport norms(const SpectralBasis& basis, const VelocityField& f,
                 const BoundaryStrip* strip = nullptr);

// Same report computed purely from grid values, for fields outside the span.
NormReport grid_norms(const Domain& dom, const VectorGridField& f,
                      const BoundaryStrip* strip = nullptr);

}  // namespace katolab
