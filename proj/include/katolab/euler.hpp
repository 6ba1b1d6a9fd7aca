#pragma once

#include <cstdint>
#include <vector>

#include "katolab/grid.hpp"
#include "katolab/stokes.hpp"

namespace katolab {

// Deterministic incompressible Euler reference solution on the unit square
// with impermeable walls, in vorticity / stream-function variables. The
// advecting Jacobian is the energy-conserving nine-point form, so the
// semi-discrete face energy is constant to roundoff; time stepping is
// classical fourth-order Runge-Kutta.
struct EulerSolution {
    Domain dom;
    double dt = 0.0;        // integration step
    int record_every = 1;   // recording stride in steps
    std::vector<double> times;
    std::vector<NodeGridField> stream_history;      // psi, zero on the boundary
    std::vector<VectorGridField> velocity_history;  // curl psi on faces
    double initial_energy = 0.0;                    // squared L2 norm at t = 0
    bool horizon_suspect = false;  // W^{1,inf}-type norm grew beyond 10x initial
    std::uint64_t digest = 0;      // content digest of the recorded solution
};

// Core solver. omega0 supplies the full initial vorticity including the
// wall closure rows; psi0 must carry zero boundary values and match omega0
// in the interior (psi0 is recorded verbatim at t = 0). Interior nodes
// follow the conserving Jacobian; wall rows are advected tangentially with
// one-sided velocities; corners are stationary.
EulerSolution solve_euler(const Domain& dom, const NodeGridField& psi0,
                          const NodeGridField& omega0, double T, double dt,
                          int record_every = 1);

// Derives the initial vorticity from psi0: five-point interior values and
// one-sided second normal differences on the walls.
EulerSolution solve_euler(const Domain& dom, const NodeGridField& psi0, double T, double dt,
                          int record_every = 1);

// Spectral entry point: shares the exact discrete initial state with the
// stochastic solver. Requires band-limited data (top-quarter coefficient
// energy at most 1e-8 of the total).
EulerSolution solve_euler(const SpectralBasis& basis, const VelocityField& u0, double T,
                          double dt, int record_every = 1);

// Boundary corrector v = curl(theta(d/width) psi): divergence-free by
// construction, equal to the reference velocity where the cutoff is one,
// exactly zero outside the strip.
struct Corrector {
    Domain dom;
    double nu = 0.0;
    double c_tilde = 0.0;
    double width = 0.0;       // effective strip width c_tilde * nu
    NodeGridField cutoff;     // theta(d/width) sampled at nodes
    BoundaryStrip strip;      // quadrature weights for the strip integrals
    std::vector<double> times;
    std::vector<VectorGridField> v_history;
};

// Cutoff profile: (1-s)^3 (1+3s) on [0,1], zero beyond; theta(0) = 1,
// theta'(0) = 0, |theta'| <= 2.
double corrector_cutoff(double s);

Corrector build_corrector(const EulerSolution& sol, double nu, double c_tilde);

// Advection pairing against the corrector at one recorded time, together
// with the strip-dissipation bound it is measured against. f must live in
// the Galerkin span (smooth, no-penetration); only its grid carrier is read.
struct PairingSample {
    double pairing = 0.0;      // <advect(f,f), v_t>
    double strip_bound = 0.0;  // nu * squared-gradient integral over the strip
};

PairingSample corrector_pairing(const Corrector& cor, int t_index, const VelocityField& f);

// Ladder statistics: sup over recorded times of the corrector's L2 norm,
// its slip-tolerant Sobolev norm (one-sided gradient energy; the corrector
// carries the reference trace, so the wall-closure form would hide the
// boundary-layer growth), and the L2 norm of its time derivative.
struct CorrectorEstimates {
    double sup_l2 = 0.0;
    double sup_w12 = 0.0;
    double sup_dt = 0.0;
};

CorrectorEstimates corrector_estimates(const Corrector& cor);

// L2 norms of the discrete time derivative of v: central differences at
// interior recorded times (length size-2); a single forward difference when
// only two times are recorded.
std::vector<double> time_derivative_norm(const Corrector& cor);

}  // namespace katolab
