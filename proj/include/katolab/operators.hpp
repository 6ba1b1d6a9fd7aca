#pragma once

#include <vector>

#include "katolab/grid.hpp"

namespace katolab {

// Elementary staggered-grid stages. Each maps one flat array to another and
// has a hand-derived transpose (_T) with respect to the plain Euclidean dot
// product; since every stored location carries the same h^2 quadrature
// weight, these are also the adjoints in the discrete L^2 inner product.
// Tangential velocity walls use mirror ghosts (ghost = -interior), normal
// velocity walls are stored faces. Index conventions follow grid.hpp.
namespace stag {

// u faces -> cells: x-difference and x-average
std::vector<double> dx_u_to_cells(const Domain& dom, const std::vector<double>& u);
std::vector<double> dx_u_to_cells_T(const Domain& dom, const std::vector<double>& c);
std::vector<double> avg_u_to_cells(const Domain& dom, const std::vector<double>& u);

// cells -> u faces: x-average; wall-normal faces receive zero
std::vector<double> avg_cells_to_u(const Domain& dom, const std::vector<double>& c);
std::vector<double> avg_cells_to_u_T(const Domain& dom, const std::vector<double>& u);

// u faces -> nodes: y-difference (mirror ghosts at y walls) and y-average
// (zero at y-wall node rows, where tangential velocity vanishes)
std::vector<double> dy_u_to_nodes(const Domain& dom, const std::vector<double>& u);
std::vector<double> dy_u_to_nodes_T(const Domain& dom, const std::vector<double>& n);
std::vector<double> avg_u_to_nodes(const Domain& dom, const std::vector<double>& u);
std::vector<double> avg_u_to_nodes_T(const Domain& dom, const std::vector<double>& n);

// nodes -> u faces: y-average of the two bounding nodes
std::vector<double> avg_nodes_to_u(const Domain& dom, const std::vector<double>& n);
std::vector<double> avg_nodes_to_u_T(const Domain& dom, const std::vector<double>& u);

// v-face mirrors of the six stages above
std::vector<double> dy_v_to_cells(const Domain& dom, const std::vector<double>& v);
std::vector<double> dy_v_to_cells_T(const Domain& dom, const std::vector<double>& c);
std::vector<double> avg_v_to_cells(const Domain& dom, const std::vector<double>& v);
std::vector<double> avg_cells_to_v(const Domain& dom, const std::vector<double>& c);
std::vector<double> avg_cells_to_v_T(const Domain& dom, const std::vector<double>& v);
std::vector<double> dx_v_to_nodes(const Domain& dom, const std::vector<double>& v);
std::vector<double> dx_v_to_nodes_T(const Domain& dom, const std::vector<double>& n);
std::vector<double> avg_v_to_nodes(const Domain& dom, const std::vector<double>& v);
std::vector<double> avg_v_to_nodes_T(const Domain& dom, const std::vector<double>& n);
std::vector<double> avg_nodes_to_v(const Domain& dom, const std::vector<double>& n);
std::vector<double> avg_nodes_to_v_T(const Domain& dom, const std::vector<double>& v);

}  // namespace stag

// Copy of f with the stored wall-normal faces set to zero.
VectorGridField zero_wall_normal(const VectorGridField& f);

// Discrete divergence at cell centers.
ScalarGridField divergence(const Domain& dom, const VectorGridField& f);

// Discrete gradient of a cell scalar onto faces; wall faces receive zero,
// consistent with homogeneous Neumann data for the pressure.
VectorGridField gradient_to_faces(const Domain& dom, const ScalarGridField& p);

// Perpendicular gradient of a node stream function: u = d_y psi, v = -d_x psi.
// Divergence-free by construction, wall-normal faces vanish when psi is
// constant along each wall.
VectorGridField curl_to_faces(const Domain& dom, const NodeGridField& psi);

// Advective form (f . grad) g assembled from the elementary stages, linear in
// g for fixed advecting field f, and its exact transpose in g.
VectorGridField advective_form(const Domain& dom, const VectorGridField& f,
                               const VectorGridField& g);
VectorGridField advective_form_adjoint(const Domain& dom, const VectorGridField& f,
                                       const VectorGridField& w);

// Skew-symmetrized advection: half the difference of the advective form and
// its transpose, with wall-normal output faces zeroed. For any advecting f
// and any g, w with zero wall-normal faces,
//   <advect(f,g), w> = -<g, advect(f,w)>
// holds to roundoff, so <advect(f,g), g> = 0 exactly.
VectorGridField advect(const Domain& dom, const VectorGridField& f,
                       const VectorGridField& g);

// Component-wise 5-point -Laplacian with stored Dirichlet walls for the
// normal component and mirror ghosts for the tangential component. Input
// wall-normal faces are treated as zero; output wall-normal faces are zero.
VectorGridField discrete_laplacian(const Domain& dom, const VectorGridField& f);

// Cell-distributed squared-gradient density: x-differences of u and
// y-differences of v live at cells; the node-based cross differences are
// averaged four-to-one onto cells after forming products. Integrating the
// result over the domain reproduces <discrete_laplacian(f), f> exactly, so
// strip-restricted integrals are consistent restrictions of the same
// quadratic form.
ScalarGridField gradient_energy_cells(const Domain& dom, const VectorGridField& f);
ScalarGridField gradient_pairing_cells(const Domain& dom, const VectorGridField& f,
                                       const VectorGridField& g);

// Squared-gradient energy without any wall closure: one-sided differences
// between stored faces only, h^2-weighted. gradient_energy_cells charges a
// (2u/h)^2 shear term at the walls, which is the right Dirichlet form for
// fields whose trace is meant to vanish but swamps the interior gradient of
// a field that carries a genuine slip trace (a boundary-layer corrector).
double gradient_energy_one_sided(const Domain& dom, const VectorGridField& f);

}  // namespace katolab
