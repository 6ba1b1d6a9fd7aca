#pragma once

#include <vector>

#include "katolab/errors.hpp"

namespace katolab {

// Uniform staggered (MAC) grid on the unit square, nx x nx cells of width
// h = 1/nx. Scalars live at cell centers, the x-velocity component on
// vertical faces, the y-velocity component on horizontal faces, stream
// functions and vorticity at cell corners (nodes). No-slip applies on all
// four sides.
struct Domain {
    double width = 1.0;
    double height = 1.0;
    int nx = 0;
    int ny = 0;
    double h = 0.0;
    std::vector<double> cell_dist;  // distance from cell center to the boundary

    double cell_x(int i) const { return (i + 0.5) * h; }
    double cell_y(int j) const { return (j + 0.5) * h; }
    double node_x(int i) const { return i * h; }
    double node_y(int j) const { return j * h; }

    int n_cells() const { return nx * nx; }
    int cell(int i, int j) const { return i * nx + j; }
    double dist(int i, int j) const { return cell_dist[cell(i, j)]; }
};

Domain build_domain(int nx);

// Boundary strip {x : dist(x, boundary) < effective_width} with exact
// partial-cell area weights. The width is clamped below at h/2 so that the
// strip never degenerates to the empty set on a coarse grid.
struct BoundaryStrip {
    double nominal_width = 0.0;
    double effective_width = 0.0;
    std::vector<double> cell_weights;  // fraction of each cell inside the strip
    double area = 0.0;
};

BoundaryStrip boundary_strip(const Domain& dom, double width);

struct ScalarGridField {
    int nx = 0;
    std::vector<double> data;  // cell-centered, index i*nx + j

    static ScalarGridField zeros(const Domain& dom);
    static ScalarGridField from_data(const Domain& dom, std::vector<double> values);

    double& at(int i, int j) { return data[i * nx + j]; }
    double at(int i, int j) const { return data[i * nx + j]; }
};

// Face-centered vector field. u holds (nx+1) x nx values on vertical faces,
// v holds nx x (nx+1) values on horizontal faces. Wall-normal faces are
// stored explicitly; fields representing no-slip velocities keep them zero.
struct VectorGridField {
    int nx = 0;
    std::vector<double> u;  // index i*nx + j,     i in [0,nx], j in [0,nx-1]
    std::vector<double> v;  // index i*(nx+1) + j, i in [0,nx-1], j in [0,nx]

    static VectorGridField zeros(const Domain& dom);
    static VectorGridField from_data(const Domain& dom, std::vector<double> ucomp,
                                     std::vector<double> vcomp);

    double& uat(int i, int j) { return u[i * nx + j]; }
    double uat(int i, int j) const { return u[i * nx + j]; }
    double& vat(int i, int j) { return v[i * (nx + 1) + j]; }
    double vat(int i, int j) const { return v[i * (nx + 1) + j]; }
};

// Node-centered field, (nx+1) x (nx+1); carrier for stream functions and
// vorticity. Boundary nodes are the domain boundary.
struct NodeGridField {
    int nx = 0;
    std::vector<double> data;  // index i*(nx+1) + j

    static NodeGridField zeros(const Domain& dom);
    static NodeGridField from_data(const Domain& dom, std::vector<double> values);

    double& at(int i, int j) { return data[i * (nx + 1) + j]; }
    double at(int i, int j) const { return data[i * (nx + 1) + j]; }
};

// Midpoint-rule quadrature over the domain, optionally restricted to a strip.
double integrate(const Domain& dom, const ScalarGridField& f);
double integrate(const Domain& dom, const ScalarGridField& f, const BoundaryStrip& strip);

// Discrete L2 pairing h^2 * sum over all stored faces. Valid velocity fields
// are zero on wall-normal faces, so the uniform weight is exact for them.
double dot(const Domain& dom, const VectorGridField& f, const VectorGridField& g);
double norm(const Domain& dom, const VectorGridField& f);

void check_finite(const std::vector<double>& values, const char* what);

}  // namespace katolab
