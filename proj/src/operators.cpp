#include "katolab/operators.hpp"

#include <cmath>

#include "katolab/errors.hpp"

namespace katolab {

namespace stag {

// Index helpers shared by all stages. u faces: i in [0,nx], j in [0,nx-1],
// flat i*nx+j. v faces: i in [0,nx-1], j in [0,nx], flat i*(nx+1)+j.
// Cells: i,j in [0,nx-1], flat i*nx+j. Nodes: i,j in [0,nx], flat i*(nx+1)+j.

std::vector<double> dx_u_to_cells(const Domain& dom, const std::vector<double>& u) {
    int nx = dom.nx;
    double ih = 1.0 / dom.h;
    std::vector<double> c(static_cast<size_t>(nx) * nx);
    for (int i = 0; i < nx; ++i)
        for (int j = 0; j < nx; ++j)
            c[i * nx + j] = (u[(i + 1) * nx + j] - u[i * nx + j]) * ih;
    return c;
}

std::vector<double> dx_u_to_cells_T(const Domain& dom, const std::vector<double>& c) {
    int nx = dom.nx;
    double ih = 1.0 / dom.h;
    std::vector<double> u(static_cast<size_t>(nx + 1) * nx, 0.0);
    for (int i = 0; i <= nx; ++i)
        for (int j = 0; j < nx; ++j) {
            double s = 0;
            if (i >= 1) s += c[(i - 1) * nx + j];
            if (i <= nx - 1) s -= c[i * nx + j];
            u[i * nx + j] = s * ih;
        }
    return u;
}

std::vector<double> avg_u_to_cells(const Domain& dom, const std::vector<double>& u) {
    int nx = dom.nx;
    std::vector<double> c(static_cast<size_t>(nx) * nx);
    for (int i = 0; i < nx; ++i)
        for (int j = 0; j < nx; ++j)
            c[i * nx + j] = 0.5 * (u[i * nx + j] + u[(i + 1) * nx + j]);
    return c;
}

std::vector<double> avg_cells_to_u(const Domain& dom, const std::vector<double>& c) {
    int nx = dom.nx;
    std::vector<double> u(static_cast<size_t>(nx + 1) * nx, 0.0);
    for (int i = 1; i < nx; ++i)
        for (int j = 0; j < nx; ++j)
            u[i * nx + j] = 0.5 * (c[(i - 1) * nx + j] + c[i * nx + j]);
    return u;
}

std::vector<double> avg_cells_to_u_T(const Domain& dom, const std::vector<double>& u) {
    int nx = dom.nx;
    std::vector<double> c(static_cast<size_t>(nx) * nx, 0.0);
    for (int i = 0; i < nx; ++i)
        for (int j = 0; j < nx; ++j) {
            double s = 0;
            if (i >= 1) s += u[i * nx + j];
            if (i + 1 <= nx - 1) s += u[(i + 1) * nx + j];
            c[i * nx + j] = 0.5 * s;
        }
    return c;
}

std::vector<double> dy_u_to_nodes(const Domain& dom, const std::vector<double>& u) {
    int nx = dom.nx;
    double ih = 1.0 / dom.h;
    std::vector<double> n(static_cast<size_t>(nx + 1) * (nx + 1));
    for (int i = 0; i <= nx; ++i) {
        n[i * (nx + 1) + 0] = 2.0 * u[i * nx + 0] * ih;
        for (int j = 1; j <= nx - 1; ++j)
            n[i * (nx + 1) + j] = (u[i * nx + j] - u[i * nx + j - 1]) * ih;
        n[i * (nx + 1) + nx] = -2.0 * u[i * nx + nx - 1] * ih;
    }
    return n;
}

std::vector<double> dy_u_to_nodes_T(const Domain& dom, const std::vector<double>& n) {
    int nx = dom.nx;
    double ih = 1.0 / dom.h;
    std::vector<double> u(static_cast<size_t>(nx + 1) * nx, 0.0);
    for (int i = 0; i <= nx; ++i)
        for (int j = 0; j < nx; ++j) {
            double s = 0;
            if (j >= 1) s += n[i * (nx + 1) + j];
            if (j + 1 <= nx - 1) s -= n[i * (nx + 1) + j + 1];
            if (j == 0) s += 2.0 * n[i * (nx + 1) + 0];
            if (j == nx - 1) s -= 2.0 * n[i * (nx + 1) + nx];
            u[i * nx + j] = s * ih;
        }
    return u;
}

std::vector<double> avg_u_to_nodes(const Domain& dom, const std::vector<double>& u) {
    int nx = dom.nx;
    std::vector<double> n(static_cast<size_t>(nx + 1) * (nx + 1), 0.0);
    for (int i = 0; i <= nx; ++i)
        for (int j = 1; j <= nx - 1; ++j)
            n[i * (nx + 1) + j] = 0.5 * (u[i * nx + j - 1] + u[i * nx + j]);
    return n;
}

std::vector<double> avg_u_to_nodes_T(const Domain& dom, const std::vector<double>& n) {
    int nx = dom.nx;
    std::vector<double> u(static_cast<size_t>(nx + 1) * nx, 0.0);
    for (int i = 0; i <= nx; ++i)
        for (int j = 0; j < nx; ++j) {
            double s = 0;
            if (j >= 1) s += n[i * (nx + 1) + j];
            if (j + 1 <= nx - 1) s += n[i * (nx + 1) + j + 1];
            u[i * nx + j] = 0.5 * s;
        }
    return u;
}

std::vector<double> avg_nodes_to_u(const Domain& dom, const std::vector<double>& n) {
    int nx = dom.nx;
    std::vector<double> u(static_cast<size_t>(nx + 1) * nx);
    for (int i = 0; i <= nx; ++i)
        for (int j = 0; j < nx; ++j)
            u[i * nx + j] = 0.5 * (n[i * (nx + 1) + j] + n[i * (nx + 1) + j + 1]);
    return u;
}

std::vector<double> avg_nodes_to_u_T(const Domain& dom, const std::vector<double>& u) {
    int nx = dom.nx;
    std::vector<double> n(static_cast<size_t>(nx + 1) * (nx + 1), 0.0);
    for (int i = 0; i <= nx; ++i)
        for (int j = 0; j <= nx; ++j) {
            double s = 0;
            if (j <= nx - 1) s += u[i * nx + j];
            if (j >= 1) s += u[i * nx + j - 1];
            n[i * (nx + 1) + j] = 0.5 * s;
        }
    return n;
}

std::vector<double> dy_v_to_cells(const Domain& dom, const std::vector<double>& v) {
    int nx = dom.nx;
    double ih = 1.0 / dom.h;
    std::vector<double> c(static_cast<size_t>(nx) * nx);
    for (int i = 0; i < nx; ++i)
        for (int j = 0; j < nx; ++j)
            c[i * nx + j] = (v[i * (nx + 1) + j + 1] - v[i * (nx + 1) + j]) * ih;
    return c;
}

std::vector<double> dy_v_to_cells_T(const Domain& dom, const std::vector<double>& c) {
    int nx = dom.nx;
    double ih = 1.0 / dom.h;
    std::vector<double> v(static_cast<size_t>(nx) * (nx + 1), 0.0);
    for (int i = 0; i < nx; ++i)
        for (int j = 0; j <= nx; ++j) {
            double s = 0;
            if (j >= 1) s += c[i * nx + j - 1];
            if (j <= nx - 1) s -= c[i * nx + j];
            v[i * (nx + 1) + j] = s * ih;
        }
    return v;
}

std::vector<double> avg_v_to_cells(const Domain& dom, const std::vector<double>& v) {
    int nx = dom.nx;
    std::vector<double> c(static_cast<size_t>(nx) * nx);
    for (int i = 0; i < nx; ++i)
        for (int j = 0; j < nx; ++j)
            c[i * nx + j] = 0.5 * (v[i * (nx + 1) + j] + v[i * (nx + 1) + j + 1]);
    return c;
}

std::vector<double> avg_cells_to_v(const Domain& dom, const std::vector<double>& c) {
    int nx = dom.nx;
    std::vector<double> v(static_cast<size_t>(nx) * (nx + 1), 0.0);
    for (int i = 0; i < nx; ++i)
        for (int j = 1; j < nx; ++j)
            v[i * (nx + 1) + j] = 0.5 * (c[i * nx + j - 1] + c[i * nx + j]);
    return v;
}

std::vector<double> avg_cells_to_v_T(const Domain& dom, const std::vector<double>& v) {
    int nx = dom.nx;
    std::vector<double> c(static_cast<size_t>(nx) * nx, 0.0);
    for (int i = 0; i < nx; ++i)
        for (int j = 0; j < nx; ++j) {
            double s = 0;
            if (j >= 1) s += v[i * (nx + 1) + j];
            if (j + 1 <= nx - 1) s += v[i * (nx + 1) + j + 1];
            c[i * nx + j] = 0.5 * s;
        }
    return c;
}

std::vector<double> dx_v_to_nodes(const Domain& dom, const std::vector<double>& v) {
    int nx = dom.nx;
    double ih = 1.0 / dom.h;
    std::vector<double> n(static_cast<size_t>(nx + 1) * (nx + 1));
    for (int j = 0; j <= nx; ++j) {
        n[0 * (nx + 1) + j] = 2.0 * v[0 * (nx + 1) + j] * ih;
        for (int i = 1; i <= nx - 1; ++i)
            n[i * (nx + 1) + j] = (v[i * (nx + 1) + j] - v[(i - 1) * (nx + 1) + j]) * ih;
        n[nx * (nx + 1) + j] = -2.0 * v[(nx - 1) * (nx + 1) + j] * ih;
    }
    return n;
}

std::vector<double> dx_v_to_nodes_T(const Domain& dom, const std::vector<double>& n) {
    int nx = dom.nx;
    double ih = 1.0 / dom.h;
    std::vector<double> v(static_cast<size_t>(nx) * (nx + 1), 0.0);
    for (int i = 0; i < nx; ++i)
        for (int j = 0; j <= nx; ++j) {
            double s = 0;
            if (i >= 1) s += n[i * (nx + 1) + j];
            if (i + 1 <= nx - 1) s -= n[(i + 1) * (nx + 1) + j];
            if (i == 0) s += 2.0 * n[0 * (nx + 1) + j];
            if (i == nx - 1) s -= 2.0 * n[nx * (nx + 1) + j];
            v[i * (nx + 1) + j] = s * ih;
        }
    return v;
}

std::vector<double> avg_v_to_nodes(const Domain& dom, const std::vector<double>& v) {
    int nx = dom.nx;
    std::vector<double> n(static_cast<size_t>(nx + 1) * (nx + 1), 0.0);
    for (int i = 1; i <= nx - 1; ++i)
        for (int j = 0; j <= nx; ++j)
            n[i * (nx + 1) + j] = 0.5 * (v[(i - 1) * (nx + 1) + j] + v[i * (nx + 1) + j]);
    return n;
}

std::vector<double> avg_v_to_nodes_T(const Domain& dom, const std::vector<double>& n) {
    int nx = dom.nx;
    std::vector<double> v(static_cast<size_t>(nx) * (nx + 1), 0.0);
    for (int i = 0; i < nx; ++i)
        for (int j = 0; j <= nx; ++j) {
            double s = 0;
            if (i >= 1) s += n[i * (nx + 1) + j];
            if (i + 1 <= nx - 1) s += n[(i + 1) * (nx + 1) + j];
            v[i * (nx + 1) + j] = 0.5 * s;
        }
    return v;
}

std::vector<double> avg_nodes_to_v(const Domain& dom, const std::vector<double>& n) {
    int nx = dom.nx;
    std::vector<double> v(static_cast<size_t>(nx) * (nx + 1));
    for (int i = 0; i < nx; ++i)
        for (int j = 0; j <= nx; ++j)
            v[i * (nx + 1) + j] = 0.5 * (n[i * (nx + 1) + j] + n[(i + 1) * (nx + 1) + j]);
    return v;
}

std::vector<double> avg_nodes_to_v_T(const Domain& dom, const std::vector<double>& v) {
    int nx = dom.nx;
    std::vector<double> n(static_cast<size_t>(nx + 1) * (nx + 1), 0.0);
    for (int i = 0; i <= nx; ++i)
        for (int j = 0; j <= nx; ++j) {
            double s = 0;
            if (i <= nx - 1) s += v[i * (nx + 1) + j];
            if (i >= 1) s += v[(i - 1) * (nx + 1) + j];
            n[i * (nx + 1) + j] = 0.5 * s;
        }
    return n;
}

}  // namespace stag

namespace {

void require_same_grid(const Domain& dom, int field_nx, const char* what) {
    if (field_nx != dom.nx) throw ConfigError(std::string(what) + ": grid mismatch");
}

void mul_inplace(std::vector<double>& a, const std::vector<double>& b) {
    for (size_t k = 0; k < a.size(); ++k) a[k] *= b[k];
}

void add_inplace(std::vector<double>& a, const std::vector<double>& b) {
    for (size_t k = 0; k < a.size(); ++k) a[k] += b[k];
}

}  // namespace

VectorGridField zero_wall_normal(const VectorGridField& f) {
    VectorGridField g = f;
    int nx = g.nx;
    for (int j = 0; j < nx; ++j) {
        g.u[0 * nx + j] = 0.0;
        g.u[nx * nx + j] = 0.0;
    }
    for (int i = 0; i < nx; ++i) {
        g.v[i * (nx + 1) + 0] = 0.0;
        g.v[i * (nx + 1) + nx] = 0.0;
    }
    return g;
}

ScalarGridField divergence(const Domain& dom, const VectorGridField& f) {
    require_same_grid(dom, f.nx, "divergence");
    int nx = dom.nx;
    double ih = 1.0 / dom.h;
    ScalarGridField d = ScalarGridField::zeros(dom);
    for (int i = 0; i < nx; ++i)
        for (int j = 0; j < nx; ++j)
            d.data[i * nx + j] = (f.u[(i + 1) * nx + j] - f.u[i * nx + j] +
                                  f.v[i * (nx + 1) + j + 1] - f.v[i * (nx + 1) + j]) * ih;
    return d;
}

VectorGridField gradient_to_faces(const Domain& dom, const ScalarGridField& p) {
    require_same_grid(dom, p.nx, "gradient_to_faces");
    int nx = dom.nx;
    double ih = 1.0 / dom.h;
    VectorGridField g = VectorGridField::zeros(dom);
    for (int i = 1; i < nx; ++i)
        for (int j = 0; j < nx; ++j)
            g.u[i * nx + j] = (p.data[i * nx + j] - p.data[(i - 1) * nx + j]) * ih;
    for (int i = 0; i < nx; ++i)
        for (int j = 1; j < nx; ++j)
            g.v[i * (nx + 1) + j] = (p.data[i * nx + j] - p.data[i * nx + j - 1]) * ih;
    return g;
}

VectorGridField curl_to_faces(const Domain& dom, const NodeGridField& psi) {
    require_same_grid(dom, psi.nx, "curl_to_faces");
    int nx = dom.nx;
    double ih = 1.0 / dom.h;
    VectorGridField f = VectorGridField::zeros(dom);
    for (int i = 0; i <= nx; ++i)
        for (int j = 0; j < nx; ++j)
            f.u[i * nx + j] = (psi.data[i * (nx + 1) + j + 1] - psi.data[i * (nx + 1) + j]) * ih;
    for (int i = 0; i < nx; ++i)
        for (int j = 0; j <= nx; ++j)
            f.v[i * (nx + 1) + j] = -(psi.data[(i + 1) * (nx + 1) + j] - psi.data[i * (nx + 1) + j]) * ih;
    return f;
}

VectorGridField advective_form(const Domain& dom, const VectorGridField& f,
                               const VectorGridField& g) {
    require_same_grid(dom, f.nx, "advective_form");
    require_same_grid(dom, g.nx, "advective_form");
    using namespace stag;
    VectorGridField out = VectorGridField::zeros(dom);

    std::vector<double> t = dx_u_to_cells(dom, g.u);
    mul_inplace(t, avg_u_to_cells(dom, f.u));
    out.u = avg_cells_to_u(dom, t);
    t = dy_u_to_nodes(dom, g.u);
    mul_inplace(t, avg_v_to_nodes(dom, f.v));
    add_inplace(out.u, avg_nodes_to_u(dom, t));

    t = dy_v_to_cells(dom, g.v);
    mul_inplace(t, avg_v_to_cells(dom, f.v));
    out.v = avg_cells_to_v(dom, t);
    t = dx_v_to_nodes(dom, g.v);
    mul_inplace(t, avg_u_to_nodes(dom, f.u));
    add_inplace(out.v, avg_nodes_to_v(dom, t));

    return out;
}

VectorGridField advective_form_adjoint(const Domain& dom, const VectorGridField& f,
                                       const VectorGridField& w) {
    require_same_grid(dom, f.nx, "advective_form_adjoint");
    require_same_grid(dom, w.nx, "advective_form_adjoint");
    using namespace stag;
    VectorGridField out = VectorGridField::zeros(dom);

    std::vector<double> t = avg_cells_to_u_T(dom, w.u);
    mul_inplace(t, avg_u_to_cells(dom, f.u));
    out.u = dx_u_to_cells_T(dom, t);
    t = avg_nodes_to_u_T(dom, w.u);
    mul_inplace(t, avg_v_to_nodes(dom, f.v));
    add_inplace(out.u, dy_u_to_nodes_T(dom, t));

    t = avg_cells_to_v_T(dom, w.v);
    mul_inplace(t, avg_v_to_cells(dom, f.v));
    out.v = dy_v_to_cells_T(dom, t);
    t = avg_nodes_to_v_T(dom, w.v);
    mul_inplace(t, avg_u_to_nodes(dom, f.u));
    add_inplace(out.v, dx_v_to_nodes_T(dom, t));

    return out;
}

VectorGridField advect(const Domain& dom, const VectorGridField& f,
                       const VectorGridField& g) {
    VectorGridField a = advective_form(dom, f, g);
    VectorGridField b = advective_form_adjoint(dom, f, g);
    for (size_t k = 0; k < a.u.size(); ++k) a.u[k] = 0.5 * (a.u[k] - b.u[k]);
    for (size_t k = 0; k < a.v.size(); ++k) a.v[k] = 0.5 * (a.v[k] - b.v[k]);
    return zero_wall_normal(a);
}

VectorGridField discrete_laplacian(const Domain& dom, const VectorGridField& f) {
    require_same_grid(dom, f.nx, "discrete_laplacian");
    VectorGridField g = zero_wall_normal(f);
    int nx = dom.nx;
    double ih2 = 1.0 / (dom.h * dom.h);
    VectorGridField out = VectorGridField::zeros(dom);
    for (int i = 1; i < nx; ++i)
        for (int j = 0; j < nx; ++j) {
            double c = g.u[i * nx + j];
            double e = g.u[(i + 1) * nx + j];
            double w = g.u[(i - 1) * nx + j];
            double n = (j + 1 <= nx - 1) ? g.u[i * nx + j + 1] : -c;
            double s = (j - 1 >= 0) ? g.u[i * nx + j - 1] : -c;
            out.u[i * nx + j] = (4.0 * c - e - w - n - s) * ih2;
        }
    for (int i = 0; i < nx; ++i)
        for (int j = 1; j < nx; ++j) {
            double c = g.v[i * (nx + 1) + j];
            double n = g.v[i * (nx + 1) + j + 1];
            double s = g.v[i * (nx + 1) + j - 1];
            double e = (i + 1 <= nx - 1) ? g.v[(i + 1) * (nx + 1) + j] : -c;
            double w = (i - 1 >= 0) ? g.v[(i - 1) * (nx + 1) + j] : -c;
            out.v[i * (nx + 1) + j] = (4.0 * c - e - w - n - s) * ih2;
        }
    return out;
}

ScalarGridField gradient_pairing_cells(const Domain& dom, const VectorGridField& f,
                                       const VectorGridField& g) {
    require_same_grid(dom, f.nx, "gradient_pairing_cells");
    require_same_grid(dom, g.nx, "gradient_pairing_cells");
    using namespace stag;
    VectorGridField fz = zero_wall_normal(f);
    VectorGridField gz = zero_wall_normal(g);
    int nx = dom.nx;

    std::vector<double> fx = dx_u_to_cells(dom, fz.u), gx = dx_u_to_cells(dom, gz.u);
    std::vector<double> fy = dy_v_to_cells(dom, fz.v), gy = dy_v_to_cells(dom, gz.v);
    std::vector<double> fnu = dy_u_to_nodes(dom, fz.u), gnu = dy_u_to_nodes(dom, gz.u);
    std::vector<double> fnv = dx_v_to_nodes(dom, fz.v), gnv = dx_v_to_nodes(dom, gz.v);

    ScalarGridField e = ScalarGridField::zeros(dom);
    auto nid = [nx](int i, int j) { return i * (nx + 1) + j; };
    for (int i = 0; i < nx; ++i)
        for (int j = 0; j < nx; ++j) {
            double cross = fnu[nid(i, j)] * gnu[nid(i, j)] + fnv[nid(i, j)] * gnv[nid(i, j)] +
                           fnu[nid(i + 1, j)] * gnu[nid(i + 1, j)] + fnv[nid(i + 1, j)] * gnv[nid(i + 1, j)] +
                           fnu[nid(i, j + 1)] * gnu[nid(i, j + 1)] + fnv[nid(i, j + 1)] * gnv[nid(i, j + 1)] +
                           fnu[nid(i + 1, j + 1)] * gnu[nid(i + 1, j + 1)] + fnv[nid(i + 1, j + 1)] * gnv[nid(i + 1, j + 1)];
            e.data[i * nx + j] = fx[i * nx + j] * gx[i * nx + j] +
                                 fy[i * nx + j] * gy[i * nx + j] + 0.25 * cross;
        }
    return e;
}

ScalarGridField gradient_energy_cells(const Domain& dom, const VectorGridField& f) {
    return gradient_pairing_cells(dom, f, f);
}

double gradient_energy_one_sided(const Domain& dom, const VectorGridField& f) {
    require_same_grid(dom, f.nx, "gradient_energy_one_sided");
    int nx = dom.nx;
    double acc = 0.0;
    for (int i = 0; i <= nx; ++i)
        for (int j = 0; j < nx; ++j) {
            double a = f.uat(i, j);
            if (i < nx) { double d = f.uat(i + 1, j) - a; acc += d * d; }
            if (j + 1 < nx) { double d = f.uat(i, j + 1) - a; acc += d * d; }
        }
    for (int i = 0; i < nx; ++i)
        for (int j = 0; j <= nx; ++j) {
            double a = f.vat(i, j);
            if (i + 1 < nx) { double d = f.vat(i + 1, j) - a; acc += d * d; }
            if (j < nx) { double d = f.vat(i, j + 1) - a; acc += d * d; }
        }
    return acc;  // (d/h)^2 differences times h^2 quadrature cancel
}

}  // namespace katolab
