#include "katolab/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace katolab {

void check_finite(const std::vector<double>& values, const char* what) {
    for (double x : values) {
        if (!std::isfinite(x)) {
            throw ConfigError(std::string(what) + ": non-finite value rejected");
        }
    }
}

Domain build_domain(int nx) {
    if (nx < 8 || nx % 2 != 0) {
        throw ConfigError("build_domain: nx must be even and >= 8, got " + std::to_string(nx));
    }
    Domain dom;
    dom.nx = nx;
    dom.ny = nx;
    dom.h = 1.0 / nx;
    dom.cell_dist.resize(dom.n_cells());
    for (int i = 0; i < nx; ++i) {
        for (int j = 0; j < nx; ++j) {
            double x = dom.cell_x(i);
            double y = dom.cell_y(j);
            dom.cell_dist[dom.cell(i, j)] =
                std::min(std::min(x, 1.0 - x), std::min(y, 1.0 - y));
        }
    }
    return dom;
}

namespace {

// Fraction of the interval [a, a+h] covered by [lo, hi], clamped to [0,1].
double overlap_fraction(double a, double h, double lo, double hi) {
    double covered = std::min(a + h, hi) - std::max(a, lo);
    return std::max(0.0, std::min(1.0, covered / h));
}

}  // namespace

BoundaryStrip boundary_strip(const Domain& dom, double width) {
    if (!(width > 0.0)) {
        throw ConfigError("boundary_strip: width must be positive, got " + std::to_string(width));
    }
    BoundaryStrip strip;
    strip.nominal_width = width;
    strip.effective_width = std::max(width, dom.h / 2.0);
    double w = strip.effective_width;
    strip.cell_weights.resize(dom.n_cells());

    // The strip is the complement of the centered box [w, 1-w]^2, so the area
    // fraction of an axis-aligned cell factorizes into per-axis overlap
    // fractions. This is exact for every cell, corners included.
    double total = 0.0;
    for (int i = 0; i < dom.nx; ++i) {
        double fx_in = overlap_fraction(i * dom.h, dom.h, w, 1.0 - w);
        for (int j = 0; j < dom.nx; ++j) {
            double fy_in = overlap_fraction(j * dom.h, dom.h, w, 1.0 - w);
            double wt = 1.0 - fx_in * fy_in;
            strip.cell_weights[dom.cell(i, j)] = wt;
            total += wt;
        }
    }
    strip.area = total * dom.h * dom.h;
    return strip;
}

ScalarGridField ScalarGridField::zeros(const Domain& dom) {
    ScalarGridField f;
    f.nx = dom.nx;
    f.data.assign(dom.n_cells(), 0.0);
    return f;
}

ScalarGridField ScalarGridField::from_data(const Domain& dom, std::vector<double> values) {
    if (static_cast<int>(values.size()) != dom.n_cells()) {
        throw ConfigError("ScalarGridField: size mismatch with domain");
    }
    check_finite(values, "ScalarGridField");
    ScalarGridField f;
    f.nx = dom.nx;
    f.data = std::move(values);
    return f;
}

VectorGridField VectorGridField::zeros(const Domain& dom) {
    VectorGridField f;
    f.nx = dom.nx;
    f.u.assign((dom.nx + 1) * dom.nx, 0.0);
    f.v.assign(dom.nx * (dom.nx + 1), 0.0);
    return f;
}

VectorGridField VectorGridField::from_data(const Domain& dom, std::vector<double> ucomp,
                                           std::vector<double> vcomp) {
    size_t n = static_cast<size_t>(dom.nx + 1) * dom.nx;
    if (ucomp.size() != n || vcomp.size() != n) {
        throw ConfigError("VectorGridField: size mismatch with domain");
    }
    check_finite(ucomp, "VectorGridField.u");
    check_finite(vcomp, "VectorGridField.v");
    VectorGridField f;
    f.nx = dom.nx;
    f.u = std::move(ucomp);
    f.v = std::move(vcomp);
    return f;
}

NodeGridField NodeGridField::zeros(const Domain& dom) {
    NodeGridField f;
    f.nx = dom.nx;
    f.data.assign((dom.nx + 1) * (dom.nx + 1), 0.0);
    return f;
}

NodeGridField NodeGridField::from_data(const Domain& dom, std::vector<double> values) {
    if (values.size() != static_cast<size_t>(dom.nx + 1) * (dom.nx + 1)) {
        throw ConfigError("NodeGridField: size mismatch with domain");
    }
    check_finite(values, "NodeGridField");
    NodeGridField f;
    f.nx = dom.nx;
    f.data = std::move(values);
    return f;
}

double integrate(const Domain& dom, const ScalarGridField& f) {
    if (f.nx != dom.nx) {
        throw ConfigError("integrate: field does not match domain");
    }
    double s = 0.0;
    for (double x : f.data) s += x;
    return s * dom.h * dom.h;
}

double integrate(const Domain& dom, const ScalarGridField& f, const BoundaryStrip& strip) {
    if (f.nx != dom.nx) {
        throw ConfigError("integrate: field does not match domain");
    }
    if (strip.cell_weights.size() != f.data.size()) {
        throw ConfigError("integrate: strip does not match domain");
    }
    double s = 0.0;
    for (size_t k = 0; k < f.data.size(); ++k) s += f.data[k] * strip.cell_weights[k];
    return s * dom.h * dom.h;
}

double dot(const Domain& dom, const VectorGridField& f, const VectorGridField& g) {
    double s = 0.0;
    for (size_t k = 0; k < f.u.size(); ++k) s += f.u[k] * g.u[k];
    for (size_t k = 0; k < f.v.size(); ++k) s += f.v[k] * g.v[k];
    return s * dom.h * dom.h;
}

double norm(const Domain& dom, const VectorGridField& f) {
    return std::sqrt(dot(dom, f, f));
}

}  // namespace katolab
