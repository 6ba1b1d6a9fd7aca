#include "katolab/noise.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "katolab/digest.hpp"
#include "katolab/errors.hpp"
#include "katolab/operators.hpp"
#include "katolab/rng.hpp"

namespace katolab {

namespace {

void check_model(const SpectralBasis& basis, const NoiseModel& model) {
    if (model.basis_id != basis.id)
        throw ConfigError("noise model was built against a different basis");
}

void check_mode(const NoiseModel& model, int i) {
    if (i < 0 || i >= model.correlations.n_noise)
        throw ConfigError("noise mode index out of range");
}

VectorGridField sub_fields(const VectorGridField& a, const VectorGridField& b) {
    VectorGridField out = a;
    for (size_t k = 0; k < out.u.size(); ++k) out.u[k] -= b.u[k];
    for (size_t k = 0; k < out.v.size(); ++k) out.v[k] -= b.v[k];
    return out;
}

void add_fields(VectorGridField& a, const VectorGridField& b) {
    for (size_t k = 0; k < a.u.size(); ++k) a.u[k] += b.u[k];
    for (size_t k = 0; k < a.v.size(); ++k) a.v[k] += b.v[k];
}

VectorGridField scaled(const VectorGridField& a, double s) {
    VectorGridField out = a;
    for (double& x : out.u) x *= s;
    for (double& x : out.v) x *= s;
    return out;
}

std::vector<double> hadamard(std::vector<double> a, const std::vector<double>& b) {
    for (size_t k = 0; k < a.size(); ++k) a[k] *= b[k];
    return a;
}

// G_i applied on the grid, the reference route the precomputed matrices and
// the audit both measure against.
VectorGridField apply_g_grid(const NoiseModel& model, int i, const VectorGridField& f,
                             const Domain& dom,
                             const std::vector<VectorGridField>& additive_grids) {
    switch (model.kind) {
        case NoiseKind::additive:
            return additive_grids[i];
        case NoiseKind::multiplicative:
            return scaled(f, model.correlations.amplitudes[i]);
        case NoiseKind::transport_ito:
        case NoiseKind::transport_stratonovich:
            return model.leray->apply(advect(dom, model.correlations.xi[i].grid, f));
        case NoiseKind::salt: {
            VectorGridField out = advect(dom, model.correlations.xi[i].grid, f);
            add_fields(out, salt_gradient_term(dom, model.correlations.xi[i].grid, f));
            return out;
        }
    }
    throw ConfigError("unknown noise kind");
}

bool q_is_zero(NoiseKind kind) {
    return kind == NoiseKind::additive || kind == NoiseKind::transport_ito;
}

}  // namespace

VectorGridField apply_q(const NoiseModel& model, int i, const VectorGridField& f) {
    check_mode(model, i);
    const Domain& dom = model.leray->domain();
    switch (model.kind) {
        case NoiseKind::multiplicative:
            return scaled(model.leray->apply(f), model.correlations.amplitudes[i]);
        case NoiseKind::transport_stratonovich:
            return model.leray->apply(advect(dom, model.correlations.xi[i].grid, f));
        case NoiseKind::salt: {
            VectorGridField out = advect(dom, model.correlations.xi[i].grid, f);
            add_fields(out, salt_gradient_term(dom, model.correlations.xi[i].grid, f));
            return out;
        }
        default:
            return VectorGridField::zeros(dom);
    }
}

NoiseKind parse_noise_kind(const std::string& name) {
    if (name == "additive") return NoiseKind::additive;
    if (name == "multiplicative") return NoiseKind::multiplicative;
    if (name == "transport_ito") return NoiseKind::transport_ito;
    if (name == "transport_stratonovich") return NoiseKind::transport_stratonovich;
    if (name == "salt") return NoiseKind::salt;
    throw ConfigError("unknown noise kind '" + name +
                      "' (expected additive, multiplicative, transport_ito, "
                      "transport_stratonovich, or salt)");
}

std::string noise_kind_name(NoiseKind kind) {
    switch (kind) {
        case NoiseKind::additive: return "additive";
        case NoiseKind::multiplicative: return "multiplicative";
        case NoiseKind::transport_ito: return "transport_ito";
        case NoiseKind::transport_stratonovich: return "transport_stratonovich";
        case NoiseKind::salt: return "salt";
    }
    throw ConfigError("unknown noise kind");
}

double w2inf_norm(const Domain& dom, const VectorGridField& f) {
    const int nx = dom.nx;
    const double ih = 1.0 / dom.h;
    const double ih2 = ih * ih;
    double m = 0.0;
    auto consider = [&m](double x) { m = std::max(m, std::abs(x)); };

    for (int i = 0; i <= nx; ++i)
        for (int j = 0; j < nx; ++j) {
            consider(f.uat(i, j));
            if (i < nx) consider((f.uat(i + 1, j) - f.uat(i, j)) * ih);
            if (j < nx - 1) consider((f.uat(i, j + 1) - f.uat(i, j)) * ih);
            if (i >= 1 && i < nx)
                consider((f.uat(i + 1, j) - 2.0 * f.uat(i, j) + f.uat(i - 1, j)) * ih2);
            if (j >= 1 && j < nx - 1)
                consider((f.uat(i, j + 1) - 2.0 * f.uat(i, j) + f.uat(i, j - 1)) * ih2);
        }
    for (int i = 0; i < nx; ++i)
        for (int j = 0; j <= nx; ++j) {
            consider(f.vat(i, j));
            if (i < nx - 1) consider((f.vat(i + 1, j) - f.vat(i, j)) * ih);
            if (j < nx) consider((f.vat(i, j + 1) - f.vat(i, j)) * ih);
            if (i >= 1 && i < nx - 1)
                consider((f.vat(i + 1, j) - 2.0 * f.vat(i, j) + f.vat(i - 1, j)) * ih2);
            if (j >= 1 && j < nx)
                consider((f.vat(i, j + 1) - 2.0 * f.vat(i, j) + f.vat(i, j - 1)) * ih2);
        }
    return m;
}

VectorGridField salt_gradient_term(const Domain& dom, const VectorGridField& xi,
                                   const VectorGridField& f) {
    using namespace stag;
    VectorGridField out = VectorGridField::zeros(dom);

    std::vector<double> cux = avg_cells_to_u(dom, dx_u_to_cells(dom, xi.u));
    std::vector<double> cvy = avg_cells_to_v(dom, dy_v_to_cells(dom, xi.v));
    std::vector<double> nvx = dx_v_to_nodes(dom, xi.v);
    std::vector<double> nuy = dy_u_to_nodes(dom, xi.u);

    out.u = hadamard(f.u, cux);
    std::vector<double> t = avg_nodes_to_u(dom, hadamard(avg_v_to_nodes(dom, f.v), nvx));
    for (size_t k = 0; k < out.u.size(); ++k) out.u[k] += t[k];

    out.v = hadamard(f.v, cvy);
    t = avg_nodes_to_v(dom, hadamard(avg_u_to_nodes(dom, f.u), nuy));
    for (size_t k = 0; k < out.v.size(); ++k) out.v[k] += t[k];
    return out;
}

VectorGridField salt_gradient_term_adjoint(const Domain& dom, const VectorGridField& xi,
                                           const VectorGridField& g) {
    using namespace stag;
    VectorGridField out = VectorGridField::zeros(dom);

    std::vector<double> cux = avg_cells_to_u(dom, dx_u_to_cells(dom, xi.u));
    std::vector<double> cvy = avg_cells_to_v(dom, dy_v_to_cells(dom, xi.v));
    std::vector<double> nvx = dx_v_to_nodes(dom, xi.v);
    std::vector<double> nuy = dy_u_to_nodes(dom, xi.u);

    out.u = hadamard(g.u, cux);
    std::vector<double> t = avg_u_to_nodes_T(dom, hadamard(avg_nodes_to_v_T(dom, g.v), nuy));
    for (size_t k = 0; k < out.u.size(); ++k) out.u[k] += t[k];

    out.v = hadamard(g.v, cvy);
    t = avg_v_to_nodes_T(dom, hadamard(avg_nodes_to_u_T(dom, g.u), nvx));
    for (size_t k = 0; k < out.v.size(); ++k) out.v[k] += t[k];
    return out;
}

NoiseModel build_noise_model(const SpectralBasis& basis, NoiseKind kind, int n_noise,
                             double a0, double decay, std::uint64_t seed) {
    if (n_noise < 1) throw ConfigError("n_noise must be at least 1");
    if (n_noise > basis.n_modes)
        throw ConfigError("n_noise exceeds the number of basis modes");
    if (!(a0 >= 0.0) || !std::isfinite(a0))
        throw ConfigError("amplitude base a0 must be finite and nonnegative");
    if (!(decay >= 0.0) || !std::isfinite(decay))
        throw ConfigError("amplitude decay must be finite and nonnegative");

    const Domain& dom = basis.dom;
    const int n = basis.n_modes;

    NoiseModel model;
    model.kind = kind;
    model.basis_id = basis.id;
    model.n_modes = n;
    model.leray = basis.leray;
    model.correlations.n_noise = n_noise;
    model.correlations.amplitudes.resize(n_noise);
    for (int i = 0; i < n_noise; ++i)
        model.correlations.amplitudes[i] = a0 * std::pow(static_cast<double>(i + 1), -decay);

    const bool uses_xi = kind == NoiseKind::transport_ito ||
                         kind == NoiseKind::transport_stratonovich || kind == NoiseKind::salt;
    if (uses_xi) {
        for (int i = 0; i < n_noise; ++i) {
            std::vector<double> c(n, 0.0);
            c[i] = model.correlations.amplitudes[i];
            model.correlations.xi.push_back(basis.from_coeffs(std::move(c)));
            double w = w2inf_norm(dom, model.correlations.xi.back().grid);
            model.correlations.w2inf.push_back(w);
            model.correlations.w2inf_sum_sq += w * w;
        }
    }

    switch (kind) {
        case NoiseKind::additive: {
            model.ito_correction_enabled = false;
            NormalStream rng(seed);
            for (int i = 0; i < n_noise; ++i) {
                Eigen::VectorXd c(n);
                for (int k = 0; k < n; ++k) c[k] = rng.normal();
                double nrm = c.norm();
                if (nrm > 0.0) c *= model.correlations.amplitudes[i] / nrm;
                model.additive_coeffs.push_back(std::move(c));
            }
            break;
        }
        case NoiseKind::multiplicative: {
            model.ito_correction_enabled = true;
            double s2 = 0.0;
            for (int i = 0; i < n_noise; ++i) {
                double a = model.correlations.amplitudes[i];
                model.gmat.push_back(a * Eigen::MatrixXd::Identity(n, n));
                s2 += a * a;
            }
            model.correction = s2 * Eigen::MatrixXd::Identity(n, n);
            break;
        }
        case NoiseKind::transport_ito:
        case NoiseKind::transport_stratonovich:
        case NoiseKind::salt: {
            model.ito_correction_enabled = kind != NoiseKind::transport_ito;
            std::vector<VectorGridField> afields;
            afields.reserve(n);
            for (int l = 0; l < n; ++l) afields.push_back(basis.field(l));

            model.correction = Eigen::MatrixXd::Zero(n, n);
            for (int i = 0; i < n_noise; ++i) {
                const VectorGridField& xig = model.correlations.xi[i].grid;
                Eigen::MatrixXd G(n, n);
                for (int l = 0; l < n; ++l) {
                    VectorGridField w = advect(dom, xig, afields[l]);
                    if (kind == NoiseKind::salt)
                        add_fields(w, salt_gradient_term(dom, xig, afields[l]));
                    std::vector<double> col = basis.project_grid(w);
                    for (int m = 0; m < n; ++m) G(m, l) = col[m];

                    if (model.ito_correction_enabled) {
                        VectorGridField q1 = w;
                        if (kind == NoiseKind::transport_stratonovich)
                            q1 = basis.leray->apply(q1);
                        VectorGridField q2 = advect(dom, xig, q1);
                        if (kind == NoiseKind::salt)
                            add_fields(q2, salt_gradient_term(dom, xig, q1));
                        std::vector<double> ccol = basis.project_grid(q2);
                        for (int m = 0; m < n; ++m) model.correction(m, l) += ccol[m];
                    }
                }
                model.gmat.push_back(std::move(G));
            }
            break;
        }
    }
    if (model.correction.size() == 0) model.correction = Eigen::MatrixXd::Zero(n, n);
    return model;
}

VelocityField apply_noise_mode(const SpectralBasis& basis, const NoiseModel& model, int i,
                               const VelocityField& u) {
    check_model(basis, model);
    check_mode(model, i);
    if (u.basis_id != basis.id) throw ConfigError("field belongs to a different basis");

    const int n = basis.n_modes;
    std::vector<double> out(n, 0.0);
    if (model.kind == NoiseKind::additive) {
        const Eigen::VectorXd& c = model.additive_coeffs[i];
        for (int k = 0; k < n; ++k) out[k] = c[k];
    } else {
        Eigen::Map<const Eigen::VectorXd> c(u.coeffs.data(), n);
        Eigen::VectorXd y = model.gmat[i] * c;
        for (int k = 0; k < n; ++k) out[k] = y[k];
    }
    return basis.from_coeffs(std::move(out));
}

VelocityField ito_correction(const SpectralBasis& basis, const NoiseModel& model,
                             const VelocityField& u) {
    check_model(basis, model);
    if (!model.ito_correction_enabled)
        throw ConfigError("ito_correction called on a model without a correction term");
    if (u.basis_id != basis.id) throw ConfigError("field belongs to a different basis");
    const int n = basis.n_modes;
    Eigen::Map<const Eigen::VectorXd> c(u.coeffs.data(), n);
    Eigen::VectorXd y = model.correction * c;
    return basis.from_coeffs(std::vector<double>(y.data(), y.data() + n));
}

VectorGridField adjoint_support_part(const NoiseModel& model, int i, const VectorGridField& f) {
    check_mode(model, i);
    if (q_is_zero(model.kind))
        throw ConfigError("noise kind has no adjoint (Q_i = 0)");
    const Domain& dom = model.leray->domain();
    if (model.kind == NoiseKind::multiplicative) return VectorGridField::zeros(dom);
    return scaled(advect(dom, model.correlations.xi[i].grid, zero_wall_normal(f)), -1.0);
}

VectorGridField adjoint_bounded_part(const NoiseModel& model, int i, const VectorGridField& f) {
    check_mode(model, i);
    if (q_is_zero(model.kind))
        throw ConfigError("noise kind has no adjoint (Q_i = 0)");
    const Domain& dom = model.leray->domain();
    switch (model.kind) {
        case NoiseKind::multiplicative:
            return scaled(model.leray->apply(f), model.correlations.amplitudes[i]);
        case NoiseKind::transport_stratonovich:
            return VectorGridField::zeros(dom);
        case NoiseKind::salt:
            return salt_gradient_term_adjoint(dom, model.correlations.xi[i].grid, f);
        default:
            return VectorGridField::zeros(dom);
    }
}

VectorGridField apply_adjoint(const SpectralBasis& basis, const NoiseModel& model, int i,
                              const VelocityField& f) {
    check_model(basis, model);
    if (f.basis_id != basis.id) throw ConfigError("field belongs to a different basis");
    VectorGridField out = adjoint_support_part(model, i, f.grid);
    add_fields(out, adjoint_bounded_part(model, i, f.grid));
    return out;
}

namespace {

struct SpanNorms {
    double l2sq = 0, h1sq = 0, w12sq = 0, w22sq = 0;
};

SpanNorms span_norms(const SpectralBasis& basis, const std::vector<double>& c) {
    SpanNorms s;
    for (size_t k = 0; k < c.size(); ++k) {
        double lam = basis.eigenvalues[k];
        double ck2 = c[k] * c[k];
        s.l2sq += ck2;
        s.h1sq += lam * ck2;
        s.w22sq += (1.0 + lam) * (1.0 + lam) * ck2;
    }
    s.w12sq = s.l2sq + s.h1sq;
    return s;
}

VelocityField draw_field(const SpectralBasis& basis, NormalStream& rng) {
    const int n = basis.n_modes;
    const double scale =
        std::exp(std::log(0.05) + rng.uniform() * (std::log(2.0) - std::log(0.05)));
    std::vector<double> c(n);
    for (double& x : c) x = scale * rng.normal();
    return basis.from_coeffs(std::move(c));
}

constexpr int kAssumptions = 11;
const char* const kAssumptionNames[kAssumptions] = {
    "growth",        "lipschitz_w12",      "smoothing",        "energy_pairing",
    "pairing_self",  "pairing_cross",      "pairing_difference", "lipschitz_l2",
    "adjoint_bound", "adjoint_pairing",    "bounded_part",
};
constexpr bool kTwoConstant[kAssumptions] = {false, false, false, true,  false, false,
                                             false, false, false, true,  false};

struct Eval {
    double lhs = 0, A = 0, B = 0;
};

// lhs and majorant factors for every inequality family, one sample triple,
// one noise mode. Exponents p = q = 2 throughout.
void eval_sample(const SpectralBasis& basis, const NoiseModel& model, int i,
                 const VelocityField& f, const SpanNorms& nf, const VelocityField& g,
                 const SpanNorms& ng, const VelocityField& phi, const SpanNorms& nphi,
                 const VelocityField& fmg, const SpanNorms& nd,
                 const std::vector<VectorGridField>& additive_grids, Eval* out) {
    const Domain& dom = basis.dom;
    const bool qz = q_is_zero(model.kind);

    VectorGridField Gf = apply_g_grid(model, i, f.grid, dom, additive_grids);
    VectorGridField Gg = apply_g_grid(model, i, g.grid, dom, additive_grids);
    VectorGridField Gphi = apply_g_grid(model, i, phi.grid, dom, additive_grids);
    VectorGridField dG = sub_fields(Gf, Gg);

    const double Kfg = 1.0 + nf.l2sq + ng.l2sq + nf.w12sq + ng.w12sq;
    const double dg_l2sq = dot(dom, dG, dG);

    out[0] = {dot(dom, Gf, Gf), 1.0 + nf.w12sq, 0.0};
    out[1] = {dg_l2sq, (1.0 + nf.w12sq + ng.w12sq) * nd.w12sq, 0.0};

    if (!qz) {
        VectorGridField Qphi = apply_q(model, i, phi.grid);
        VectorGridField QQphi = apply_q(model, i, Qphi);
        VectorGridField Qd = apply_q(model, i, fmg.grid);
        VectorGridField Qs_d = adjoint_support_part(model, i, fmg.grid);
        add_fields(Qs_d, adjoint_bounded_part(model, i, fmg.grid));
        VectorGridField Qs_f = adjoint_support_part(model, i, f.grid);
        add_fields(Qs_f, adjoint_bounded_part(model, i, f.grid));
        VectorGridField Ahat_f = adjoint_bounded_part(model, i, f.grid);

        NormReport qn = grid_norms(dom, Qphi);
        out[2] = {qn.w12 * qn.w12, nphi.w22sq, 0.0};
        out[3] = {dot(dom, QQphi, phi.grid) + dot(dom, Gphi, Gphi), 1.0 + nphi.l2sq,
                  nphi.h1sq};
        out[8] = {dot(dom, Qs_f, Qs_f), nf.w12sq, 0.0};
        out[9] = {dot(dom, Qd, Qs_d) + dg_l2sq, Kfg * nd.l2sq, nd.w12sq};
        out[10] = {dot(dom, Ahat_f, Ahat_f), nf.l2sq, 0.0};
    } else {
        out[2] = {0.0, nphi.w22sq, 0.0};
        out[3] = {dot(dom, Gphi, Gphi), 1.0 + nphi.l2sq, nphi.h1sq};
        out[8] = {0.0, nf.w12sq, 0.0};
        out[9] = {dg_l2sq, Kfg * nd.l2sq, nd.w12sq};
        out[10] = {0.0, nf.l2sq, 0.0};
    }

    double t = dot(dom, Gf, f.grid);
    out[4] = {t * t, 1.0 + nf.l2sq * nf.l2sq, 0.0};
    t = dot(dom, Gf, g.grid);
    out[5] = {t * t, (1.0 + nf.l2sq + ng.l2sq) * ng.w12sq, 0.0};
    t = dot(dom, dG, phi.grid);
    out[6] = {t * t, (1.0 + nphi.w22sq) * nd.l2sq, 0.0};
    t = dot(dom, dG, fmg.grid);
    out[7] = {t * t, Kfg * nd.l2sq * nd.l2sq, 0.0};
}

}  // namespace

AssumptionAudit audit_assumptions(const SpectralBasis& basis, const NoiseModel& model,
                                  int samples, std::uint64_t seed) {
    check_model(basis, model);
    if (samples < 10) throw ConfigError("assumption audit needs at least 10 samples");

    const int K = model.correlations.n_noise;

    std::vector<VectorGridField> additive_grids;
    if (model.kind == NoiseKind::additive)
        for (int i = 0; i < K; ++i) {
            const Eigen::VectorXd& c = model.additive_coeffs[i];
            additive_grids.push_back(
                basis.reconstruct(std::vector<double>(c.data(), c.data() + c.size())));
        }

    const int cells = kAssumptions * K;
    std::vector<std::vector<Eval>> history(cells);  // two-constant fits need the samples
    std::vector<double> ratio_max(cells, 0.0), lhs_max(cells, 0.0), scale_max(cells, 0.0);
    std::vector<double> holdout_ratio(cells, 0.0);

    // Verification margin over the fitted constants. The fit is an empirical
    // max, so the held-out max sits above it with sampling noise; the margin
    // is deliberately generous because the audit's job is to catch wrong
    // homogeneity (orders of magnitude), not resample the same maximum.
    // Families whose left side is the square of a bilinear pairing inherit
    // the squared margin: an overshoot of m in the pairing appears as m^2.
    auto margin_for = [](int a) {
        const bool squared = a == 4 || a == 5 || a == 6 || a == 7;
        return squared ? 4.0 : 2.0;
    };

    auto run_pass = [&](std::uint64_t s, bool train, const std::vector<AssumptionRecord>* recs,
                        std::vector<int>* violations) {
        NormalStream rng(s);
        std::vector<Eval> ev(kAssumptions);
        for (int sample = 0; sample < samples; ++sample) {
            VelocityField f = draw_field(basis, rng);
            VelocityField g = draw_field(basis, rng);
            VelocityField phi = draw_field(basis, rng);
            std::vector<double> dc(f.coeffs);
            for (size_t k = 0; k < dc.size(); ++k) dc[k] -= g.coeffs[k];
            VelocityField fmg = basis.from_coeffs(std::move(dc));
            SpanNorms nf = span_norms(basis, f.coeffs), ng = span_norms(basis, g.coeffs),
                      nphi = span_norms(basis, phi.coeffs), nd = span_norms(basis, fmg.coeffs);

            for (int i = 0; i < K; ++i) {
                eval_sample(basis, model, i, f, nf, g, ng, phi, nphi, fmg, nd, additive_grids,
                            ev.data());
                for (int a = 0; a < kAssumptions; ++a) {
                    const int cell = a * K + i;
                    if (train) {
                        lhs_max[cell] = std::max(lhs_max[cell], ev[a].lhs);
                        scale_max[cell] = std::max(scale_max[cell], ev[a].A + ev[a].B);
                        if (kTwoConstant[a]) {
                            history[cell].push_back(ev[a]);
                        } else if (ev[a].A > 0.0) {
                            ratio_max[cell] =
                                std::max(ratio_max[cell], std::max(ev[a].lhs, 0.0) / ev[a].A);
                        }
                    } else {
                        const AssumptionRecord& r = (*recs)[cell];
                        const double den = r.c * ev[a].A + r.k * ev[a].B;
                        if (den > 0.0)
                            holdout_ratio[cell] =
                                std::max(holdout_ratio[cell], ev[a].lhs / den);
                        const double bound =
                            margin_for(a) * den + 1e-9 * (1.0 + ev[a].A + ev[a].B);
                        if (ev[a].lhs > bound) ++(*violations)[cell];
                    }
                }
            }
        }
    };

    run_pass(seed, true, nullptr, nullptr);

    std::vector<AssumptionRecord> records(cells);
    for (int a = 0; a < kAssumptions; ++a)
        for (int i = 0; i < K; ++i) {
            const int cell = a * K + i;
            AssumptionRecord& r = records[cell];
            r.assumption = kAssumptionNames[a];
            r.mode = i;
            r.max_lhs = lhs_max[cell];
            if (!kTwoConstant[a]) {
                r.c = ratio_max[cell];
                r.k = 0.0;
            } else if (lhs_max[cell] <= 1e-11 * std::max(1.0, scale_max[cell])) {
                // The left side never rose above roundoff: the inequality holds
                // neutrally and both constants are exactly zero.
                r.c = 0.0;
                r.k = 0.0;
            } else {
                // Deterministic two-constant fit: over a small candidate grid of
                // gradient budgets k (capped so the mode sum stays below 1),
                // take the smallest compatible c. Spending budget on k must buy
                // a real reduction in c, otherwise the smaller k wins.
                double k_pure = 0.0;
                for (const Eval& e : history[cell])
                    if (e.B > 0.0) k_pure = std::max(k_pure, std::max(e.lhs, 0.0) / e.B);
                const double kcap = std::min(k_pure, 0.9 / static_cast<double>(K));
                const double cands[4] = {0.0, kcap / 4.0, kcap / 2.0, kcap};
                double best_c = -1.0, best_k = 0.0;
                for (double kc : cands) {
                    double c_need = 0.0;
                    for (const Eval& e : history[cell]) {
                        double rem = e.lhs - kc * e.B;
                        if (rem > 0.0 && e.A > 0.0) c_need = std::max(c_need, rem / e.A);
                    }
                    if (best_c < 0.0 || c_need < 0.95 * best_c) {
                        best_c = c_need;
                        best_k = kc;
                    }
                }
                r.c = best_c;
                r.k = best_k;
            }
            double worst = 0.0;
            if (kTwoConstant[a]) {
                for (const Eval& e : history[cell]) {
                    double den = r.c * e.A + r.k * e.B;
                    if (den > 0.0) worst = std::max(worst, e.lhs / den);
                }
            } else if (r.c > 0.0) {
                worst = 1.0;
            }
            r.worst_ratio = worst;  // held-out maximum folded in after the second pass
        }

    std::vector<int> violations(cells, 0);
    run_pass(seed ^ 0x6a09e667f3bcc908ULL, false, &records, &violations);

    AssumptionAudit audit;
    audit.xi_w2inf = model.correlations.w2inf;
    audit.xi_w2inf_sum_sq = model.correlations.w2inf_sum_sq;
    int total_viol = 0;
    Fnv1a h;
    for (int cell = 0; cell < cells; ++cell) {
        records[cell].holdout_violations = violations[cell];
        records[cell].worst_ratio = std::max(records[cell].worst_ratio, holdout_ratio[cell]);
        total_viol += violations[cell];
        h.value(records[cell].mode);
        h.value(records[cell].c);
        h.value(records[cell].k);
        h.value(records[cell].max_lhs);
        h.value(records[cell].worst_ratio);
    }
    for (int i = 0; i < K; ++i) {
        double ki = std::max(records[3 * K + i].k, records[9 * K + i].k);
        audit.sum_k += ki;
    }
    h.value(audit.sum_k);
    audit.digest = h.digest();
    audit.records = std::move(records);
    audit.summable = audit.sum_k <= 1.0;
    audit.pass = audit.summable && total_viol == 0;
    return audit;
}

}  // namespace katolab
