#include "katolab/euler.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <utility>

#include "katolab/digest.hpp"
#include "katolab/errors.hpp"
#include "katolab/operators.hpp"
#include "katolab/poisson.hpp"

namespace katolab {

namespace {

// Conserving nine-point Jacobian: d_t w = psi_x w_y - psi_y w_x at interior
// nodes (the interior sum of psi * J vanishes exactly for boundary-zero psi,
// whatever the wall vorticity), plus one-sided tangential advection of the
// wall rows; corners are stationary.
void vorticity_rate(const Domain& dom, const NodeGridField& psi, const NodeGridField& w,
                    NodeGridField& out) {
    const int nx = dom.nx;
    const double fj = 1.0 / (12.0 * dom.h * dom.h);
    for (int i = 1; i < nx; ++i) {
        for (int j = 1; j < nx; ++j) {
            double j1 = (psi.at(i + 1, j) - psi.at(i - 1, j)) * (w.at(i, j + 1) - w.at(i, j - 1)) -
                        (psi.at(i, j + 1) - psi.at(i, j - 1)) * (w.at(i + 1, j) - w.at(i - 1, j));
            double j2 = psi.at(i + 1, j) * (w.at(i + 1, j + 1) - w.at(i + 1, j - 1)) -
                        psi.at(i - 1, j) * (w.at(i - 1, j + 1) - w.at(i - 1, j - 1)) -
                        psi.at(i, j + 1) * (w.at(i + 1, j + 1) - w.at(i - 1, j + 1)) +
                        psi.at(i, j - 1) * (w.at(i + 1, j - 1) - w.at(i - 1, j - 1));
            double j3 = psi.at(i + 1, j + 1) * (w.at(i, j + 1) - w.at(i + 1, j)) -
                        psi.at(i - 1, j - 1) * (w.at(i - 1, j) - w.at(i, j - 1)) -
                        psi.at(i - 1, j + 1) * (w.at(i, j + 1) - w.at(i - 1, j)) +
                        psi.at(i + 1, j - 1) * (w.at(i + 1, j) - w.at(i, j - 1));
            out.at(i, j) = fj * (j1 + j2 + j3);
        }
    }
    const double r2h = 1.0 / (2.0 * dom.h);
    for (int i = 1; i < nx; ++i) {
        double ux_b = (4.0 * psi.at(i, 1) - psi.at(i, 2)) * r2h;
        double ux_t = (psi.at(i, nx - 2) - 4.0 * psi.at(i, nx - 1)) * r2h;
        out.at(i, 0) = -ux_b * (w.at(i + 1, 0) - w.at(i - 1, 0)) * r2h;
        out.at(i, nx) = -ux_t * (w.at(i + 1, nx) - w.at(i - 1, nx)) * r2h;
        double vy_l = -(4.0 * psi.at(1, i) - psi.at(2, i)) * r2h;
        double vy_r = (4.0 * psi.at(nx - 1, i) - psi.at(nx - 2, i)) * r2h;
        out.at(0, i) = -vy_l * (w.at(0, i + 1) - w.at(0, i - 1)) * r2h;
        out.at(nx, i) = -vy_r * (w.at(nx, i + 1) - w.at(nx, i - 1)) * r2h;
    }
    out.at(0, 0) = out.at(0, nx) = out.at(nx, 0) = out.at(nx, nx) = 0.0;
}

NodeGridField derive_vorticity(const Domain& dom, const NodeGridField& psi) {
    const int nx = dom.nx;
    const double ih2 = 1.0 / (dom.h * dom.h);
    NodeGridField w = NodeGridField::zeros(dom);
    for (int i = 1; i < nx; ++i)
        for (int j = 1; j < nx; ++j)
            w.at(i, j) = (4.0 * psi.at(i, j) - psi.at(i - 1, j) - psi.at(i + 1, j) -
                          psi.at(i, j - 1) - psi.at(i, j + 1)) *
                         ih2;
    // Walls: omega = -psi_nn by a one-sided second difference (the
    // tangential part of the Laplacian vanishes along psi = 0 walls).
    for (int i = 1; i < nx; ++i) {
        w.at(i, 0) = (5.0 * psi.at(i, 1) - 4.0 * psi.at(i, 2) + psi.at(i, 3)) * ih2;
        w.at(i, nx) =
            (5.0 * psi.at(i, nx - 1) - 4.0 * psi.at(i, nx - 2) + psi.at(i, nx - 3)) * ih2;
        w.at(0, i) = (5.0 * psi.at(1, i) - 4.0 * psi.at(2, i) + psi.at(3, i)) * ih2;
        w.at(nx, i) =
            (5.0 * psi.at(nx - 1, i) - 4.0 * psi.at(nx - 2, i) + psi.at(nx - 3, i)) * ih2;
    }
    return w;
}

double w1inf_norm(const Domain& dom, const VectorGridField& f) {
    const int nx = f.nx;
    double m0 = 0.0, m1 = 0.0;
    auto see = [&](double a) { m0 = std::max(m0, std::abs(a)); };
    auto diff = [&](double a, double b) { m1 = std::max(m1, std::abs(a - b)); };
    for (int i = 0; i <= nx; ++i)
        for (int j = 0; j < nx; ++j) {
            see(f.uat(i, j));
            if (i < nx) diff(f.uat(i + 1, j), f.uat(i, j));
            if (j + 1 < nx) diff(f.uat(i, j + 1), f.uat(i, j));
        }
    for (int i = 0; i < nx; ++i)
        for (int j = 0; j <= nx; ++j) {
            see(f.vat(i, j));
            if (i + 1 < nx) diff(f.vat(i + 1, j), f.vat(i, j));
            if (j < nx) diff(f.vat(i, j + 1), f.vat(i, j));
        }
    return m0 + m1 / dom.h;
}

void check_node_field(const Domain& dom, const NodeGridField& f, const char* what) {
    if (f.nx != dom.nx || f.data.size() != static_cast<size_t>((dom.nx + 1) * (dom.nx + 1)))
        throw ConfigError(std::string(what) + ": node field does not match the grid");
}

std::uint64_t solution_digest(const EulerSolution& sol) {
    Fnv1a f;
    f.value(sol.dom.nx);
    f.value(sol.dt);
    f.value(sol.record_every);
    f.value(sol.initial_energy);
    f.value(static_cast<int>(sol.horizon_suspect));
    f.doubles(sol.times.data(), sol.times.size());
    for (const NodeGridField& psi : sol.stream_history)
        f.doubles(psi.data.data(), psi.data.size());
    return f.digest();
}

std::string euler_cache_path(const Domain& dom, const NodeGridField& psi0,
                             const NodeGridField& omega0, double T, double dt,
                             int record_every) {
    const char* dir = std::getenv("KATOLAB_CACHE");
    if (dir == nullptr || *dir == '\0') return {};
    Fnv1a f;
    f.value(dom.nx);
    f.value(T);
    f.value(dt);
    f.value(record_every);
    f.doubles(psi0.data.data(), psi0.data.size());
    f.doubles(omega0.data.data(), omega0.data.size());
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx",
                  static_cast<unsigned long long>(f.digest()));
    return std::string(dir) + "/euler_" + hex + "_v1.bin";
}

constexpr std::uint32_t kEulerMagic = 0x4B4C4555;  // "KLEU"

bool load_cached_euler(const std::string& path, const Domain& dom, EulerSolution& sol) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (f == nullptr) return false;
    auto read_ok = [f](void* p, size_t n) { return std::fread(p, 1, n, f) == n; };
    std::uint32_t magic = 0, version = 0;
    std::int32_t nx = 0, n_rec = 0, rec_every = 0, suspect = 0;
    double dt = 0.0, e0 = 0.0;
    bool ok = read_ok(&magic, 4) && read_ok(&version, 4) && read_ok(&nx, 4) &&
              read_ok(&n_rec, 4) && read_ok(&rec_every, 4) && read_ok(&suspect, 4) &&
              read_ok(&dt, 8) && read_ok(&e0, 8) && magic == kEulerMagic && version == 1 &&
              nx == dom.nx && n_rec >= 1;
    if (!ok) {
        std::fclose(f);
        return false;
    }
    sol.dom = dom;
    sol.dt = dt;
    sol.record_every = rec_every;
    sol.initial_energy = e0;
    sol.horizon_suspect = suspect != 0;
    sol.times.assign(n_rec, 0.0);
    ok = read_ok(sol.times.data(), sizeof(double) * n_rec);
    sol.stream_history.clear();
    sol.velocity_history.clear();
    for (int r = 0; ok && r < n_rec; ++r) {
        NodeGridField psi = NodeGridField::zeros(dom);
        ok = read_ok(psi.data.data(), sizeof(double) * psi.data.size());
        if (ok) sol.stream_history.push_back(std::move(psi));
    }
    std::uint64_t stored = 0;
    ok = ok && read_ok(&stored, 8);
    std::fclose(f);
    if (!ok) return false;
    sol.digest = solution_digest(sol);
    if (sol.digest != stored) return false;
    for (const NodeGridField& psi : sol.stream_history)
        sol.velocity_history.push_back(curl_to_faces(dom, psi));
    return true;
}

void store_cached_euler(const std::string& path, const EulerSolution& sol) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (f == nullptr) return;  // cache is best-effort
    std::uint32_t version = 1;
    std::int32_t nx = sol.dom.nx;
    std::int32_t n_rec = static_cast<std::int32_t>(sol.times.size());
    std::int32_t rec_every = sol.record_every;
    std::int32_t suspect = sol.horizon_suspect ? 1 : 0;
    std::fwrite(&kEulerMagic, 4, 1, f);
    std::fwrite(&version, 4, 1, f);
    std::fwrite(&nx, 4, 1, f);
    std::fwrite(&n_rec, 4, 1, f);
    std::fwrite(&rec_every, 4, 1, f);
    std::fwrite(&suspect, 4, 1, f);
    std::fwrite(&sol.dt, 8, 1, f);
    std::fwrite(&sol.initial_energy, 8, 1, f);
    std::fwrite(sol.times.data(), sizeof(double), sol.times.size(), f);
    for (const NodeGridField& psi : sol.stream_history)
        std::fwrite(psi.data.data(), sizeof(double), psi.data.size(), f);
    std::fwrite(&sol.digest, 8, 1, f);
    std::fclose(f);
}

}  // namespace

EulerSolution solve_euler(const Domain& dom, const NodeGridField& psi0,
                          const NodeGridField& omega0, double T, double dt, int record_every) {
    check_node_field(dom, psi0, "solve_euler");
    check_node_field(dom, omega0, "solve_euler");
    const int nx = dom.nx;
    for (int i = 0; i <= nx; ++i)
        if (psi0.at(i, 0) != 0.0 || psi0.at(i, nx) != 0.0 || psi0.at(0, i) != 0.0 ||
            psi0.at(nx, i) != 0.0)
            throw ConfigError("solve_euler: stream function must vanish on the boundary");
    if (!(T >= 0.0)) throw ConfigError("solve_euler: T must be nonnegative");
    if (!(dt > 0.0)) throw ConfigError("solve_euler: dt must be positive");
    if (record_every < 1) throw ConfigError("solve_euler: record_every must be at least 1");

    std::string cache = euler_cache_path(dom, psi0, omega0, T, dt, record_every);
    EulerSolution sol;
    if (!cache.empty() && load_cached_euler(cache, dom, sol)) return sol;

    sol = EulerSolution{};
    sol.dom = dom;
    sol.dt = dt;
    sol.record_every = record_every;

    NodePoissonDirichlet pois(dom);
    const int n_steps = static_cast<int>(std::floor(T / dt + 1e-9));

    double w1inf0 = 0.0;
    auto record = [&](double t, const NodeGridField& psi) {
        VectorGridField u = curl_to_faces(dom, psi);
        double umax = 0.0;
        for (double x : u.u) umax = std::max(umax, std::abs(x));
        for (double x : u.v) umax = std::max(umax, std::abs(x));
        if (!std::isfinite(umax))
            throw NumericsError("solve_euler: non-finite state at t = " + std::to_string(t));
        if (umax * dt / dom.h > 0.5)
            throw NumericsError("solve_euler: advective CFL exceeded at t = " + std::to_string(t) +
                                " (|u|max dt/h = " + std::to_string(umax * dt / dom.h) + ")");
        double energy = dot(dom, u, u);
        double reach = w1inf_norm(dom, u);
        if (sol.times.empty()) {
            sol.initial_energy = energy;
            w1inf0 = reach;
        } else {
            double drift = std::abs(energy - sol.initial_energy) /
                           std::max(sol.initial_energy, 1e-12);
            if (drift > 1e-5)
                throw NumericsError("solve_euler: energy drift " + std::to_string(drift) +
                                    " at t = " + std::to_string(t) +
                                    " exceeds 1e-5; reduce dt");
            if (reach > 10.0 * std::max(w1inf0, 1e-12)) sol.horizon_suspect = true;
        }
        sol.times.push_back(t);
        sol.stream_history.push_back(psi);
        sol.velocity_history.push_back(std::move(u));
    };

    record(0.0, psi0);

    NodeGridField w = omega0;
    NodeGridField k1 = NodeGridField::zeros(dom), k2 = k1, k3 = k1, k4 = k1, stage = k1;
    for (int j = 1; j <= n_steps; ++j) {
        vorticity_rate(dom, pois.solve_full(w), w, k1);
        for (size_t m = 0; m < w.data.size(); ++m) stage.data[m] = w.data[m] + 0.5 * dt * k1.data[m];
        vorticity_rate(dom, pois.solve_full(stage), stage, k2);
        for (size_t m = 0; m < w.data.size(); ++m) stage.data[m] = w.data[m] + 0.5 * dt * k2.data[m];
        vorticity_rate(dom, pois.solve_full(stage), stage, k3);
        for (size_t m = 0; m < w.data.size(); ++m) stage.data[m] = w.data[m] + dt * k3.data[m];
        vorticity_rate(dom, pois.solve_full(stage), stage, k4);
        for (size_t m = 0; m < w.data.size(); ++m)
            w.data[m] += dt / 6.0 * (k1.data[m] + 2.0 * k2.data[m] + 2.0 * k3.data[m] + k4.data[m]);
        if (j % record_every == 0 || j == n_steps) record(j * dt, pois.solve_full(w));
    }

    sol.digest = solution_digest(sol);
    if (!cache.empty()) store_cached_euler(cache, sol);
    return sol;
}

EulerSolution solve_euler(const Domain& dom, const NodeGridField& psi0, double T, double dt,
                          int record_every) {
    check_node_field(dom, psi0, "solve_euler");
    return solve_euler(dom, psi0, derive_vorticity(dom, psi0), T, dt, record_every);
}

EulerSolution solve_euler(const SpectralBasis& basis, const VelocityField& u0, double T,
                          double dt, int record_every) {
    if (u0.basis_id != basis.id)
        throw ConfigError("solve_euler: initial state belongs to a different basis");
    double total = 0.0, top = 0.0;
    const int cut = basis.n_modes - basis.n_modes / 4;
    for (int k = 0; k < basis.n_modes; ++k) {
        double c2 = u0.coeffs[k] * u0.coeffs[k];
        total += c2;
        if (k >= cut) top += c2;
    }
    if (!(total > 0.0)) throw ConfigError("solve_euler: initial state is zero");
    if (top > 1e-8 * total)
        throw ConfigError("solve_euler: initial state is not band-limited "
                          "(top-quarter coefficient energy above 1e-8 of total)");

    NodeGridField psi0 = NodeGridField::zeros(basis.dom);
    const int m = basis.dom.nx - 1;
    for (int k = 0; k < basis.n_modes; ++k) {
        if (u0.coeffs[k] == 0.0) continue;
        for (int i = 1; i <= m; ++i)
            for (int j = 1; j <= m; ++j)
                psi0.at(i, j) += u0.coeffs[k] * basis.streams((i - 1) * m + (j - 1), k);
    }
    return solve_euler(basis.dom, psi0, T, dt, record_every);
}

double corrector_cutoff(double s) {
    if (s <= 0.0) return 1.0;
    if (s >= 1.0) return 0.0;
    // (1-s)^3 (1+3s), arranged so the ends evaluate exactly: for tiny s the
    // correction underflows below one ulp of 1, and at s = 1 it cancels to 0
    return 1.0 - s * s * (6.0 - 8.0 * s + 3.0 * s * s);
}

Corrector build_corrector(const EulerSolution& sol, double nu, double c_tilde) {
    if (!(nu > 0.0)) throw ConfigError("build_corrector: nu must be positive");
    if (!(c_tilde > 0.0)) throw ConfigError("build_corrector: c_tilde must be positive");
    const Domain& dom = sol.dom;
    const int nx = dom.nx;
    Corrector cor;
    cor.dom = dom;
    cor.nu = nu;
    cor.c_tilde = c_tilde;
    cor.width = c_tilde * nu;
    if (cor.width < dom.h)
        throw NumericsError("build_corrector: strip width " + std::to_string(cor.width) +
                            " is below one cell; refine the grid or widen c_tilde*nu");
    cor.cutoff = NodeGridField::zeros(dom);
    for (int i = 0; i <= nx; ++i)
        for (int j = 0; j <= nx; ++j) {
            int steps = std::min(std::min(i, j), std::min(nx - i, nx - j));
            cor.cutoff.at(i, j) = corrector_cutoff(steps * dom.h / cor.width);
        }
    cor.strip = boundary_strip(dom, cor.width);
    cor.times = sol.times;
    NodeGridField masked = NodeGridField::zeros(dom);
    for (const NodeGridField& psi : sol.stream_history) {
        for (size_t m = 0; m < masked.data.size(); ++m)
            masked.data[m] = cor.cutoff.data[m] * psi.data[m];
        cor.v_history.push_back(curl_to_faces(dom, masked));
    }
    return cor;
}

PairingSample corrector_pairing(const Corrector& cor, int t_index, const VelocityField& f) {
    if (t_index < 0 || t_index >= static_cast<int>(cor.v_history.size()))
        throw ConfigError("corrector_pairing: time index out of range");
    if (f.grid.nx != cor.dom.nx) throw ConfigError("corrector_pairing: grid mismatch");
    PairingSample out;
    out.pairing = dot(cor.dom, advect(cor.dom, f.grid, f.grid), cor.v_history[t_index]);
    out.strip_bound =
        cor.nu * integrate(cor.dom, gradient_energy_cells(cor.dom, f.grid), cor.strip);
    return out;
}

CorrectorEstimates corrector_estimates(const Corrector& cor) {
    if (cor.v_history.empty())
        throw ConfigError("corrector_estimates: corrector holds no times");
    CorrectorEstimates est;
    for (const VectorGridField& v : cor.v_history) {
        double l2 = norm(cor.dom, v);
        double w12 = std::sqrt(l2 * l2 + gradient_energy_one_sided(cor.dom, v));
        est.sup_l2 = std::max(est.sup_l2, l2);
        est.sup_w12 = std::max(est.sup_w12, w12);
    }
    if (cor.times.size() >= 2)
        for (double d : time_derivative_norm(cor)) est.sup_dt = std::max(est.sup_dt, d);
    return est;
}

std::vector<double> time_derivative_norm(const Corrector& cor) {
    const size_t n = cor.times.size();
    if (n < 2)
        throw ConfigError("time_derivative_norm: corrector holds fewer than two times");
    auto diff_norm = [&](size_t a, size_t b) {
        const VectorGridField& fa = cor.v_history[a];
        const VectorGridField& fb = cor.v_history[b];
        double span = cor.times[b] - cor.times[a];
        double acc = 0.0;
        for (size_t m = 0; m < fa.u.size(); ++m) {
            double d = (fb.u[m] - fa.u[m]) / span;
            acc += d * d;
        }
        for (size_t m = 0; m < fa.v.size(); ++m) {
            double d = (fb.v[m] - fa.v[m]) / span;
            acc += d * d;
        }
        return std::sqrt(acc * cor.dom.h * cor.dom.h);
    };
    std::vector<double> out;
    if (n == 2) {
        out.push_back(diff_norm(0, 1));
        return out;
    }
    for (size_t k = 1; k + 1 < n; ++k) out.push_back(diff_norm(k - 1, k + 1));
    return out;
}

}  // namespace katolab
