#include "katolab/diagnostics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <thread>
#include <utility>

#include <json.hpp>

#include "katolab/digest.hpp"
#include "katolab/operators.hpp"

namespace katolab {

namespace {

constexpr double kBigZ = 1e18;   // stands in for an exact comparison with se = 0
constexpr double kZ95 = 1.645;   // one-sided 95% normal quantile

// Mean and standard error over values already in canonical (ascending-seed)
// order; every ensemble statistic funnels through here so the accumulation
// order is fixed once.
Estimate stats_ordered(const std::vector<double>& vals) {
    Estimate e;
    e.n = static_cast<int>(vals.size());
    if (e.n == 0) return e;
    // A constant ensemble has exactly zero scatter; short-circuit so the
    // mean does not pick up division roundoff.
    bool constant = true;
    for (double v : vals) constant = constant && v == vals.front();
    if (constant) {
        e.mean = vals.front();
        return e;
    }
    double sum = 0.0;
    for (double v : vals) sum += v;
    e.mean = sum / e.n;
    if (e.n < 2) return e;
    double ssd = 0.0;
    for (double v : vals) ssd += (v - e.mean) * (v - e.mean);
    e.se = std::sqrt(ssd / (static_cast<double>(e.n - 1) * e.n));
    return e;
}

Estimate scale_estimate(Estimate e, double s) {
    e.mean *= s;
    e.se *= s;
    return e;
}

// One-sided z statistic for "a exceeds b".
double pair_z(const Estimate& a, const Estimate& b) {
    const double d = a.mean - b.mean;
    const double s = std::sqrt(a.se * a.se + b.se * b.se);
    if (s == 0.0) return d > 0.0 ? kBigZ : (d == 0.0 ? 0.0 : -kBigZ);
    return d / s;
}

// Two-sided 97.5% Student quantiles for small residual degrees of freedom;
// the normal quantile beyond the table.
double t_quantile_975(int df) {
    static const double table[] = {12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306,
                                   2.262,  2.228, 2.201, 2.179, 2.160, 2.145, 2.131, 2.120,
                                   2.110,  2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064,
                                   2.060,  2.056, 2.052, 2.048, 2.045, 2.042};
    if (df < 1) return 0.0;
    if (df <= 30) return table[df - 1];
    return 1.960;
}

// Reference velocity linearly interpolated in time. Record times computed as
// step * dt hit the stored samples exactly, so matched grids never blend.
VectorGridField euler_velocity_at(const EulerSolution& euler, double t) {
    const std::vector<double>& ts = euler.times;
    if (t <= ts.front()) return euler.velocity_history.front();
    if (t >= ts.back()) return euler.velocity_history.back();
    const std::size_t hi = static_cast<std::size_t>(std::upper_bound(ts.begin(), ts.end(), t) -
                                                    ts.begin());
    const std::size_t lo = hi - 1;
    if (t == ts[lo]) return euler.velocity_history[lo];
    const double w = (t - ts[lo]) / (ts[hi] - ts[lo]);
    const VectorGridField& a = euler.velocity_history[lo];
    const VectorGridField& b = euler.velocity_history[hi];
    VectorGridField out = a;
    for (std::size_t k = 0; k < out.u.size(); ++k) out.u[k] = (1.0 - w) * a.u[k] + w * b.u[k];
    for (std::size_t k = 0; k < out.v.size(); ++k) out.v[k] = (1.0 - w) * a.v[k] + w * b.v[k];
    return out;
}

void parallel_for(int n, int threads, const std::function<void(int)>& body) {
    threads = std::max(1, std::min(threads, n));
    if (threads <= 1) {
        for (int p = 0; p < n; ++p) body(p);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int w = 0; w < threads; ++w) {
        pool.emplace_back([&] {
            for (int p = next.fetch_add(1); p < n; p = next.fetch_add(1)) body(p);
        });
    }
    for (std::thread& th : pool) th.join();
}

std::string format_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::string hex_digest(std::uint64_t d) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(d));
    return buf;
}

std::vector<double> sorted_unique(std::vector<double> v, const char* what) {
    std::sort(v.begin(), v.end());
    for (std::size_t k = 1; k < v.size(); ++k) {
        if (v[k] == v[k - 1]) {
            throw ConfigError(std::string("sweep: duplicate ") + what + " value " +
                              format_g(v[k]));
        }
    }
    return v;
}

}  // namespace

Estimate ensemble_estimate(std::vector<std::pair<std::uint64_t, double>> keyed) {
    if (keyed.size() < 2) throw ConfigError("ensemble_estimate: need at least two paths");
    std::stable_sort(keyed.begin(), keyed.end());
    std::vector<double> vals;
    vals.reserve(keyed.size());
    for (const auto& kv : keyed) vals.push_back(kv.second);
    return stats_ordered(vals);
}

std::vector<TestField> test_field_panel(const SpectralBasis& basis, const Corrector& cor,
                                        int n_eigen) {
    if (n_eigen < 0) throw ConfigError("test_field_panel: panel size must be nonnegative");
    if (cor.dom.nx != basis.dom.nx) {
        throw ConfigError("test_field_panel: corrector lives on a different grid");
    }
    if (cor.v_history.empty()) {
        throw ConfigError("test_field_panel: corrector has no recorded snapshots");
    }
    std::vector<TestField> out;
    const int ne = std::min(n_eigen, basis.n_modes);
    for (int k = 0; k < ne; ++k) {
        out.push_back({"eig" + std::to_string(k), basis.field(k)});
    }
    VectorGridField v = cor.v_history.front();
    const double nv = norm(basis.dom, v);
    if (!(nv > 0.0)) throw ConfigError("test_field_panel: corrector snapshot vanishes");
    for (double& x : v.u) x /= nv;
    for (double& x : v.v) x /= nv;
    out.push_back({"corrector", std::move(v)});
    return out;
}

PathQuantities per_path_quantities(const SpectralBasis& basis, const TrajectoryRecord& traj,
                                   const EulerSolution& euler,
                                   const std::vector<BoundaryStrip>& strips,
                                   const std::vector<TestField>& test_fields) {
    const Domain& dom = basis.dom;
    if (euler.dom.nx != dom.nx) {
        throw ConfigError("per_path_quantities: trajectory and reference use different grids");
    }
    if (traj.times.empty() || traj.coeff_history.size() != traj.times.size()) {
        throw ConfigError("per_path_quantities: malformed trajectory record");
    }
    if (euler.times.empty() || euler.velocity_history.size() != euler.times.size()) {
        throw ConfigError("per_path_quantities: malformed reference solution");
    }
    for (const BoundaryStrip& s : strips) {
        if (static_cast<int>(s.cell_weights.size()) != dom.n_cells()) {
            throw ConfigError("per_path_quantities: strip does not match the grid");
        }
    }
    for (const TestField& f : test_fields) {
        if (f.field.nx != dom.nx) {
            throw ConfigError("per_path_quantities: test field does not match the grid");
        }
    }
    const double tol = 1e-9 * std::max(1.0, euler.times.back());
    if (traj.times.front() < euler.times.front() - tol ||
        traj.times.back() > euler.times.back() + tol) {
        throw ConfigError("per_path_quantities: trajectory times leave the reference range");
    }

    const std::size_t nt = traj.times.size();
    PathQuantities out;
    out.seed = traj.seed;
    out.stopped = traj.stop_hit.has_value();
    out.strip_dissipation.assign(strips.size(), 0.0);
    out.weak_series.assign(test_fields.size(), std::vector<double>(nt, 0.0));

    for (std::size_t j = 0; j < nt; ++j) {
        double w = 0.0;
        if (nt > 1) {
            if (j == 0) {
                w = 0.5 * (traj.times[1] - traj.times[0]);
            } else if (j + 1 == nt) {
                w = 0.5 * (traj.times[nt - 1] - traj.times[nt - 2]);
            } else {
                w = 0.5 * (traj.times[j + 1] - traj.times[j - 1]);
            }
        }

        const VectorGridField recon = basis.reconstruct(traj.coeff_history[j]);
        const VectorGridField ref = euler_velocity_at(euler, traj.times[j]);
        VectorGridField diff = recon;
        for (std::size_t k = 0; k < diff.u.size(); ++k) diff.u[k] -= ref.u[k];
        for (std::size_t k = 0; k < diff.v.size(); ++k) diff.v[k] -= ref.v[k];

        out.sup_diff_sq = std::max(out.sup_diff_sq, dot(dom, diff, diff));

        double energy = 0.0;
        for (double c : traj.coeff_history[j]) energy += c * c;
        out.sup_energy = std::max(out.sup_energy, energy);
        if (j + 1 == nt) out.terminal_energy = energy;

        const ScalarGridField ge = gradient_energy_cells(dom, recon);
        out.dissipation += w * integrate(dom, ge);
        for (std::size_t s = 0; s < strips.size(); ++s) {
            out.strip_dissipation[s] += w * integrate(dom, ge, strips[s]);
        }
        for (std::size_t f = 0; f < test_fields.size(); ++f) {
            out.weak_series[f][j] = dot(dom, diff, test_fields[f].field);
        }
    }
    return out;
}

CriterionQuantities aggregate_point(double nu, double alpha, double mu,
                                    const std::vector<double>& c_tildes,
                                    const std::vector<bool>& strip_clamped,
                                    const std::vector<std::string>& field_ids,
                                    std::vector<PathQuantities> paths) {
    if (paths.size() < 2) throw ConfigError("aggregate_point: need at least two paths");
    std::stable_sort(paths.begin(), paths.end(),
                     [](const PathQuantities& a, const PathQuantities& b) {
                         return a.seed < b.seed;
                     });

    const std::size_t S = c_tildes.size();
    const std::size_t F = field_ids.size();
    const std::size_t nt = F > 0 ? paths.front().weak_series.front().size() : 0;
    for (const PathQuantities& p : paths) {
        if (p.strip_dissipation.size() != S || p.weak_series.size() != F) {
            throw ConfigError("aggregate_point: path records have inconsistent shapes");
        }
        for (const std::vector<double>& series : p.weak_series) {
            if (series.size() != nt) {
                throw ConfigError("aggregate_point: path records have inconsistent lengths");
            }
        }
    }

    CriterionQuantities q;
    q.nu = nu;
    q.alpha = alpha;
    q.mu = mu;
    q.c_tildes = c_tildes;
    q.strip_clamped = strip_clamped;
    q.field_ids = field_ids;
    q.n_paths = static_cast<int>(paths.size());
    q.seed_lo = paths.front().seed;
    q.seed_hi = paths.back().seed;

    std::vector<double> vals(paths.size());
    auto est = [&](auto&& select) {
        for (std::size_t r = 0; r < paths.size(); ++r) vals[r] = select(paths[r]);
        return stats_ordered(vals);
    };

    q.item1 = est([](const PathQuantities& p) { return p.sup_diff_sq; });
    q.raw_global = est([](const PathQuantities& p) { return p.dissipation; });
    q.sup_energy = est([](const PathQuantities& p) { return p.sup_energy; });
    q.terminal_energy = est([](const PathQuantities& p) { return p.terminal_energy; });
    q.item3 = scale_estimate(q.raw_global, nu);

    const double expo = 2.0 * (alpha - 0.5);
    const double prefactor = expo == 1.0 ? nu : std::pow(nu, expo);
    for (std::size_t s = 0; s < S; ++s) {
        Estimate raw = est([s](const PathQuantities& p) { return p.strip_dissipation[s]; });
        q.raw_strip.push_back(raw);
        q.item4.push_back(scale_estimate(raw, nu));
        q.scaled_item4.push_back(scale_estimate(raw, prefactor));
    }

    for (std::size_t f = 0; f < F; ++f) {
        double best = -1.0;
        double best_se = 0.0;
        for (std::size_t j = 0; j < nt; ++j) {
            Estimate e = est([f, j](const PathQuantities& p) { return p.weak_series[f][j]; });
            if (std::abs(e.mean) > best) {
                best = std::abs(e.mean);
                best_se = e.se;
            }
        }
        q.item2.push_back(best < 0.0 ? 0.0 : best);
        q.item2_se.push_back(best_se);
    }

    q.paths = std::move(paths);
    return q;
}

CriterionQuantities criterion_point(const SpectralBasis& basis, const SdeConfig& cfg,
                                    const NoiseModel& model, const VelocityField& u0,
                                    const EulerSolution& euler,
                                    const std::vector<double>& c_tildes,
                                    const std::vector<TestField>& test_fields, int n_paths,
                                    std::uint64_t seed_block, double alpha) {
    if (n_paths < 2) throw ConfigError("criterion_point: need at least two paths");
    std::vector<BoundaryStrip> strips;
    std::vector<bool> clamped;
    strips.reserve(c_tildes.size());
    for (double c : c_tildes) {
        if (!(c > 0.0)) throw ConfigError("criterion_point: c_tilde must be positive");
        BoundaryStrip s = boundary_strip(basis.dom, c * cfg.nu);
        clamped.push_back(s.effective_width > s.nominal_width);
        strips.push_back(std::move(s));
    }
    std::vector<std::string> ids;
    ids.reserve(test_fields.size());
    for (const TestField& f : test_fields) ids.push_back(f.id);

    std::vector<PathQuantities> records;
    records.reserve(n_paths);
    bool failed = false;
    std::string failure;
    for (int r = 0; r < n_paths; ++r) {
        SdeConfig pc = cfg;
        pc.seed = seed_block + static_cast<std::uint64_t>(r);
        try {
            TrajectoryRecord traj = simulate(basis, pc, model, u0);
            records.push_back(per_path_quantities(basis, traj, euler, strips, test_fields));
        } catch (const std::exception& err) {
            failed = true;
            if (failure.empty()) {
                failure = "seed " + std::to_string(pc.seed) + ": " + err.what();
            }
        }
    }

    if (records.size() < 2) {
        CriterionQuantities q;
        q.nu = cfg.nu;
        q.alpha = alpha;
        q.mu = cfg.effective_mu();
        q.c_tildes = c_tildes;
        q.strip_clamped = clamped;
        q.field_ids = ids;
        q.failed = true;
        q.failure = failure.empty() ? "fewer than two paths completed" : failure;
        return q;
    }
    CriterionQuantities q = aggregate_point(cfg.nu, alpha, cfg.effective_mu(), c_tildes,
                                            clamped, ids, std::move(records));
    q.failed = failed;
    q.failure = failure;
    return q;
}

SlopeFit fit_linear(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw ConfigError("fit_linear: size mismatch");
    SlopeFit f;
    f.n = static_cast<int>(x.size());
    if (f.n < 2) return f;
    double mx = 0.0, my = 0.0;
    for (int k = 0; k < f.n; ++k) {
        mx += x[k];
        my += y[k];
    }
    mx /= f.n;
    my /= f.n;
    double sxx = 0.0, sxy = 0.0;
    for (int k = 0; k < f.n; ++k) {
        sxx += (x[k] - mx) * (x[k] - mx);
        sxy += (x[k] - mx) * (y[k] - my);
    }
    if (sxx == 0.0) return f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    if (f.n > 2) {
        double ssr = 0.0;
        for (int k = 0; k < f.n; ++k) {
            const double r = y[k] - (f.intercept + f.slope * x[k]);
            ssr += r * r;
        }
        f.ci95 = t_quantile_975(f.n - 2) * std::sqrt(ssr / (f.n - 2) / sxx);
    }
    f.valid = f.n >= 4;
    return f;
}

SlopeFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw ConfigError("fit_loglog: size mismatch");
    std::vector<double> lx, ly;
    lx.reserve(x.size());
    ly.reserve(y.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
        if (!(x[k] > 0.0) || !(y[k] > 0.0)) {
            throw ConfigError("fit_loglog: points must be strictly positive");
        }
        lx.push_back(std::log(x[k]));
        ly.push_back(std::log(y[k]));
    }
    return fit_linear(lx, ly);
}

namespace {

// Pairwise one-sided test that the sequence of estimates drops at every
// ladder step. Returns {all pairs significant, smallest z observed}.
std::pair<bool, double> decreasing_95(const std::vector<Estimate>& seq) {
    if (seq.size() < 2) return {false, 0.0};
    bool ok = true;
    double min_z = kBigZ;
    for (std::size_t k = 0; k + 1 < seq.size(); ++k) {
        const double z = pair_z(seq[k], seq[k + 1]);
        min_z = std::min(min_z, z);
        if (z < kZ95) ok = false;
    }
    return {ok, min_z};
}

void finalize_sweep(SweepResult& res);
void finalize_corrector_ladder(CorrectorLadder& lad);

SweepResult sweep_impl(const SpectralBasis& basis, const SdeConfig& base,
                       const NoiseModel& model, const VelocityField& u0,
                       const EulerSolution& euler, const std::vector<double>& nu_ladder,
                       const std::vector<double>& alphas_in,
                       const std::vector<double>& c_tildes_in, int n_paths, int threads,
                       int panel_eigen, std::string axis) {
    if (nu_ladder.empty()) throw ConfigError("sweep: empty viscosity ladder");
    for (std::size_t k = 0; k + 1 < nu_ladder.size(); ++k) {
        if (!(nu_ladder[k + 1] < nu_ladder[k])) {
            throw ConfigError("sweep: viscosity ladder must decrease strictly, offending pair (" +
                              format_g(nu_ladder[k]) + ", " + format_g(nu_ladder[k + 1]) + ")");
        }
    }
    for (double nu : nu_ladder) {
        if (!(nu > 0.0 && nu < 1.0)) {
            throw ConfigError("sweep: viscosity " + format_g(nu) + " outside (0, 1)");
        }
    }
    if (alphas_in.empty()) throw ConfigError("sweep: empty alpha set");
    const std::vector<double> alphas = sorted_unique(alphas_in, "alpha");
    for (double a : alphas) {
        if (!(a >= 0.5 && a <= 2.0)) {
            throw ConfigError("sweep: alpha " + format_g(a) + " outside [1/2, 2]");
        }
    }
    if (c_tildes_in.empty()) throw ConfigError("sweep: empty c_tilde set");
    const std::vector<double> c_tildes = sorted_unique(c_tildes_in, "c_tilde");
    for (double c : c_tildes) {
        if (!(c > 0.0)) throw ConfigError("sweep: c_tilde must be positive");
    }
    if (n_paths < 2) throw ConfigError("sweep: need at least two paths per point");
    if (base.n_galerkin < 0 || base.n_galerkin > basis.n_modes) {
        throw ConfigError("sweep: n_galerkin outside the basis span");
    }

    // Fixed test-field panel: the corrector snapshot is built at the widest
    // resolvable strip so the same panel serves every ladder point.
    const double nu_panel = std::max(nu_ladder.front(), basis.dom.h / c_tildes.front());
    const Corrector panel_cor = build_corrector(euler, nu_panel, c_tildes.front());
    const std::vector<TestField> fields = test_field_panel(basis, panel_cor, panel_eigen);

    SweepResult res;
    res.axis = std::move(axis);
    res.nu_ladder = nu_ladder;
    res.alphas = alphas;
    res.c_tildes = c_tildes;
    res.n_paths = n_paths;
    res.base_seed = base.seed;

    const int span = base.n_galerkin == 0 ? basis.n_modes : base.n_galerkin;
    for (int k = 0; k < span && k < static_cast<int>(u0.coeffs.size()); ++k) {
        res.u0_energy += u0.coeffs[k] * u0.coeffs[k];
    }

    const int K = static_cast<int>(nu_ladder.size());
    const int A = static_cast<int>(alphas.size());
    res.points.resize(static_cast<std::size_t>(A) * K);

    parallel_for(A * K, threads, [&](int p) {
        const int a = p / K;
        const int k = p % K;
        SdeConfig cfg = base;
        cfg.nu = nu_ladder[k];
        cfg.mu = alphas[a] == 1.0 ? -1.0 : std::pow(cfg.nu, alphas[a]);
        const std::uint64_t block =
            base.seed + static_cast<std::uint64_t>(k) * static_cast<std::uint64_t>(n_paths);
        try {
            res.points[p] = criterion_point(basis, cfg, model, u0, euler, c_tildes, fields,
                                            n_paths, block, alphas[a]);
        } catch (const std::exception& err) {
            CriterionQuantities q;
            q.nu = cfg.nu;
            q.alpha = alphas[a];
            q.mu = cfg.effective_mu();
            q.c_tildes = c_tildes;
            q.failed = true;
            q.failure = err.what();
            res.points[p] = std::move(q);
        }
    });

    finalize_sweep(res);
    return res;
}

// Derived statistics (failure list, slopes, significance flags) recomputed
// from the stored points alone, so persisted paths can regenerate the sweep.
void finalize_sweep(SweepResult& res) {
    const int K = static_cast<int>(res.nu_ladder.size());
    const int A = static_cast<int>(res.alphas.size());

    res.failures.clear();
    res.slope_item4.clear();
    res.item4_decreasing.clear();
    res.scaled_decreasing.clear();
    res.alpha_energy_decreasing.clear();
    res.alpha_critical.clear();
    res.item3_decreasing = false;
    res.item3_min_z = 0.0;
    res.kappa_decreasing = false;
    res.kappa_min_z = 0.0;
    res.item1_comonotone = false;

    for (const CriterionQuantities& q : res.points) {
        if (q.failed) {
            res.failures.push_back("nu=" + format_g(q.nu) + " alpha=" + format_g(q.alpha) +
                                   ": " + q.failure);
        }
    }

    // Ladder statistics over the first alpha row.
    const std::size_t S = res.c_tildes.size();
    std::vector<const CriterionQuantities*> row;
    for (int k = 0; k < K; ++k) {
        const CriterionQuantities& q = res.points[k];
        if (!q.failed) row.push_back(&q);
    }

    auto masked_fit = [&](auto&& value) {
        std::vector<double> xs, ys;
        for (const CriterionQuantities* q : row) {
            const double y = value(*q);
            if (y > 0.0) {
                xs.push_back(q->nu);
                ys.push_back(y);
            }
        }
        return xs.size() >= 2 ? fit_loglog(xs, ys) : SlopeFit{};
    };
    res.slope_item1 = masked_fit([](const CriterionQuantities& q) { return q.item1.mean; });
    res.slope_item3 = masked_fit([](const CriterionQuantities& q) { return q.item3.mean; });
    for (std::size_t s = 0; s < S; ++s) {
        res.slope_item4.push_back(
            masked_fit([s](const CriterionQuantities& q) { return q.item4[s].mean; }));
    }

    const bool full_row = static_cast<int>(row.size()) == K;
    auto collect = [&](auto&& value) {
        std::vector<Estimate> seq;
        for (const CriterionQuantities* q : row) seq.push_back(value(*q));
        return seq;
    };
    if (full_row && K >= 2) {
        auto [d3, z3] = decreasing_95(
            collect([](const CriterionQuantities& q) { return q.item3; }));
        res.item3_decreasing = d3;
        res.item3_min_z = z3;
        for (std::size_t s = 0; s < S; ++s) {
            auto [d4, z4] = decreasing_95(
                collect([s](const CriterionQuantities& q) { return q.item4[s]; }));
            (void)z4;
            res.item4_decreasing.push_back(d4);
        }
        const double e0 = res.u0_energy;
        auto [dk, zk] = decreasing_95(collect([e0](const CriterionQuantities& q) {
            Estimate kappa = q.sup_energy;
            kappa.mean -= e0;
            return kappa;
        }));
        res.kappa_decreasing = dk;
        res.kappa_min_z = zk;

        res.item1_comonotone = true;
        for (std::size_t k = 0; k + 1 < row.size(); ++k) {
            const bool item4_drop = row[k + 1]->item4[0].mean < row[k]->item4[0].mean;
            const bool item1_drop = row[k + 1]->item1.mean < row[k]->item1.mean;
            if (item4_drop && !item1_drop) res.item1_comonotone = false;
        }
    }

    if (res.axis == "alpha_ladder") {
        for (int a = 0; a < A; ++a) {
            res.alpha_critical.push_back(res.alphas[a] == 0.5);
            bool dec = true;
            for (std::size_t s = 0; s < S; ++s) {
                std::vector<Estimate> seq;
                bool complete = true;
                for (int k = 0; k < K; ++k) {
                    const CriterionQuantities& q = res.points[static_cast<std::size_t>(a) * K + k];
                    if (q.failed) {
                        complete = false;
                        break;
                    }
                    seq.push_back(q.scaled_item4[s]);
                }
                if (!complete || !decreasing_95(seq).first) dec = false;
            }
            res.scaled_decreasing.push_back(dec);
        }
        for (int k = 0; k < K; ++k) {
            bool dec = true;
            for (int a = 0; a + 1 < A; ++a) {
                const CriterionQuantities& lo = res.points[static_cast<std::size_t>(a) * K + k];
                const CriterionQuantities& hi =
                    res.points[static_cast<std::size_t>(a + 1) * K + k];
                if (lo.failed || hi.failed || lo.paths.size() != hi.paths.size()) {
                    dec = false;
                    break;
                }
                // Common seeds across alpha: a paired one-sided test on the
                // per-path terminal-energy differences.
                std::vector<double> d(lo.paths.size());
                bool paired = true;
                for (std::size_t r = 0; r < lo.paths.size(); ++r) {
                    if (lo.paths[r].seed != hi.paths[r].seed) {
                        paired = false;
                        break;
                    }
                    d[r] = lo.paths[r].terminal_energy - hi.paths[r].terminal_energy;
                }
                if (!paired) {
                    dec = false;
                    break;
                }
                const Estimate e = stats_ordered(d);
                const double z = e.se == 0.0 ? (e.mean > 0.0 ? kBigZ : -kBigZ) : e.mean / e.se;
                if (z < kZ95) dec = false;
            }
            res.alpha_energy_decreasing.push_back(dec);
        }
    }
}

// Fits and spread recomputed from the stored points alone; a panel that
// produced no pairings leaves every pairing_max at zero and the spread at
// zero, matching a run without a panel.
void finalize_corrector_ladder(CorrectorLadder& lad) {
    auto fit_of = [&](auto&& value) {
        std::vector<double> xs, ys;
        for (const CorrectorLadderPoint& p : lad.points) {
            const double y = value(p);
            if (y > 0.0) {
                xs.push_back(p.nu);
                ys.push_back(y);
            }
        }
        return xs.size() >= 2 ? fit_loglog(xs, ys) : SlopeFit{};
    };
    lad.slope_l2 = fit_of([](const CorrectorLadderPoint& p) { return p.est.sup_l2; });
    lad.slope_w12 = fit_of([](const CorrectorLadderPoint& p) { return p.est.sup_w12; });
    lad.slope_dt = fit_of([](const CorrectorLadderPoint& p) { return p.est.sup_dt; });

    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    for (const CorrectorLadderPoint& p : lad.points) {
        lo = std::min(lo, p.pairing_max);
        hi = std::max(hi, p.pairing_max);
    }
    lad.pairing_spread = lo > 0.0 ? hi / lo
                         : hi > 0.0 ? std::numeric_limits<double>::max()
                                    : 0.0;
}

}  // namespace

SweepResult run_nu_sweep(const SpectralBasis& basis, const SdeConfig& base,
                         const NoiseModel& model, const VelocityField& u0,
                         const EulerSolution& euler, const std::vector<double>& nu_ladder,
                         const std::vector<double>& c_tildes, int n_paths, int threads,
                         int panel_eigen) {
    return sweep_impl(basis, base, model, u0, euler, nu_ladder, {1.0}, c_tildes, n_paths,
                      threads, panel_eigen, "nu_ladder");
}

SweepResult run_alpha_sweep(const SpectralBasis& basis, const SdeConfig& base,
                            const NoiseModel& model, const VelocityField& u0,
                            const EulerSolution& euler, const std::vector<double>& nu_ladder,
                            const std::vector<double>& alphas,
                            const std::vector<double>& c_tildes, int n_paths, int threads,
                            int panel_eigen) {
    return sweep_impl(basis, base, model, u0, euler, nu_ladder, alphas, c_tildes, n_paths,
                      threads, panel_eigen, "alpha_ladder");
}

SweepResult rebuild_sweep(SweepResult skeleton) {
    if (skeleton.axis != "nu_ladder" && skeleton.axis != "alpha_ladder") {
        throw ConfigError("rebuild_sweep: unknown axis '" + skeleton.axis + "'");
    }
    if (skeleton.nu_ladder.empty() || skeleton.alphas.empty()) {
        throw ConfigError("rebuild_sweep: empty ladder");
    }
    if (skeleton.points.size() != skeleton.nu_ladder.size() * skeleton.alphas.size()) {
        throw ConfigError("rebuild_sweep: point count does not match the ladders");
    }
    finalize_sweep(skeleton);
    return skeleton;
}

CorrectorLadder rebuild_corrector_ladder(double c_tilde,
                                         std::vector<CorrectorLadderPoint> points) {
    if (points.empty()) throw ConfigError("rebuild_corrector_ladder: empty ladder");
    CorrectorLadder lad;
    lad.c_tilde = c_tilde;
    lad.points = std::move(points);
    finalize_corrector_ladder(lad);
    return lad;
}

CorrectorLadder corrector_ladder(const EulerSolution& sol, const std::vector<double>& nus,
                                 double c_tilde, const std::vector<VelocityField>& panel) {
    if (nus.empty()) throw ConfigError("corrector_ladder: empty ladder");
    for (std::size_t k = 0; k + 1 < nus.size(); ++k) {
        if (!(nus[k + 1] < nus[k])) {
            throw ConfigError("corrector_ladder: ladder must decrease strictly");
        }
    }
    CorrectorLadder lad;
    lad.c_tilde = c_tilde;
    for (double nu : nus) {
        Corrector cor = build_corrector(sol, nu, c_tilde);
        CorrectorLadderPoint pt;
        pt.nu = nu;
        pt.est = corrector_estimates(cor);
        for (const VelocityField& f : panel) {
            for (std::size_t t = 0; t < cor.times.size(); ++t) {
                const PairingSample ps = corrector_pairing(cor, static_cast<int>(t), f);
                if (ps.strip_bound > 0.0) {
                    pt.pairing_max = std::max(pt.pairing_max,
                                              std::abs(ps.pairing) / ps.strip_bound);
                }
            }
        }
        lad.points.push_back(std::move(pt));
    }

    finalize_corrector_ladder(lad);
    return lad;
}

namespace {

using nlohmann::json;

json estimate_json(const Estimate& e) {
    return json{{"mean", e.mean}, {"se", e.se}, {"n", e.n}};
}

json slope_json(const SlopeFit& f) {
    return json{{"slope", f.slope},
                {"intercept", f.intercept},
                {"ci95", f.ci95},
                {"n", f.n},
                {"valid", f.valid}};
}

json sweep_json(const SweepResult& s) {
    json j;
    j["axis"] = s.axis;
    j["nu_ladder"] = s.nu_ladder;
    j["alphas"] = s.alphas;
    j["c_tildes"] = s.c_tildes;
    j["n_paths"] = s.n_paths;
    j["base_seed"] = s.base_seed;
    j["u0_energy"] = s.u0_energy;

    json pts = json::array();
    for (const CriterionQuantities& q : s.points) {
        json p;
        p["nu"] = q.nu;
        p["alpha"] = q.alpha;
        p["mu"] = q.mu;
        p["n_paths"] = q.n_paths;
        p["seed_lo"] = q.seed_lo;
        p["seed_hi"] = q.seed_hi;
        if (q.failed) {
            p["failed"] = true;
            p["failure"] = q.failure;
            pts.push_back(std::move(p));
            continue;
        }
        p["item1"] = estimate_json(q.item1);
        p["item3"] = estimate_json(q.item3);
        p["raw_global"] = estimate_json(q.raw_global);
        p["sup_energy"] = estimate_json(q.sup_energy);
        p["terminal_energy"] = estimate_json(q.terminal_energy);
        json i4 = json::array();
        for (std::size_t c = 0; c < q.c_tildes.size(); ++c) {
            i4.push_back(json{{"c_tilde", q.c_tildes[c]},
                              {"clamped", static_cast<bool>(q.strip_clamped[c])},
                              {"mean", q.item4[c].mean},
                              {"se", q.item4[c].se},
                              {"scaled_mean", q.scaled_item4[c].mean},
                              {"scaled_se", q.scaled_item4[c].se}});
        }
        p["item4"] = std::move(i4);
        json i2 = json::array();
        for (std::size_t f = 0; f < q.field_ids.size(); ++f) {
            i2.push_back(json{{"field", q.field_ids[f]},
                              {"value", q.item2[f]},
                              {"se", q.item2_se[f]}});
        }
        p["item2"] = std::move(i2);
        pts.push_back(std::move(p));
    }
    j["points"] = std::move(pts);

    json slopes;
    slopes["item1"] = slope_json(s.slope_item1);
    slopes["item3"] = slope_json(s.slope_item3);
    json s4 = json::array();
    for (const SlopeFit& f : s.slope_item4) s4.push_back(slope_json(f));
    slopes["item4"] = std::move(s4);
    j["slopes"] = std::move(slopes);

    json mono;
    mono["item3_decreasing"] = s.item3_decreasing;
    mono["item3_min_z"] = s.item3_min_z;
    mono["item4_decreasing"] = s.item4_decreasing;
    mono["kappa_decreasing"] = s.kappa_decreasing;
    mono["kappa_min_z"] = s.kappa_min_z;
    mono["item1_comonotone"] = s.item1_comonotone;
    j["monotonicity"] = std::move(mono);

    if (s.axis == "alpha_ladder") {
        json a;
        a["scaled_decreasing"] = s.scaled_decreasing;
        a["alpha_energy_decreasing"] = s.alpha_energy_decreasing;
        a["alpha_critical"] = s.alpha_critical;
        j["alpha_checks"] = std::move(a);
    }
    if (!s.failures.empty()) j["failures"] = s.failures;
    return j;
}

void csv_row(std::string& out, double nu, double alpha, const char* c_tilde,
             const std::string& quantity, double mean, double se, int n,
             std::uint64_t lo, std::uint64_t hi) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%s,%s,%.17g,%.17g,%d,%llu,%llu\n", nu, alpha,
                  c_tilde, quantity.c_str(), mean, se, n,
                  static_cast<unsigned long long>(lo), static_cast<unsigned long long>(hi));
    out += buf;
}

void sweep_csv(std::string& out, const SweepResult& s) {
    char cbuf[40];
    for (const CriterionQuantities& q : s.points) {
        if (q.failed) continue;
        csv_row(out, q.nu, q.alpha, "", "item1", q.item1.mean, q.item1.se, q.n_paths, q.seed_lo,
                q.seed_hi);
        csv_row(out, q.nu, q.alpha, "", "item3", q.item3.mean, q.item3.se, q.n_paths, q.seed_lo,
                q.seed_hi);
        for (std::size_t c = 0; c < q.c_tildes.size(); ++c) {
            std::snprintf(cbuf, sizeof cbuf, "%.17g", q.c_tildes[c]);
            csv_row(out, q.nu, q.alpha, cbuf, "item4", q.item4[c].mean, q.item4[c].se, q.n_paths,
                    q.seed_lo, q.seed_hi);
            csv_row(out, q.nu, q.alpha, cbuf, "scaled_item4", q.scaled_item4[c].mean,
                    q.scaled_item4[c].se, q.n_paths, q.seed_lo, q.seed_hi);
        }
        for (std::size_t f = 0; f < q.field_ids.size(); ++f) {
            csv_row(out, q.nu, q.alpha, "", "item2:" + q.field_ids[f], q.item2[f],
                    q.item2_se[f], q.n_paths, q.seed_lo, q.seed_hi);
        }
        csv_row(out, q.nu, q.alpha, "", "sup_energy", q.sup_energy.mean, q.sup_energy.se,
                q.n_paths, q.seed_lo, q.seed_hi);
        csv_row(out, q.nu, q.alpha, "", "terminal_energy", q.terminal_energy.mean,
                q.terminal_energy.se, q.n_paths, q.seed_lo, q.seed_hi);
    }
}

void sweep_thresholds(std::vector<ThresholdRow>& rows, const SweepResult& s,
                      const std::string& tag) {
    bool dominated = true;
    bool monotone = true;
    for (const CriterionQuantities& q : s.points) {
        for (const PathQuantities& p : q.paths) {
            for (std::size_t c = 0; c < p.strip_dissipation.size(); ++c) {
                if (!(p.strip_dissipation[c] <= p.dissipation)) dominated = false;
                if (c > 0 && !(p.strip_dissipation[c - 1] <= p.strip_dissipation[c])) {
                    monotone = false;
                }
            }
        }
    }
    rows.push_back({"item4_dominated_by_item3 (" + tag + ")", dominated,
                    dominated ? "strip integral <= global integral on every path"
                              : "violated on at least one path"});
    rows.push_back({"item4_monotone_in_c_tilde (" + tag + ")", monotone,
                    monotone ? "strip integrals nondecreasing in c_tilde on every path"
                             : "violated on at least one path"});

    bool cs = true;
    double worst = 0.0;
    for (const CriterionQuantities& q : s.points) {
        if (q.failed) continue;
        const double bound = q.item1.mean + 3.0 * q.item1.se;
        for (std::size_t f = 0; f < q.item2.size(); ++f) {
            const double lhs = q.item2[f] * q.item2[f];
            worst = std::max(worst, bound > 0.0 ? lhs / bound : (lhs > 0.0 ? kBigZ : 0.0));
            if (!(lhs <= bound)) cs = false;
        }
    }
    rows.push_back({"weak_vs_strong_cauchy_schwarz (" + tag + ")", cs,
                    "worst (item2)^2 / (item1 + 3 se) = " + format_g(worst)});

    rows.push_back({"no_point_failures (" + tag + ")", s.failures.empty(),
                    s.failures.empty() ? "all points completed"
                                       : std::to_string(s.failures.size()) + " failed point(s)"});
}

}  // namespace

DiagnosticsReport assemble_report(const ReportInputs& in) {
    if (in.nu_sweep == nullptr && in.alpha_sweep == nullptr) {
        throw ConfigError("assemble_report: needs at least one completed sweep");
    }

    DiagnosticsReport rep;
    json root;
    root["schema"] = "1";
    root["digests"] = json{{"config", hex_digest(in.config_digest)},
                           {"basis", hex_digest(in.basis_digest)},
                           {"euler", hex_digest(in.euler_digest)}};

    if (in.nu_sweep != nullptr) {
        root["nu_sweep"] = sweep_json(*in.nu_sweep);
        sweep_thresholds(rep.thresholds, *in.nu_sweep, "nu_sweep");
        if (in.nu_sweep->nu_ladder.size() >= 2) {
            rep.thresholds.push_back({"item3_decreasing_95", in.nu_sweep->item3_decreasing,
                                      "min pairwise z = " + format_g(in.nu_sweep->item3_min_z)});
            bool all4 = !in.nu_sweep->item4_decreasing.empty();
            for (bool b : in.nu_sweep->item4_decreasing) all4 = all4 && b;
            rep.thresholds.push_back({"item4_decreasing_95", all4,
                                      all4 ? "every strip decreasing along the ladder"
                                           : "at least one strip not decreasing"});
            rep.thresholds.push_back({"kappa_decreasing_95", in.nu_sweep->kappa_decreasing,
                                      "min pairwise z = " + format_g(in.nu_sweep->kappa_min_z)});
            rep.thresholds.push_back({"item1_follows_item4", in.nu_sweep->item1_comonotone,
                                      "observed co-monotonicity along the ladder"});
        }
    }
    if (in.alpha_sweep != nullptr) {
        root["alpha_sweep"] = sweep_json(*in.alpha_sweep);
        sweep_thresholds(rep.thresholds, *in.alpha_sweep, "alpha_sweep");
        bool scaled = true;
        for (std::size_t a = 0; a < in.alpha_sweep->scaled_decreasing.size(); ++a) {
            if (a < in.alpha_sweep->alpha_critical.size() && in.alpha_sweep->alpha_critical[a]) {
                continue;  // the critical scaling is reported, not asserted
            }
            scaled = scaled && in.alpha_sweep->scaled_decreasing[a];
        }
        rep.thresholds.push_back({"alpha_scaled_criterion_decreasing_95", scaled,
                                  scaled ? "scaled strip criterion decreasing for every "
                                           "noncritical alpha"
                                         : "not decreasing for some noncritical alpha"});
        bool energy = !in.alpha_sweep->alpha_energy_decreasing.empty();
        for (bool b : in.alpha_sweep->alpha_energy_decreasing) energy = energy && b;
        rep.thresholds.push_back({"alpha_energy_monotone", energy,
                                  energy ? "terminal energy decreasing in alpha at every nu"
                                         : "not decreasing at some nu"});
    }
    if (in.corrector != nullptr) {
        const CorrectorLadder& c = *in.corrector;
        json cj;
        cj["c_tilde"] = c.c_tilde;
        json pts = json::array();
        for (const CorrectorLadderPoint& p : c.points) {
            pts.push_back(json{{"nu", p.nu},
                               {"sup_l2", p.est.sup_l2},
                               {"sup_w12", p.est.sup_w12},
                               {"sup_dt", p.est.sup_dt},
                               {"pairing_max", p.pairing_max}});
        }
        cj["points"] = std::move(pts);
        cj["slope_l2"] = slope_json(c.slope_l2);
        cj["slope_w12"] = slope_json(c.slope_w12);
        cj["slope_dt"] = slope_json(c.slope_dt);
        cj["pairing_spread"] = c.pairing_spread;
        root["corrector"] = std::move(cj);

        rep.thresholds.push_back(
            {"corrector_l2_slope", c.slope_l2.valid && std::abs(c.slope_l2.slope - 0.5) <= 0.1,
             "slope = " + format_g(c.slope_l2.slope) + ", target 0.5 +- 0.1"});
        rep.thresholds.push_back(
            {"corrector_dt_slope", c.slope_dt.valid && std::abs(c.slope_dt.slope - 0.5) <= 0.15,
             "slope = " + format_g(c.slope_dt.slope) + ", target 0.5 +- 0.15"});
        rep.thresholds.push_back(
            {"corrector_w12_slope",
             c.slope_w12.valid && std::abs(c.slope_w12.slope + 0.5) <= 0.1,
             "slope = " + format_g(c.slope_w12.slope) + ", target -0.5 +- 0.1"});
        if (c.pairing_spread > 0.0) {
            rep.thresholds.push_back({"corrector_pairing_spread", c.pairing_spread <= 3.0,
                                      "max/min across the ladder = " +
                                          format_g(c.pairing_spread) + ", bound 3"});
        }
    }
    if (in.audit != nullptr) {
        const AssumptionAudit& a = *in.audit;
        json aj;
        aj["pass"] = a.pass;
        aj["sum_k"] = a.sum_k;
        aj["summable"] = a.summable;
        aj["digest"] = hex_digest(a.digest);
        json recs = json::array();
        for (const AssumptionRecord& r : a.records) {
            recs.push_back(json{{"assumption", r.assumption},
                                {"mode", r.mode},
                                {"c", r.c},
                                {"k", r.k},
                                {"worst_ratio", r.worst_ratio},
                                {"holdout_violations", r.holdout_violations}});
        }
        aj["records"] = std::move(recs);
        root["audit"] = std::move(aj);
        rep.thresholds.push_back({"assumption_audit", a.pass,
                                  a.pass ? "all inequalities held with summable constants"
                                         : "audit reported violations"});
    }

    rep.pass = true;
    json tj = json::array();
    for (const ThresholdRow& row : rep.thresholds) {
        rep.pass = rep.pass && row.pass;
        tj.push_back(json{{"name", row.name}, {"pass", row.pass}, {"detail", row.detail}});
    }
    root["thresholds"] = std::move(tj);
    root["pass"] = rep.pass;

    rep.json_text = root.dump(2);
    rep.json_text += '\n';

    rep.csv_text = "nu,alpha,c_tilde,quantity,mean,stderr,n_paths,seed_lo,seed_hi\n";
    if (in.nu_sweep != nullptr) sweep_csv(rep.csv_text, *in.nu_sweep);
    if (in.alpha_sweep != nullptr) sweep_csv(rep.csv_text, *in.alpha_sweep);

    Fnv1a hash;
    hash.bytes(rep.json_text.data(), rep.json_text.size());
    rep.digest = hash.digest();
    return rep;
}

}  // namespace katolab
