#include "katolab/sde.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include <Eigen/Dense>

#include "katolab/operators.hpp"

namespace katolab {

namespace {

int resolve_n(const SpectralBasis& basis, const SdeConfig& cfg) {
    int n = cfg.n_galerkin == 0 ? basis.n_modes : cfg.n_galerkin;
    if (n < 1 || n > basis.n_modes)
        throw ConfigError("n_galerkin must lie in [1, " + std::to_string(basis.n_modes) + "]");
    return n;
}

int validate(const SpectralBasis& basis, const SdeConfig& cfg, const NoiseModel& model,
             const VelocityField& u0) {
    if (cfg.scheme != "exponential_euler_maruyama")
        throw ConfigError("unknown scheme '" + cfg.scheme + "'");
    if (!(cfg.nu > 0.0 && cfg.nu < 1.0)) throw ConfigError("nu must lie in (0, 1)");
    if (!(cfg.effective_mu() > 0.0)) throw ConfigError("mu must be positive");
    if (!(cfg.dt > 0.0)) throw ConfigError("dt must be positive");
    if (!(cfg.T >= 0.0)) throw ConfigError("T must be nonnegative");
    if (!(cfg.M > 1.0)) throw ConfigError("stopping threshold M must exceed 1");
    if (model.basis_id != basis.id)
        throw ConfigError("noise model was built against a different basis");
    if (u0.basis_id != basis.id) throw ConfigError("initial state belongs to a different basis");
    if (static_cast<int>(u0.coeffs.size()) != basis.n_modes)
        throw ConfigError("initial state has the wrong coefficient count");

    const int n = resolve_n(basis, cfg);
    double scale = 0.0, tail = 0.0, h1sq = 0.0;
    for (int k = 0; k < basis.n_modes; ++k) {
        double c = u0.coeffs[k];
        scale = std::max(scale, std::abs(c));
        if (k >= n) tail = std::max(tail, std::abs(c));
        h1sq += basis.eigenvalues[k] * c * c;
    }
    if (tail > 1e-12 * std::max(1.0, scale))
        throw ConfigError("initial state has energy beyond the configured span");
    double h1 = std::sqrt(h1sq);
    if (h1 > 0.0 && cfg.dt > 0.5 / h1)
        throw NumericsError("dt exceeds the advective bound 0.5/|u0|_1");
    return n;
}

// Nonlinear term projected to the working span, without correction or Stokes.
std::vector<double> nonlinear_coeffs(const SpectralBasis& basis, int n, const VelocityField& u,
                                     bool linear_only) {
    std::vector<double> d(n, 0.0);
    if (linear_only) return d;
    VectorGridField adv = advect(basis.dom, u.grid, u.grid);
    std::vector<double> a = basis.project_grid(adv, n);
    for (int k = 0; k < n; ++k) d[k] = -a[k];
    return d;
}

// sigma_ik dW_i summed over modes, in span coefficients.
std::vector<double> noise_increment(const NoiseModel& model, int n,
                                    const std::vector<double>& coeffs,
                                    const std::vector<double>& dW) {
    const int K = model.correlations.n_noise;
    std::vector<double> acc(n, 0.0);
    if (model.kind == NoiseKind::additive) {
        for (int i = 0; i < K; ++i) {
            const Eigen::VectorXd& s = model.additive_coeffs[i];
            for (int k = 0; k < n; ++k) acc[k] += s[k] * dW[i];
        }
        return acc;
    }
    Eigen::Map<const Eigen::VectorXd> c(coeffs.data(), n);
    for (int i = 0; i < K; ++i) {
        Eigen::VectorXd y = model.gmat[i].topLeftCorner(n, n) * c;
        for (int k = 0; k < n; ++k) acc[k] += y[k] * dW[i];
    }
    return acc;
}

void require_finite(const std::vector<double>& c) {
    for (double x : c)
        if (!std::isfinite(x)) throw NumericsError("non-finite coefficient in SDE state");
}

}  // namespace

BrownianStream::BrownianStream(std::uint64_t seed, int k_modes, double dt)
    : seed_(seed), k_modes_(k_modes), dt_(dt), sqrt_dt_(std::sqrt(dt)), rng_(seed),
      current_(static_cast<size_t>(k_modes), 0.0) {
    if (k_modes < 1) throw ConfigError("Brownian stream needs at least one mode");
    if (!(dt > 0.0)) throw ConfigError("Brownian stream needs dt > 0");
}

const std::vector<double>& BrownianStream::next() {
    for (int i = 0; i < k_modes_; ++i) {
        current_[i] = sqrt_dt_ * rng_.normal();
        hash_.value(current_[i]);
    }
    return current_;
}

std::vector<double> drift(const SpectralBasis& basis, const SdeConfig& cfg,
                          const NoiseModel& model, const VelocityField& u) {
    const int n = resolve_n(basis, cfg);
    std::vector<double> d = nonlinear_coeffs(basis, n, u, cfg.linear_only);
    if (model.ito_correction_enabled) {
        const double half_mu = 0.5 * cfg.effective_mu();
        Eigen::Map<const Eigen::VectorXd> c(u.coeffs.data(), n);
        Eigen::VectorXd y = model.correction.topLeftCorner(n, n) * c;
        for (int k = 0; k < n; ++k) d[k] += half_mu * y[k];
    }
    return d;
}

VelocityField step(const SpectralBasis& basis, const SdeConfig& cfg, const NoiseModel& model,
                   const VelocityField& u, const std::vector<double>& dW) {
    const int n = resolve_n(basis, cfg);
    if (static_cast<int>(dW.size()) != model.correlations.n_noise)
        throw ConfigError("increment count does not match the noise mode count");

    std::vector<double> d = drift(basis, cfg, model, u);
    std::vector<double> acc = noise_increment(model, n, u.coeffs, dW);
    const double sq_mu = std::sqrt(cfg.effective_mu());

    std::vector<double> out(n);
    for (int k = 0; k < n; ++k) {
        const double decay = std::exp(-cfg.nu * basis.eigenvalues[k] * cfg.dt);
        out[k] = decay * (u.coeffs[k] + cfg.dt * d[k] + sq_mu * acc[k]);
    }
    require_finite(out);
    return basis.from_coeffs(std::move(out));
}

TrajectoryRecord simulate(const SpectralBasis& basis, const SdeConfig& cfg,
                          const NoiseModel& model, const VelocityField& u0) {
    const int n = validate(basis, cfg, model, u0);
    const int n_steps = static_cast<int>(std::floor(cfg.T / cfg.dt + 1e-9));

    auto energy_of = [&](const std::vector<double>& c) {
        EnergySample e;
        for (int k = 0; k < n && k < static_cast<int>(c.size()); ++k) {
            e.l2sq += c[k] * c[k];
            e.h1sq += basis.eigenvalues[k] * c[k] * c[k];
        }
        return e;
    };

    TrajectoryRecord rec;
    rec.seed = cfg.seed;
    std::vector<double> c0(u0.coeffs.begin(), u0.coeffs.begin() + n);
    EnergySample e0 = energy_of(c0);
    rec.times.push_back(0.0);
    rec.coeff_history.push_back(c0);
    rec.energy_history.push_back(e0);

    const double threshold = cfg.M + e0.l2sq;
    double sup_l2 = e0.l2sq;
    double integral = 0.0;
    bool past_stop = false;

    BrownianStream bs(cfg.seed, model.correlations.n_noise, cfg.dt);
    VelocityField u = basis.from_coeffs(c0);

    for (int j = 0; j < n_steps; ++j) {
        const std::vector<double>& dW = bs.next();
        rec.increments.push_back(dW);
        const double t = (j + 1) * cfg.dt;

        if (past_stop && cfg.truncate_at_stop) {
            const EnergySample prev = rec.energy_history.back();
            EnergySample e;
            integral += 0.5 * cfg.dt * (prev.h1sq + e.h1sq);
            e.h1sq_integral = integral;
            rec.times.push_back(t);
            rec.coeff_history.push_back(std::vector<double>(n, 0.0));
            rec.energy_history.push_back(e);
            continue;
        }

        try {
            u = step(basis, cfg, model, u, dW);
        } catch (const NumericsError& err) {
            rec.brownian_digest = bs.digest();
            throw IntegrationError(std::string(err.what()) + " at step " + std::to_string(j + 1),
                                   static_cast<std::size_t>(j + 1), std::move(rec));
        }

        std::vector<double> c(u.coeffs.begin(), u.coeffs.begin() + n);
        EnergySample e = energy_of(c);
        integral += 0.5 * cfg.dt * (rec.energy_history.back().h1sq + e.h1sq);
        e.h1sq_integral = integral;
        sup_l2 = std::max(sup_l2, e.l2sq);

        rec.times.push_back(t);
        rec.coeff_history.push_back(std::move(c));
        rec.energy_history.push_back(e);

        if (!rec.stop_hit && sup_l2 + integral >= threshold) {
            rec.stop_hit = t;
            past_stop = true;
        }
    }
    rec.brownian_digest = bs.digest();
    return rec;
}

std::vector<double> weak_residual(const SpectralBasis& basis, const TrajectoryRecord& traj,
                                  const NoiseModel& model, const SdeConfig& cfg,
                                  const VelocityField& phi) {
    if (phi.basis_id != basis.id) throw ConfigError("test field belongs to a different basis");
    if (static_cast<int>(phi.coeffs.size()) != basis.n_modes)
        throw ConfigError("test field has the wrong coefficient count");
    if (model.basis_id != basis.id)
        throw ConfigError("noise model was built against a different basis");
    if (traj.coeff_history.empty()) throw ConfigError("empty trajectory");
    if (traj.increments.size() + 1 < traj.coeff_history.size())
        throw ConfigError("trajectory is missing stored increments");

    const int n = resolve_n(basis, cfg);
    if (static_cast<int>(traj.coeff_history.front().size()) < n)
        throw ConfigError("trajectory span is narrower than the configured one");
    const int K = model.correlations.n_noise;
    if (!traj.increments.empty() && static_cast<int>(traj.increments.front().size()) != K)
        throw ConfigError("stored increments do not match the noise mode count");
    const double mu = cfg.effective_mu();
    const double sq_mu = std::sqrt(mu);

    std::vector<double> phin(phi.coeffs.begin(), phi.coeffs.begin() + n);
    VelocityField phiN = basis.from_coeffs(phin);

    std::vector<VectorGridField> adj;
    if (model.ito_correction_enabled)
        for (int i = 0; i < K; ++i) adj.push_back(apply_adjoint(basis, model, i, phiN));

    auto span_dot = [&](const std::vector<double>& c) {
        double s = 0.0;
        for (int k = 0; k < n; ++k) s += c[k] * phin[k];
        return s;
    };

    std::vector<double> defect(traj.coeff_history.size(), 0.0);
    const double base = span_dot(traj.coeff_history.front());
    double rhs = base;

    for (size_t j = 0; j + 1 < traj.coeff_history.size(); ++j) {
        const std::vector<double>& cj = traj.coeff_history[j];
        VelocityField uj = basis.from_coeffs(cj);

        if (!cfg.linear_only) {
            std::vector<double> a = basis.project_grid(advect(basis.dom, uj.grid, uj.grid), n);
            rhs -= cfg.dt * span_dot(a);
        }
        double lin = 0.0;
        for (int k = 0; k < n; ++k) lin += basis.eigenvalues[k] * cj[k] * phin[k];
        rhs -= cfg.dt * cfg.nu * lin;

        if (model.ito_correction_enabled)
            for (int i = 0; i < K; ++i)
                rhs += cfg.dt * 0.5 * mu * dot(basis.dom, apply_q(model, i, uj.grid), adj[i]);

        const std::vector<double>& dW = traj.increments[j];
        std::vector<double> sig(n, 0.0);
        if (model.kind == NoiseKind::additive) {
            for (int i = 0; i < K; ++i)
                for (int k = 0; k < n; ++k) sig[k] += model.additive_coeffs[i][k] * dW[i];
        } else {
            Eigen::Map<const Eigen::VectorXd> cv(cj.data(), n);
            for (int i = 0; i < K; ++i) {
                Eigen::VectorXd y = model.gmat[i].topLeftCorner(n, n) * cv;
                for (int k = 0; k < n; ++k) sig[k] += y[k] * dW[i];
            }
        }
        rhs += sq_mu * span_dot(sig);

        defect[j + 1] = std::abs(span_dot(traj.coeff_history[j + 1]) - rhs);
    }
    return defect;
}

StratComparison stratonovich_consistency(const SpectralBasis& basis, const SdeConfig& cfg,
                                         const NoiseModel& model, const VelocityField& u0,
                                         int n_paths, std::uint64_t seed) {
    if (!model.ito_correction_enabled)
        throw ConfigError("Stratonovich comparison needs a kind with a correction term");
    if (n_paths < 1) throw ConfigError("Stratonovich comparison needs at least one path");
    const int n = validate(basis, cfg, model, u0);
    const int K = model.correlations.n_noise;
    const int n_steps = static_cast<int>(std::floor(cfg.T / cfg.dt + 1e-9));
    const double sq_mu = std::sqrt(cfg.effective_mu());

    // Stratonovich drift: nonlinear and Stokes terms, no correction.
    auto f_strat = [&](const VelocityField& u) {
        std::vector<double> d = nonlinear_coeffs(basis, n, u, cfg.linear_only);
        for (int k = 0; k < n; ++k) d[k] -= cfg.nu * basis.eigenvalues[k] * u.coeffs[k];
        return d;
    };

    double sum = 0.0, sum_sq = 0.0;
    for (int r = 0; r < n_paths; ++r) {
        BrownianStream bs(seed + static_cast<std::uint64_t>(r), K, cfg.dt);
        VelocityField ui = basis.from_coeffs(
            std::vector<double>(u0.coeffs.begin(), u0.coeffs.begin() + n));
        VelocityField uh = ui;

        for (int j = 0; j < n_steps; ++j) {
            const std::vector<double>& dW = bs.next();
            ui = step(basis, cfg, model, ui, dW);

            std::vector<double> f0 = f_strat(uh);
            std::vector<double> g0 = noise_increment(model, n, uh.coeffs, dW);
            std::vector<double> pc(n);
            for (int k = 0; k < n; ++k)
                pc[k] = uh.coeffs[k] + cfg.dt * f0[k] + sq_mu * g0[k];
            require_finite(pc);
            VelocityField pred = basis.from_coeffs(std::move(pc));
            std::vector<double> f1 = f_strat(pred);
            std::vector<double> g1 = noise_increment(model, n, pred.coeffs, dW);
            std::vector<double> hc(n);
            for (int k = 0; k < n; ++k)
                hc[k] = uh.coeffs[k] + 0.5 * cfg.dt * (f0[k] + f1[k]) +
                        0.5 * sq_mu * (g0[k] + g1[k]);
            require_finite(hc);
            uh = basis.from_coeffs(std::move(hc));
        }

        double d2 = 0.0;
        for (int k = 0; k < n; ++k) {
            double d = ui.coeffs[k] - uh.coeffs[k];
            d2 += d * d;
        }
        sum += d2;
        sum_sq += d2 * d2;
    }

    StratComparison out;
    out.n_paths = n_paths;
    out.dt = cfg.dt;
    out.mean_sq_discrepancy = sum / n_paths;
    if (n_paths > 1) {
        double var = (sum_sq - sum * sum / n_paths) / (n_paths - 1);
        out.stderr_mean = std::sqrt(std::max(var, 0.0) / n_paths);
    }
    return out;
}

std::vector<double> strong_refinement_errors(const SpectralBasis& basis, const SdeConfig& cfg,
                                             const NoiseModel& model, const VelocityField& u0,
                                             int levels, std::uint64_t seed) {
    if (levels < 2) throw ConfigError("refinement probe needs at least two levels");
    const int n = validate(basis, cfg, model, u0);
    const int K = model.correlations.n_noise;
    const int coarse_steps = static_cast<int>(std::floor(cfg.T / cfg.dt + 1e-9));
    if (coarse_steps < 1) throw ConfigError("refinement probe needs at least one coarse step");

    const int refine = 1 << (levels - 1);
    const double dt_fine = cfg.dt / refine;
    const int fine_steps = coarse_steps * refine;

    BrownianStream bs(seed, K, dt_fine);
    std::vector<std::vector<double>> fine(fine_steps);
    for (int j = 0; j < fine_steps; ++j) fine[j] = bs.next();

    std::vector<std::vector<double>> terminal(levels);
    for (int lev = 0; lev < levels; ++lev) {
        const int group = 1 << (levels - 1 - lev);
        SdeConfig c = cfg;
        c.dt = cfg.dt / (1 << lev);
        VelocityField u = basis.from_coeffs(
            std::vector<double>(u0.coeffs.begin(), u0.coeffs.begin() + n));
        std::vector<double> dW(K);
        const int steps = coarse_steps * (1 << lev);
        for (int j = 0; j < steps; ++j) {
            std::fill(dW.begin(), dW.end(), 0.0);
            for (int m = 0; m < group; ++m)
                for (int i = 0; i < K; ++i) dW[i] += fine[j * group + m][i];
            u = step(basis, c, model, u, dW);
        }
        terminal[lev] = std::vector<double>(u.coeffs.begin(), u.coeffs.begin() + n);
    }

    std::vector<double> errs(levels - 1, 0.0);
    for (int lev = 0; lev + 1 < levels; ++lev) {
        double d2 = 0.0;
        for (int k = 0; k < n; ++k) {
            double d = terminal[lev][k] - terminal[lev + 1][k];
            d2 += d * d;
        }
        errs[lev] = std::sqrt(d2);
    }
    return errs;
}

}  // namespace katolab
