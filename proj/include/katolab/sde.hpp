#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "katolab/digest.hpp"
#include "katolab/errors.hpp"
#include "katolab/noise.hpp"
#include "katolab/rng.hpp"
#include "katolab/stokes.hpp"

namespace katolab {

// Integration parameters for the spectral Galerkin SDE. mu < 0 means "track
// the viscosity" (the default scaling); sweeps override it with nu^alpha.
struct SdeConfig {
    double nu = 0.1;
    double mu = -1.0;
    int n_galerkin = 0;  // 0: use every basis mode
    double dt = 1e-3;
    double T = 1.0;
    double M = 10.0;
    std::string scheme = "exponential_euler_maruyama";
    std::uint64_t seed = 0;
    bool truncate_at_stop = false;  // zero the state past the threshold crossing
    bool linear_only = false;       // drop the nonlinear term (pure decay channel)

    double effective_mu() const { return mu >= 0.0 ? mu : nu; }
};

// Reproducible driving noise: K independent increments per step, each
// N(0, dt), produced by the shared deterministic normal stream and
// fingerprinted as it is consumed.
class BrownianStream {
public:
    BrownianStream(std::uint64_t seed, int k_modes, double dt);
    const std::vector<double>& next();
    std::uint64_t digest() const { return hash_.digest(); }
    std::uint64_t seed() const { return seed_; }
    int k_modes() const { return k_modes_; }
    double dt() const { return dt_; }

private:
    std::uint64_t seed_ = 0;
    int k_modes_ = 0;
    double dt_ = 0.0;
    double sqrt_dt_ = 0.0;
    NormalStream rng_;
    std::vector<double> current_;
    Fnv1a hash_;
};

struct EnergySample {
    double l2sq = 0.0;
    double h1sq = 0.0;
    double h1sq_integral = 0.0;  // trapezoidal running integral
};

struct TrajectoryRecord {
    std::vector<double> times;
    std::vector<std::vector<double>> coeff_history;
    std::vector<EnergySample> energy_history;
    std::vector<std::vector<double>> increments;  // per step, K entries
    std::optional<double> stop_hit;
    std::uint64_t seed = 0;
    std::uint64_t brownian_digest = 0;
};

// Integration failure carrying the failing step and everything recorded
// before it.
struct IntegrationError : NumericsError {
    IntegrationError(const std::string& msg, std::size_t step, TrajectoryRecord history)
        : NumericsError(msg), step_index(step), partial(std::move(history)) {}
    std::size_t step_index = 0;
    TrajectoryRecord partial;
};

// Coefficients of the nonlinear term plus the correction term, excluding the
// Stokes part which the stepper applies exactly through the integrating
// factor.
std::vector<double> drift(const SpectralBasis& basis, const SdeConfig& cfg,
                          const NoiseModel& model, const VelocityField& u);

// One exponential Euler-Maruyama update:
// c_k <- exp(-nu lambda_k dt) * [c_k + dt drift_k + sqrt(mu) sum_i sigma_ik dW_i].
VelocityField step(const SpectralBasis& basis, const SdeConfig& cfg, const NoiseModel& model,
                   const VelocityField& u, const std::vector<double>& dW);

// Full trajectory with energy history, threshold monitoring, and the
// consumed increments retained for the weak-form replay.
TrajectoryRecord simulate(const SpectralBasis& basis, const SdeConfig& cfg,
                          const NoiseModel& model, const VelocityField& u0);

// Per-time defect of the weak-form identity along a recorded path, evaluated
// against a fixed test field with the stored increments.
std::vector<double> weak_residual(const SpectralBasis& basis, const TrajectoryRecord& traj,
                                  const NoiseModel& model, const SdeConfig& cfg,
                                  const VelocityField& phi);

struct StratComparison {
    int n_paths = 0;
    double dt = 0.0;
    double mean_sq_discrepancy = 0.0;
    double stderr_mean = 0.0;
};

// Terminal mean-square gap between the Ito form (exponential scheme with
// correction) and a Heun predictor-corrector discretization of the
// Stratonovich form, both driven by the same Brownian paths.
StratComparison stratonovich_consistency(const SpectralBasis& basis, const SdeConfig& cfg,
                                         const NoiseModel& model, const VelocityField& u0,
                                         int n_paths, std::uint64_t seed);

// Strong self-refinement probe: integrates one Brownian path at dt, dt/2, ...
// dt/2^(levels-1), coupling the increments by summation, and returns the
// terminal L2 gap between each pair of adjacent levels. Successive gaps give
// an unbiased order estimate whether the level errors are correlated or not.
std::vector<double> strong_refinement_errors(const SpectralBasis& basis, const SdeConfig& cfg,
                                             const NoiseModel& model, const VelocityField& u0,
                                             int levels, std::uint64_t seed);

}  // namespace katolab
