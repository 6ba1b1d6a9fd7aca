#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "katolab/euler.hpp"
#include "katolab/grid.hpp"
#include "katolab/noise.hpp"
#include "katolab/sde.hpp"
#include "katolab/stokes.hpp"

namespace katolab {

// Sample mean and standard error of one scalar quantity over an ensemble.
struct Estimate {
    double mean = 0.0;
    double se = 0.0;
    int n = 0;
};

// Mean and standard error accumulated in ascending-seed order, so the result
// is independent of the order the paths were produced in. Requires at least
// two samples.
Estimate ensemble_estimate(std::vector<std::pair<std::uint64_t, double>> keyed);

// Fixed deterministic panel for the weak-convergence quantity: the first
// n_eigen eigenfields (unit norm by orthonormality) plus the corrector's
// first recorded snapshot normalized to unit norm, labelled "corrector".
struct TestField {
    std::string id;
    VectorGridField field;
};

std::vector<TestField> test_field_panel(const SpectralBasis& basis, const Corrector& cor,
                                        int n_eigen = 8);

// Everything one trajectory contributes to the criterion quantities. The
// dissipation integrals use one cell-distributed squared-gradient integrand,
// so every strip integral is dominated by the global one term by term.
struct PathQuantities {
    std::uint64_t seed = 0;
    double sup_diff_sq = 0.0;    // sup over record times of |u_t - ubar_t|^2
    double sup_energy = 0.0;     // sup over record times of |u_t|^2
    double terminal_energy = 0.0;
    double dissipation = 0.0;    // trapezoid of the whole-domain gradient energy
    std::vector<double> strip_dissipation;         // same integrand per strip
    std::vector<std::vector<double>> weak_series;  // <u_t - ubar_t, phi> per field
    bool stopped = false;
};

// Reference velocities are interpolated linearly in time onto the trajectory
// record times; the record must stay inside the reference time range.
PathQuantities per_path_quantities(const SpectralBasis& basis, const TrajectoryRecord& traj,
                                   const EulerSolution& euler,
                                   const std::vector<BoundaryStrip>& strips,
                                   const std::vector<TestField>& test_fields);

// Ensemble-level criterion quantities at one (nu, alpha) point.
//   item1           E[ sup_t |u - ubar|^2 ]
//   item2           per test field, max_t |E<u_t - ubar_t, phi>|
//   item3           nu * E int |grad u|^2 dt over the whole domain
//   item4           nu * E int |grad u|^2 dt over each boundary strip
//   scaled_item4    nu^{2(alpha - 1/2)} * the strip integrals
struct CriterionQuantities {
    double nu = 0.0;
    double alpha = 1.0;
    double mu = 0.0;
    std::vector<double> c_tildes;
    std::vector<bool> strip_clamped;  // effective width was clamped up to h/2
    Estimate item1;
    Estimate raw_global;  // E int |grad u|^2 dt, no viscosity prefactor
    Estimate item3;
    std::vector<Estimate> raw_strip;
    std::vector<Estimate> item4;
    std::vector<Estimate> scaled_item4;
    std::vector<std::string> field_ids;
    std::vector<double> item2;
    std::vector<double> item2_se;  // standard error at the maximizing time
    Estimate sup_energy;
    Estimate terminal_energy;
    int n_paths = 0;
    std::uint64_t seed_lo = 0;
    std::uint64_t seed_hi = 0;
    std::vector<PathQuantities> paths;  // ascending seed; kept for paired tests
    bool failed = false;
    std::string failure;
};

// Pure aggregation of per-path records into a point estimate; deterministic
// given the same records, so a report can be regenerated from persisted
// paths bit for bit.
CriterionQuantities aggregate_point(double nu, double alpha, double mu,
                                    const std::vector<double>& c_tildes,
                                    const std::vector<bool>& strip_clamped,
                                    const std::vector<std::string>& field_ids,
                                    std::vector<PathQuantities> paths);

// Simulates n_paths trajectories with seeds seed_block, seed_block + 1, ...
// and aggregates them. cfg.nu and cfg.mu must already carry the point's
// values. Path failures mark the point failed; surviving paths still
// aggregate when at least two remain.
CriterionQuantities criterion_point(const SpectralBasis& basis, const SdeConfig& cfg,
                                    const NoiseModel& model, const VelocityField& u0,
                                    const EulerSolution& euler,
                                    const std::vector<double>& c_tildes,
                                    const std::vector<TestField>& test_fields, int n_paths,
                                    std::uint64_t seed_block, double alpha = 1.0);

// Least-squares line through (log x, log y) with a 95% confidence half-width
// on the slope from the residuals. Slopes are only reported (valid = true)
// for ladders of at least four points.
struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
    double ci95 = 0.0;
    int n = 0;
    bool valid = false;
};

SlopeFit fit_linear(const std::vector<double>& x, const std::vector<double>& y);
SlopeFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y);

// One sweep over a decreasing viscosity ladder, optionally crossed with a
// noise-scaling ladder (mu = nu^alpha). Points are laid out alpha-major:
// points[a * nu_count + k]. Every (alpha, nu_k) point reuses the seed block
// of nu_k, so the alpha = 1 column reproduces the plain sweep bit for bit
// and fixed-nu comparisons across alpha are driven by common noise.
struct SweepResult {
    std::string axis;  // "nu_ladder" or "alpha_ladder"
    std::vector<double> nu_ladder;
    std::vector<double> alphas;
    std::vector<double> c_tildes;
    std::vector<CriterionQuantities> points;
    double u0_energy = 0.0;
    int n_paths = 0;
    std::uint64_t base_seed = 0;

    // Log-log slopes along the ladder for the first alpha.
    SlopeFit slope_item1;
    SlopeFit slope_item3;
    std::vector<SlopeFit> slope_item4;  // per c_tilde

    // One-sided pairwise z-tests at 95% along the decreasing ladder
    // (first alpha): every adjacent pair must drop by at least 1.645
    // combined standard errors.
    bool item3_decreasing = false;
    double item3_min_z = 0.0;
    std::vector<bool> item4_decreasing;  // per c_tilde
    bool kappa_decreasing = false;       // kappa = E[sup|u|^2] - |u0|^2
    double kappa_min_z = 0.0;

    // Directional consistency: item1 drops on every ladder step where
    // item4 (first c_tilde) drops. Observed, never asserted as a theorem.
    bool item1_comonotone = false;

    // Alpha-ladder verdicts (empty for plain sweeps): the scaled criterion
    // decreasing along the nu-ladder per alpha, the terminal energy
    // decreasing in alpha at fixed nu (paired test over common seeds), and
    // the critical-scaling flag alpha == 1/2.
    std::vector<bool> scaled_decreasing;
    std::vector<bool> alpha_energy_decreasing;
    std::vector<bool> alpha_critical;

    std::vector<std::string> failures;
};

SweepResult run_nu_sweep(const SpectralBasis& basis, const SdeConfig& base,
                         const NoiseModel& model, const VelocityField& u0,
                         const EulerSolution& euler, const std::vector<double>& nu_ladder,
                         const std::vector<double>& c_tildes, int n_paths, int threads = 1,
                         int panel_eigen = 8);

SweepResult run_alpha_sweep(const SpectralBasis& basis, const SdeConfig& base,
                            const NoiseModel& model, const VelocityField& u0,
                            const EulerSolution& euler, const std::vector<double>& nu_ladder,
                            const std::vector<double>& alphas,
                            const std::vector<double>& c_tildes, int n_paths,
                            int threads = 1, int panel_eigen = 8);

// Corrector norm estimates along a viscosity ladder with fitted power laws,
// plus the pairing-ratio stability statistic: per nu the maximum of
// |<advect(f, f), v_t>| / (nu |grad f|^2_strip) over the panel and all
// recorded times, and its max/min spread across the ladder.
struct CorrectorLadderPoint {
    double nu = 0.0;
    CorrectorEstimates est;
    double pairing_max = 0.0;
};

struct CorrectorLadder {
    double c_tilde = 0.0;
    std::vector<CorrectorLadderPoint> points;
    SlopeFit slope_l2;
    SlopeFit slope_w12;
    SlopeFit slope_dt;
    double pairing_spread = 0.0;  // max/min across the ladder; 0 without a panel
};

CorrectorLadder corrector_ladder(const EulerSolution& sol, const std::vector<double>& nus,
                                 double c_tilde, const std::vector<VelocityField>& panel);

// Regeneration from persisted artifacts: both rebuild the derived statistics
// (slopes, significance flags, failure list) from stored points, bit for bit
// equal to the original run, so a report can be re-derived without
// re-simulating. The sweep skeleton must carry axis, ladders, c_tildes,
// u0_energy, n_paths, base_seed, and the points.
SweepResult rebuild_sweep(SweepResult skeleton);
CorrectorLadder rebuild_corrector_ladder(double c_tilde,
                                         std::vector<CorrectorLadderPoint> points);

// Report assembly: canonical JSON (schema "1") plus a long-format CSV with
// header nu,alpha,c_tilde,quantity,mean,stderr,n_paths,seed_lo,seed_hi, and
// a threshold table evaluated on whatever sections are present. Sections
// left null are omitted from the output.
struct ReportInputs {
    std::uint64_t config_digest = 0;
    std::uint64_t basis_digest = 0;
    std::uint64_t euler_digest = 0;
    const SweepResult* nu_sweep = nullptr;
    const SweepResult* alpha_sweep = nullptr;
    const CorrectorLadder* corrector = nullptr;
    const AssumptionAudit* audit = nullptr;
};

struct ThresholdRow {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct DiagnosticsReport {
    std::string json_text;
    std::string csv_text;
    std::uint64_t digest = 0;  // content digest of json_text
    std::vector<ThresholdRow> thresholds;
    bool pass = false;
};

DiagnosticsReport assemble_report(const ReportInputs& in);

}  // namespace katolab
