#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "katolab/noise.hpp"

namespace katolab {

inline constexpr const char* kToolVersion = "1.0.0";

// Fully resolved experiment description. Parsed from a JSON config file with
// every omitted key replaced by the default recorded here; canonical_text is
// the normalized form (defaults filled in, ladders as arrays, keys sorted)
// and digest its content fingerprint, so two configs describing the same
// experiment hash identically regardless of formatting or key order.
struct ExperimentConfig {
    // domain and Galerkin space
    int nx = 0;       // required: cells per side, even, >= 8
    int n_modes = 0;  // required: basis size, <= (nx-1)^2

    // noise family
    NoiseKind kind = NoiseKind::transport_stratonovich;
    int n_noise = 4;
    double a0 = 0.1;
    double noise_decay = 1.0;
    std::uint64_t noise_seed = 42;

    // initial state: coeff_k = amplitude * (k+1)^(-decay) for k < modes
    double init_amplitude = 0.01;
    double init_decay = 2.0;
    int init_modes = 0;  // 0: min(4, n_modes)

    // SDE ensemble
    std::vector<double> nu_ladder;       // required, strictly decreasing in (0, 1)
    std::vector<double> alphas = {1.0};  // noise scaling exponents in [1/2, 2]
    double dt = 1e-3;
    double T = 1.0;
    double M = 10.0;  // energy stopping threshold above the initial energy
    int paths = 64;
    std::uint64_t base_seed = 1;

    // deterministic reference solver
    double dt_euler = 0.0;  // 0: follow dt

    // diagnostics
    std::vector<double> c_tildes = {1.0};  // boundary strip widths c~ * nu
    int panel = 8;                         // weak-convergence test fields
    int audit_samples = 200;

    // output
    std::string out_dir = "out";
    bool write_json = true;
    bool write_csv = true;

    std::string canonical_text;
    std::uint64_t digest = 0;
};

// Rebuilds canonical_text and digest from the current field values. The
// parsers call this; call it again after overriding fields in code so the
// digest matches what actually runs.
void finalize_config(ExperimentConfig& cfg);

// Parses and validates a config. Problems raise ConfigError; validation
// collects every failed rule into one message rather than stopping at the
// first. origin names the source in error messages (a path, or "<inline>").
ExperimentConfig parse_config_text(const std::string& text, const std::string& origin);
ExperimentConfig parse_config(const std::string& path);

struct RunOptions {
    std::string out_dir;                // empty: use the config's directory
    int threads = 1;                    // worker threads for sweeps
    bool write_paths = false;           // persist per-path records (enables verify)
    std::optional<std::uint64_t> seed;  // overrides the config's base seed
};

// Executes one subcommand: audit, euler, corrector, sweep, or verify.
// Returns the process exit code: 0 on success, 1 when a sweep point failed
// (the report is still written), when the audit fails, or when verify finds
// a mismatch. Configuration problems throw ConfigError, which the CLI maps
// to exit code 2.
int run_command(const std::string& subcommand, ExperimentConfig cfg, const RunOptions& opt);

}  // namespace katolab
