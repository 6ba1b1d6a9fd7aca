#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "katolab/errors.hpp"
#include "katolab/noise.hpp"
#include "katolab/operators.hpp"
#include "katolab/sde.hpp"
#include "katolab/stokes.hpp"

using namespace katolab;

namespace {

const SpectralBasis& shared_basis() {
    static SpectralBasis basis = build_basis(build_domain(12), 12);
    return basis;
}

VelocityField mixed_state(const SpectralBasis& basis, double scale = 1.0) {
    std::vector<double> c(basis.n_modes, 0.0);
    c[0] = 0.30 * scale;
    c[1] = -0.20 * scale;
    c[2] = 0.15 * scale;
    c[3] = 0.10 * scale;
    return basis.from_coeffs(std::move(c));
}

NoiseModel quiet_model(const SpectralBasis& basis) {
    return build_noise_model(basis, NoiseKind::transport_ito, 2, 0.0, 1.0, 7);
}

double least_squares_slope(const std::vector<double>& log2_values) {
    // Abscissae are 0, 1, 2, ... (one halving per level); slope of the fit,
    // sign-flipped so decay at first order reports +1.
    const int m = static_cast<int>(log2_values.size());
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (int i = 0; i < m; ++i) {
        sx += i;
        sy += log2_values[i];
        sxx += static_cast<double>(i) * i;
        sxy += i * log2_values[i];
    }
    return -(m * sxy - sx * sy) / (m * sxx - sx * sx);
}

}  // namespace

TEST_CASE("Brownian stream is reproducible and fingerprints its draws") {
    BrownianStream a(42, 3, 1e-3);
    BrownianStream b(42, 3, 1e-3);
    std::uint64_t d0 = a.digest();
    for (int j = 0; j < 50; ++j) {
        std::vector<double> xa = a.next();
        std::vector<double> xb = b.next();
        REQUIRE(xa.size() == 3);
        for (int i = 0; i < 3; ++i) CHECK(xa[i] == xb[i]);
    }
    CHECK(a.digest() == b.digest());
    CHECK(a.digest() != d0);

    BrownianStream c(43, 3, 1e-3);
    c.next();
    CHECK(c.digest() != b.digest());

    // Increment moments: N(0, dt).
    const double dt = 0.25;
    BrownianStream w(99, 1, dt);
    double mean = 0.0, var = 0.0;
    const int n = 20000;
    for (int j = 0; j < n; ++j) mean += w.next()[0];
    mean /= n;
    BrownianStream w2(99, 1, dt);
    for (int j = 0; j < n; ++j) {
        double x = w2.next()[0] - mean;
        var += x * x;
    }
    var /= (n - 1);
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(var - dt) < 0.02 * dt + 0.01);

    CHECK_THROWS_AS(BrownianStream(1, 0, 1e-3), ConfigError);
    CHECK_THROWS_AS(BrownianStream(1, 2, 0.0), ConfigError);
}

TEST_CASE("zero-horizon simulation returns the initial state only") {
    const SpectralBasis& basis = shared_basis();
    NoiseModel model = quiet_model(basis);
    VelocityField u0 = mixed_state(basis);
    SdeConfig cfg;
    cfg.T = 0.0;
    TrajectoryRecord rec = simulate(basis, cfg, model, u0);
    REQUIRE(rec.times.size() == 1);
    CHECK(rec.times[0] == 0.0);
    REQUIRE(rec.coeff_history.size() == 1);
    for (int k = 0; k < basis.n_modes; ++k) CHECK(rec.coeff_history[0][k] == u0.coeffs[k]);
    CHECK(rec.increments.empty());
    CHECK(!rec.stop_hit.has_value());
    CHECK(rec.energy_history[0].h1sq_integral == 0.0);
}

TEST_CASE("same seed gives a bit-identical trajectory") {
    const SpectralBasis& basis = shared_basis();
    NoiseModel model =
        build_noise_model(basis, NoiseKind::transport_stratonovich, 3, 0.25, 1.0, 11);
    VelocityField u0 = mixed_state(basis);
    SdeConfig cfg;
    cfg.T = 0.05;
    cfg.dt = 1e-3;
    cfg.seed = 314;
    TrajectoryRecord a = simulate(basis, cfg, model, u0);
    TrajectoryRecord b = simulate(basis, cfg, model, u0);
    REQUIRE(a.times.size() == b.times.size());
    REQUIRE(a.times.size() == 51);
    CHECK(a.brownian_digest == b.brownian_digest);
    CHECK(a.seed == b.seed);
    for (size_t j = 0; j < a.times.size(); ++j) {
        CHECK(a.times[j] == b.times[j]);
        for (size_t k = 0; k < a.coeff_history[j].size(); ++k)
            CHECK(a.coeff_history[j][k] == b.coeff_history[j][k]);
    }
    REQUIRE(a.increments.size() == 50);
    for (size_t j = 0; j < a.increments.size(); ++j)
        for (int i = 0; i < 3; ++i) CHECK(a.increments[j][i] == b.increments[j][i]);

    SdeConfig other = cfg;
    other.seed = 315;
    TrajectoryRecord c = simulate(basis, other, model, u0);
    CHECK(c.brownian_digest != a.brownian_digest);
}

TEST_CASE("linear decay channel reproduces the integrating factor exactly") {
    const SpectralBasis& basis = shared_basis();
    NoiseModel model = quiet_model(basis);
    VelocityField u0 = mixed_state(basis);
    SdeConfig cfg;
    cfg.linear_only = true;
    cfg.nu = 0.2;
    cfg.T = 0.1;
    cfg.dt = 2e-3;
    TrajectoryRecord rec = simulate(basis, cfg, model, u0);
    for (size_t j = 0; j < rec.times.size(); ++j) {
        double t = rec.times[j];
        for (int k = 0; k < basis.n_modes; ++k) {
            double expect = u0.coeffs[k] * std::exp(-cfg.nu * basis.eigenvalues[k] * t);
            CHECK(rec.coeff_history[j][k] == doctest::Approx(expect).epsilon(1e-13));
        }
    }
}

TEST_CASE("recorded energies match the stored coefficients") {
    const SpectralBasis& basis = shared_basis();
    NoiseModel model = build_noise_model(basis, NoiseKind::salt, 2, 0.2, 1.0, 5);
    VelocityField u0 = mixed_state(basis);
    SdeConfig cfg;
    cfg.T = 0.04;
    cfg.dt = 1e-3;
    cfg.seed = 8;
    TrajectoryRecord rec = simulate(basis, cfg, model, u0);
    double integral = 0.0;
    for (size_t j = 0; j < rec.times.size(); ++j) {
        double l2 = 0.0, h1 = 0.0;
        const std::vector<double>& c = rec.coeff_history[j];
        for (size_t k = 0; k < c.size(); ++k) {
            l2 += c[k] * c[k];
            h1 += basis.eigenvalues[k] * c[k] * c[k];
        }
        CHECK(std::abs(rec.energy_history[j].l2sq - l2) <= 1e-12 * std::max(1.0, l2));
        CHECK(std::abs(rec.energy_history[j].h1sq - h1) <= 1e-12 * std::max(1.0, h1));
        if (j > 0)
            integral += 0.5 * cfg.dt * (rec.energy_history[j - 1].h1sq + rec.energy_history[j].h1sq);
        CHECK(std::abs(rec.energy_history[j].h1sq_integral - integral) <= 1e-12);
    }
}

TEST_CASE("nonlinear drift is skew to the state and matches a direct quadrature") {
    const SpectralBasis& basis = shared_basis();
    const Domain& dom = basis.dom;
    NoiseModel model = build_noise_model(basis, NoiseKind::transport_ito, 2, 0.3, 1.0, 3);
    REQUIRE(!model.ito_correction_enabled);
    VelocityField u = mixed_state(basis);
    SdeConfig cfg;

    std::vector<double> d = drift(basis, cfg, model, u);
    REQUIRE(static_cast<int>(d.size()) == basis.n_modes);

    double pair = 0.0, dnorm = 0.0, unorm = 0.0;
    for (int k = 0; k < basis.n_modes; ++k) {
        pair += d[k] * u.coeffs[k];
        dnorm += d[k] * d[k];
        unorm += u.coeffs[k] * u.coeffs[k];
    }
    CHECK(dnorm > 0.0);
    CHECK(std::abs(pair) <= 1e-11 * std::sqrt(dnorm * unorm));

    // Direct quadrature of the skew advection form against each eigenfield.
    VectorGridField form = advective_form(dom, u.grid, u.grid);
    VectorGridField adj = advective_form_adjoint(dom, u.grid, u.grid);
    VectorGridField g = VectorGridField::zeros(dom);
    for (size_t m = 0; m < g.u.size(); ++m) g.u[m] = 0.5 * (form.u[m] - adj.u[m]);
    for (size_t m = 0; m < g.v.size(); ++m) g.v[m] = 0.5 * (form.v[m] - adj.v[m]);
    g = zero_wall_normal(g);
    for (int k = 0; k < basis.n_modes; ++k) {
        std::vector<double> unit(basis.n_modes, 0.0);
        unit[k] = 1.0;
        VelocityField ek = basis.from_coeffs(std::move(unit));
        double oracle = -dot(dom, g, ek.grid);
        CHECK(d[k] == doctest::Approx(oracle).epsilon(1e-10));
    }

    // The correction augments the drift by mu/2 times the correction matrix.
    NoiseModel strat =
        build_noise_model(basis, NoiseKind::transport_stratonovich, 2, 0.3, 1.0, 3);
    std::vector<double> dc = drift(basis, cfg, strat, u);
    Eigen::Map<const Eigen::VectorXd> cv(u.coeffs.data(), basis.n_modes);
    Eigen::VectorXd corr = strat.correction * cv;
    const double half_mu = 0.5 * cfg.effective_mu();
    for (int k = 0; k < basis.n_modes; ++k)
        CHECK(dc[k] - d[k] == doctest::Approx(half_mu * corr[k]).epsilon(1e-10));

    SdeConfig lin = cfg;
    lin.linear_only = true;
    std::vector<double> dl = drift(basis, lin, model, u);
    for (int k = 0; k < basis.n_modes; ++k) CHECK(dl[k] == 0.0);
}

TEST_CASE("noise-off energy balance defect shrinks at first order") {
    const SpectralBasis& basis = shared_basis();
    NoiseModel model = quiet_model(basis);
    VelocityField u0 = mixed_state(basis);
    std::vector<double> log2_defect;
    for (double dt : {4e-3, 2e-3, 1e-3}) {
        SdeConfig cfg;
        cfg.nu = 0.1;
        cfg.T = 0.25;
        cfg.dt = dt;
        TrajectoryRecord rec = simulate(basis, cfg, model, u0);
        const EnergySample& last = rec.energy_history.back();
        double defect =
            std::abs(last.l2sq + 2.0 * cfg.nu * last.h1sq_integral - rec.energy_history[0].l2sq);
        REQUIRE(defect > 0.0);
        log2_defect.push_back(std::log2(defect));
    }
    CHECK(least_squares_slope(log2_defect) >= 0.9);
}

TEST_CASE("stopping time is monotone in the threshold and truncation zeroes the tail") {
    const SpectralBasis& basis = shared_basis();
    // Loud additive forcing so the energy threshold is actually reached.
    NoiseModel model = build_noise_model(basis, NoiseKind::additive, 3, 6.0, 0.5, 21);
    VelocityField u0 = mixed_state(basis);
    SdeConfig cfg;
    cfg.nu = 0.1;
    cfg.mu = 1.0;
    cfg.T = 0.5;
    cfg.dt = 1e-3;
    cfg.seed = 77;
    cfg.M = 1.5;
    TrajectoryRecord tight = simulate(basis, cfg, model, u0);
    REQUIRE(tight.stop_hit.has_value());

    SdeConfig loose = cfg;
    loose.M = 4.0;
    TrajectoryRecord wide = simulate(basis, loose, model, u0);
    if (wide.stop_hit) CHECK(*tight.stop_hit <= *wide.stop_hit);

    SdeConfig huge = cfg;
    huge.M = 1e9;
    CHECK(!simulate(basis, huge, model, u0).stop_hit.has_value());

    SdeConfig trunc = cfg;
    trunc.truncate_at_stop = true;
    TrajectoryRecord cut = simulate(basis, trunc, model, u0);
    REQUIRE(cut.stop_hit.has_value());
    CHECK(*cut.stop_hit == *tight.stop_hit);
    // Identical driving noise regardless of truncation.
    CHECK(cut.brownian_digest == tight.brownian_digest);
    REQUIRE(cut.times.size() == tight.times.size());
    bool past = false;
    for (size_t j = 0; j < cut.times.size(); ++j) {
        if (past) {
            for (double c : cut.coeff_history[j]) CHECK(c == 0.0);
            CHECK(cut.energy_history[j].l2sq == 0.0);
        } else {
            for (size_t k = 0; k < cut.coeff_history[j].size(); ++k)
                CHECK(cut.coeff_history[j][k] == tight.coeff_history[j][k]);
        }
        if (cut.times[j] == *cut.stop_hit) past = true;
    }
    CHECK(past);
}

TEST_CASE("configuration validation rejects bad inputs") {
    const SpectralBasis& basis = shared_basis();
    NoiseModel model = quiet_model(basis);
    VelocityField u0 = mixed_state(basis);
    SdeConfig good;
    good.T = 0.01;

    SdeConfig bad = good;
    bad.scheme = "euler";
    CHECK_THROWS_AS(simulate(basis, bad, model, u0), ConfigError);

    bad = good;
    bad.nu = 0.0;
    CHECK_THROWS_AS(simulate(basis, bad, model, u0), ConfigError);
    bad.nu = 1.0;
    CHECK_THROWS_AS(simulate(basis, bad, model, u0), ConfigError);

    bad = good;
    bad.mu = 0.0;
    CHECK_THROWS_AS(simulate(basis, bad, model, u0), ConfigError);

    bad = good;
    bad.dt = 0.0;
    CHECK_THROWS_AS(simulate(basis, bad, model, u0), ConfigError);

    bad = good;
    bad.M = 1.0;
    CHECK_THROWS_AS(simulate(basis, bad, model, u0), ConfigError);

    bad = good;
    bad.n_galerkin = basis.n_modes + 1;
    CHECK_THROWS_AS(simulate(basis, bad, model, u0), ConfigError);
    bad.n_galerkin = -1;
    CHECK_THROWS_AS(simulate(basis, bad, model, u0), ConfigError);

    // Initial energy beyond the configured span.
    bad = good;
    bad.n_galerkin = 2;
    CHECK_THROWS_AS(simulate(basis, bad, model, u0), ConfigError);

    // Advective step bound.
    bad = good;
    bad.dt = 1.0;
    CHECK_THROWS_AS(simulate(basis, bad, model, u0), NumericsError);
}

TEST_CASE("overflow inside a run surfaces as an integration error with the partial record") {
    const SpectralBasis& basis = shared_basis();
    NoiseModel model = build_noise_model(basis, NoiseKind::multiplicative, 1, 1e200, 0.0, 2);
    VelocityField u0 = mixed_state(basis);
    SdeConfig cfg;
    cfg.T = 0.05;
    cfg.dt = 1e-3;
    cfg.mu = 1.0;
    cfg.seed = 5;
    bool threw = false;
    try {
        simulate(basis, cfg, model, u0);
    } catch (const IntegrationError& err) {
        threw = true;
        CHECK(err.step_index >= 1);
        CHECK(err.partial.coeff_history.size() == err.step_index);
        CHECK(err.partial.increments.size() == err.step_index);
        CHECK(err.partial.times.size() == err.step_index);
    }
    CHECK(threw);
}

TEST_CASE("weak-form defect vanishes off the span and shrinks without noise") {
    const SpectralBasis& basis = shared_basis();
    NoiseModel model = quiet_model(basis);
    VelocityField u0 = mixed_state(basis);

    // Test field orthogonal to the active span: every term drops out.
    SdeConfig narrow;
    narrow.n_galerkin = 4;
    narrow.T = 0.05;
    narrow.dt = 1e-3;
    TrajectoryRecord rec = simulate(basis, narrow, model, u0);
    std::vector<double> high(basis.n_modes, 0.0);
    high[7] = 1.0;
    VelocityField phi_out = basis.from_coeffs(std::move(high));
    for (double d : weak_residual(basis, rec, model, narrow, phi_out)) CHECK(d == 0.0);

    // In-span test field: defect is first order in dt.
    std::vector<double> mixed(basis.n_modes, 0.0);
    mixed[0] = 0.7;
    mixed[2] = -0.4;
    VelocityField phi = basis.from_coeffs(std::move(mixed));
    std::vector<double> log2_defect;
    for (double dt : {2e-3, 1e-3, 5e-4}) {
        SdeConfig cfg;
        cfg.T = 0.2;
        cfg.dt = dt;
        TrajectoryRecord r = simulate(basis, cfg, model, u0);
        std::vector<double> defect = weak_residual(basis, r, model, cfg, phi);
        double sup = *std::max_element(defect.begin(), defect.end());
        REQUIRE(sup > 0.0);
        log2_defect.push_back(std::log2(sup));
    }
    CHECK(least_squares_slope(log2_defect) >= 0.9);
}

TEST_CASE("weak-form defect shrinks with the step under transport noise") {
    const SpectralBasis& basis = shared_basis();
    NoiseModel model =
        build_noise_model(basis, NoiseKind::transport_stratonovich, 2, 0.3, 1.0, 13);
    VelocityField u0 = mixed_state(basis);
    std::vector<double> mixed(basis.n_modes, 0.0);
    mixed[1] = 0.6;
    mixed[3] = 0.3;
    VelocityField phi = basis.from_coeffs(std::move(mixed));

    std::vector<double> log2_defect;
    for (double dt : {2e-3, 1e-3, 5e-4}) {
        double acc = 0.0;
        for (std::uint64_t seed = 0; seed < 4; ++seed) {
            SdeConfig cfg;
            cfg.T = 0.1;
            cfg.dt = dt;
            cfg.seed = 100 + seed;
            TrajectoryRecord r = simulate(basis, cfg, model, u0);
            std::vector<double> defect = weak_residual(basis, r, model, cfg, phi);
            acc += *std::max_element(defect.begin(), defect.end());
        }
        REQUIRE(acc > 0.0);
        log2_defect.push_back(std::log2(acc / 4.0));
    }
    CHECK(least_squares_slope(log2_defect) >= 0.4);
}

TEST_CASE("strong self-refinement orders match additive and transport expectations") {
    const SpectralBasis& basis = shared_basis();
    VelocityField u0 = mixed_state(basis);
    SdeConfig cfg;
    cfg.nu = 0.1;
    cfg.T = 0.1;
    cfg.dt = 4e-3;
    const int levels = 4;
    const int paths = 8;

    auto rms_errors = [&](const NoiseModel& model) {
        std::vector<double> acc(levels - 1, 0.0);
        for (int r = 0; r < paths; ++r) {
            std::vector<double> e =
                strong_refinement_errors(basis, cfg, model, u0, levels, 500 + r);
            for (int j = 0; j < levels - 1; ++j) acc[j] += e[j] * e[j];
        }
        std::vector<double> out(levels - 1);
        for (int j = 0; j < levels - 1; ++j) out[j] = std::log2(std::sqrt(acc[j] / paths));
        return out;
    };

    NoiseModel add = build_noise_model(basis, NoiseKind::additive, 2, 0.3, 1.0, 17);
    double slope_add = least_squares_slope(rms_errors(add));
    CHECK(slope_add >= 0.8);
    CHECK(slope_add <= 1.2);

    NoiseModel trans =
        build_noise_model(basis, NoiseKind::transport_stratonovich, 2, 0.3, 1.0, 17);
    double slope_trans = least_squares_slope(rms_errors(trans));
    CHECK(slope_trans >= 0.35);
    CHECK(slope_trans <= 0.65);
}

TEST_CASE("Heun cross-check vanishes at zero amplitude and shrinks with the step") {
    const SpectralBasis& basis = shared_basis();
    VelocityField u0 = mixed_state(basis);

    NoiseModel silent = build_noise_model(basis, NoiseKind::transport_stratonovich, 2, 0.0, 1.0, 9);
    SdeConfig cfg;
    cfg.T = 0.02;
    cfg.dt = 1e-3;
    StratComparison quiet = stratonovich_consistency(basis, cfg, silent, u0, 2, 1);
    // Without noise the two schemes differ only by the deterministic
    // discretization, so every path gives one and the same tiny gap.
    CHECK(quiet.mean_sq_discrepancy <= 1e-9);
    CHECK(quiet.stderr_mean == 0.0);

    NoiseModel model =
        build_noise_model(basis, NoiseKind::transport_stratonovich, 2, 0.3, 1.0, 9);
    std::vector<double> log2_gap;
    for (double dt : {2e-3, 1e-3, 5e-4}) {
        SdeConfig c;
        c.T = 0.05;
        c.dt = dt;
        StratComparison cmp = stratonovich_consistency(basis, c, model, u0, 8, 42);
        REQUIRE(cmp.n_paths == 8);
        REQUIRE(cmp.mean_sq_discrepancy > 0.0);
        CHECK(cmp.stderr_mean >= 0.0);
        log2_gap.push_back(std::log2(cmp.mean_sq_discrepancy));
    }
    CHECK(least_squares_slope(log2_gap) >= 0.5);
}

TEST_CASE("single-mode multiplicative channel matches the closed form") {
    const SpectralBasis& basis = shared_basis();
    const double amp = 0.2;
    NoiseModel model = build_noise_model(basis, NoiseKind::multiplicative, 1, amp, 0.0, 4);
    std::vector<double> c0v(basis.n_modes, 0.0);
    c0v[0] = 0.5;
    VelocityField u0 = basis.from_coeffs(std::move(c0v));

    SdeConfig cfg;
    cfg.nu = 0.1;
    cfg.mu = 0.1;
    cfg.n_galerkin = 1;
    cfg.T = 0.1;
    cfg.dt = 1e-5;
    cfg.seed = 23;
    TrajectoryRecord rec = simulate(basis, cfg, model, u0);

    double w_T = 0.0;
    for (const std::vector<double>& dw : rec.increments) w_T += dw[0];
    const double lambda = basis.eigenvalues[0];
    double expect = 0.5 * std::exp(-cfg.nu * lambda * cfg.T + std::sqrt(cfg.mu) * amp * w_T);
    double got = rec.coeff_history.back()[0];
    CHECK(got == doctest::Approx(expect).epsilon(1e-3));

    // The Heun route agrees with the exponential route on the same channel.
    SdeConfig hc = cfg;
    hc.dt = 1e-4;
    hc.T = 0.05;
    StratComparison cmp = stratonovich_consistency(basis, hc, model, u0, 4, 23);
    CHECK(cmp.mean_sq_discrepancy <= 1e-6);
}

TEST_CASE("Stratonovich comparison rejects kinds without a correction") {
    const SpectralBasis& basis = shared_basis();
    VelocityField u0 = mixed_state(basis);
    SdeConfig cfg;
    cfg.T = 0.01;

    NoiseModel add = build_noise_model(basis, NoiseKind::additive, 2, 0.2, 1.0, 6);
    CHECK_THROWS_AS(stratonovich_consistency(basis, cfg, add, u0, 2, 1), ConfigError);

    NoiseModel ito = build_noise_model(basis, NoiseKind::transport_ito, 2, 0.2, 1.0, 6);
    CHECK_THROWS_AS(stratonovich_consistency(basis, cfg, ito, u0, 2, 1), ConfigError);

    NoiseModel strat =
        build_noise_model(basis, NoiseKind::transport_stratonovich, 2, 0.2, 1.0, 6);
    CHECK_THROWS_AS(stratonovich_consistency(basis, cfg, strat, u0, 0, 1), ConfigError);
    CHECK_THROWS_AS(strong_refinement_errors(basis, cfg, strat, u0, 1, 1), ConfigError);
}
