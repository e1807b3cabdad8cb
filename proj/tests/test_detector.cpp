#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <vector>

#include "apdsim/detector.hpp"
#include "apdsim/params.hpp"
#include "apdsim/waveform.hpp"
#include "support.hpp"

using namespace apdsim;
using testsupport::close_rel;

TEST_CASE("breakdown voltage shifts linearly with temperature") {
    ApdParams p;
    CHECK(breakdown_voltage(p, p.ambient_temp) == doctest::Approx(50.0).epsilon(1e-12));
    // +20 K at 0.1 V/K lifts breakdown to exactly 52 V.
    CHECK(breakdown_voltage(p, p.ambient_temp + 20.0) == doctest::Approx(52.0).epsilon(1e-12));
    CHECK(breakdown_voltage(p, p.ambient_temp - 10.0) == doctest::Approx(49.0).epsilon(1e-12));
}

TEST_CASE("linear gain follows the multiplication law between punch-through and breakdown") {
    ApdParams p;
    p.v_punch_through = 35.0;  // below the probe bias used here
    p.gain_clamp = 1.0e4;

    SUBCASE("zero at and below punch-through") {
        CHECK(linear_gain(p, 35.0, p.ambient_temp) == 0.0);
        CHECK(linear_gain(p, 10.0, p.ambient_temp) == 0.0);
        CHECK(linear_gain(p, -3.0, p.ambient_temp) == 0.0);
    }
    SUBCASE("reference value at 0.8 of breakdown") {
        // 1 / (1 - 0.8^3) = 2.049180327868852...
        const double g = linear_gain(p, 0.8 * 50.0, p.ambient_temp);
        CHECK(g == doctest::Approx(2.049180327868852).epsilon(1e-12));
    }
    SUBCASE("ceiling at and above breakdown") {
        CHECK(linear_gain(p, 50.0, p.ambient_temp) == doctest::Approx(1.0e4));
        CHECK(linear_gain(p, 60.0, p.ambient_temp) == doctest::Approx(1.0e4));
    }
    SUBCASE("monotone nondecreasing in bias") {
        std::mt19937_64 rng(7);
        std::uniform_real_distribution<double> bias(30.0, 55.0);
        for (int k = 0; k < 2000; ++k) {
            double a = bias(rng);
            double b = bias(rng);
            if (a > b) std::swap(a, b);
            CHECK(linear_gain(p, a, p.ambient_temp) <= linear_gain(p, b, p.ambient_temp) + 1e-12);
        }
    }
}

TEST_CASE("steady-state photocurrent solves the series-feedback fixed point") {
    ApdParams p = testsupport::vulnerable_params();
    const double bias = p.v_dc;

    SUBCASE("zero power gives zero current") {
        CHECK(steady_state_photocurrent(p, 0.0, bias, p.ambient_temp) == 0.0);
    }
    SUBCASE("no series resistance reduces to the closed form") {
        ApdParams q = testsupport::correct_params();
        const double power = 2.0e-9;
        const double expected = power * q.responsivity * linear_gain(q, bias, q.ambient_temp);
        CHECK(close_rel(steady_state_photocurrent(q, power, bias, q.ambient_temp), expected, 1e-12));
    }
    SUBCASE("residual of the fixed point is small away from the pin") {
        for (double power : {1e-9, 1e-8, 1e-7, 1e-6, 5e-6, 1e-5}) {
            const double i = steady_state_photocurrent(p, power, bias, p.ambient_temp);
            const double rhs = power * p.responsivity *
                               linear_gain(p, bias - i * p.r_bias, p.ambient_temp);
            CHECK(close_rel(i, rhs, 1e-6));
        }
    }
    SUBCASE("agrees with an independent relaxation solver") {
        // 20 log-spaced powers spanning 1 nW .. 10 uW.
        for (int k = 0; k < 20; ++k) {
            const double power = 1e-9 * std::pow(1e4, k / 19.0);
            const double lib = steady_state_photocurrent(p, power, bias, p.ambient_temp);
            const double ref = testsupport::relaxation_photocurrent(p, power, bias, p.ambient_temp);
            CHECK(close_rel(lib, ref, 1e-6));
        }
    }
    SUBCASE("strong feedback pins the current on the load line") {
        // Far above recovery the diode is driven to punch-through and the
        // current can only be (V - v_punch_through) / r_bias.
        const double i = steady_state_photocurrent(p, 1.0e-3, bias, p.ambient_temp);
        const double pin = (bias - p.v_punch_through) / p.r_bias;
        CHECK(close_rel(i, pin, 1e-6));
    }
    SUBCASE("monotone nondecreasing in power") {
        std::mt19937_64 rng(11);
        std::uniform_real_distribution<double> logp(-12.0, -2.0);
        for (int k = 0; k < 500; ++k) {
            double a = std::pow(10.0, logp(rng));
            double b = std::pow(10.0, logp(rng));
            if (a > b) std::swap(a, b);
            const double ia = steady_state_photocurrent(p, a, bias, p.ambient_temp);
            const double ib = steady_state_photocurrent(p, b, bias, p.ambient_temp);
            CHECK(ia <= ib * (1.0 + 1e-9) + 1e-18);
        }
    }
}

TEST_CASE("analytic count rate") {
    SUBCASE("frozen reference value") {
        // Independently computed: 2e6 * (1 - (1 - 1e-5) * exp(-0.11)).
        const double r = count_rate_analytic(2.0e6, 1.0, 0.11, 1.0e-5);
        CHECK(r == doctest::Approx(208349.64608964943).epsilon(1e-12));
    }
    SUBCASE("two algebraic forms agree to machine precision") {
        std::mt19937_64 rng(23);
        std::uniform_real_distribution<double> logmu(-6.0, 3.0);
        std::uniform_real_distribution<double> eta(0.0, 1.0);
        std::uniform_real_distribution<double> logpd(-8.0, -1.0);
        for (int k = 0; k < 10000; ++k) {
            const double mu = std::pow(10.0, logmu(rng));
            const double e = eta(rng);
            const double pd = std::pow(10.0, logpd(rng));
            const double a = count_rate_analytic(1.0, mu, e, pd);
            const double b = 1.0 - (1.0 - pd) * std::exp(-mu * e);
            CHECK(close_rel(a, b, 1e-13));
        }
    }
    SUBCASE("limits") {
        CHECK(count_rate_analytic(2e6, 0.0, 0.11, 0.0) == 0.0);
        CHECK(count_rate_analytic(2e6, 1e9, 0.11, 0.0) == doctest::Approx(2e6).epsilon(1e-12));
        CHECK(count_rate_analytic(2e6, 0.0, 0.11, 1e-5) == doctest::Approx(20.0).epsilon(1e-9));
    }
}

TEST_CASE("effective excess bias accounts for the resistor drop") {
    ApdParams p = testsupport::vulnerable_params();
    // 19 uA through 100 kOhm eats 1.9 V of the 2.5 V nominal excess.
    const double vex = effective_excess_bias(p, 1.9e-5, p.ambient_temp, true);
    CHECK(vex == doctest::Approx(0.6).epsilon(1e-9));
    const double voff = effective_excess_bias(p, 0.0, p.ambient_temp, false);
    CHECK(voff == doctest::Approx(48.5 - 50.0).epsilon(1e-9));
}

TEST_CASE("detection efficiency scales with excess bias and clamps") {
    ApdParams p;
    const double nominal = p.nominal_excess_bias();
    CHECK(nominal == doctest::Approx(2.5).epsilon(1e-12));
    CHECK(detection_efficiency(p, nominal) == doctest::Approx(0.11).epsilon(1e-12));
    CHECK(detection_efficiency(p, 0.5 * nominal) == doctest::Approx(0.055).epsilon(1e-12));
    CHECK(detection_efficiency(p, 2.0 * nominal) == doctest::Approx(0.11).epsilon(1e-12));
    CHECK(detection_efficiency(p, 0.0) == 0.0);
    CHECK(detection_efficiency(p, -1.0) == 0.0);
}

TEST_CASE("avalanche amplitude is linear in excess bias and zero below breakdown") {
    ApdParams p;
    CHECK(avalanche_amplitude(p, 2.5) == doctest::Approx(0.0656 * 2.5).epsilon(1e-12));
    CHECK(avalanche_amplitude(p, 0.0) == 0.0);
    CHECK(avalanche_amplitude(p, -0.4) == 0.0);
}

TEST_CASE("discrimination: threshold itself clicks, AC uses the baseline") {
    ApdParams p;
    p.coupling = Coupling::DC;
    CHECK(discriminate(p, 0.040, 0.0));
    CHECK(discriminate(p, 0.041, 0.0));
    CHECK_FALSE(discriminate(p, 0.0399, 0.0));
    p.coupling = Coupling::AC;
    // Peak 2.30 V over a 2.28 V restored baseline is only 20 mV of swing.
    CHECK_FALSE(discriminate(p, 2.30, 2.28));
    CHECK(discriminate(p, 2.32, 2.28));
}

TEST_CASE("single gates: closed threshold and channel attribution") {
    SUBCASE("feedthrough equal to the threshold registers every gate") {
        ApdParams p = testsupport::correct_params();
        p.discrimination_level = p.capacitive_amplitude;  // exactly at threshold
        p.p_dark = 0.0;
        DetectorState st{p.ambient_temp, 0.0, 0.0, 0.0};
        std::mt19937_64 rng(3);
        for (int k = 0; k < 100; ++k) {
            const GateOutcome out = simulate_gate(p, st, {}, rng, k);
            CHECK(out.clicked);
            CHECK(out.cause == ClickCause::GainModulation);
        }
    }
    SUBCASE("dark detector at nominal bias clicks only on dark draws") {
        ApdParams p = testsupport::correct_params();
        DetectorState st{p.ambient_temp, 0.0, 0.0, 0.0};
        std::mt19937_64 rng(5);
        int clicks = 0;
        const int n = 200000;
        for (int k = 0; k < n; ++k) {
            const GateOutcome out = simulate_gate(p, st, {}, rng, k);
            if (out.clicked) {
                ++clicks;
                CHECK(out.cause == ClickCause::Dark);
            }
        }
        // Binomial(n, 1e-5): expect 2, allow a generous band.
        CHECK(clicks >= 0);
        CHECK(clicks <= 12);
    }
    SUBCASE("bright gate at full excess bias clicks as an avalanche") {
        ApdParams p = testsupport::correct_params();
        DetectorState st{p.ambient_temp, 0.0, 0.0, 0.0};
        std::mt19937_64 rng(5);
        GateStimulus stim;
        stim.energy = 1.0e-14;  // tens of thousands of photons
        stim.peak_power = stim.energy / p.gate_width;
        const GateOutcome out = simulate_gate(p, st, stim, rng, 0);
        CHECK(out.clicked);
        CHECK(out.cause == ClickCause::Avalanche);
        CHECK(out.excess_bias == doctest::Approx(2.5).epsilon(1e-9));
        CHECK(out.signal_peak == doctest::Approx(0.0656 * 2.5).epsilon(1e-6));
    }
}

TEST_CASE("Monte Carlo click fraction matches the analytic rate within 3 sigma") {
    ApdParams p = testsupport::correct_params();
    for (double target_mu_eta : {0.01, 0.1, 1.0}) {
        const double mu = target_mu_eta / p.eta_0;
        const double power = mu * kPhotonEnergy / p.gate_width;
        const auto gates = static_cast<std::uint64_t>(1000000);
        const double duration = (static_cast<double>(gates) + 0.5) * p.gate_period();
        TraceOptions opt;
        opt.record_clicks = false;
        const TraceResult tr =
            simulate_trace(p, OpticalWaveform::cw(power, duration), duration, 42, opt);
        const double p_click = count_rate_analytic(1.0, mu, p.eta_0, p.p_dark);
        const double p_hat =
            static_cast<double>(tr.clicks_in_window) / static_cast<double>(tr.gates);
        const double sigma = std::sqrt(p_click * (1.0 - p_click) / static_cast<double>(tr.gates));
        INFO("mu*eta = " << target_mu_eta << " p = " << p_click << " p_hat = " << p_hat);
        CHECK(std::abs(p_hat - p_click) <= 3.0 * sigma);
    }
}

TEST_CASE("traces are deterministic for a fixed seed") {
    ApdParams p = testsupport::vulnerable_params();
    const double duration = 2.0e-3;
    const OpticalWaveform w = OpticalWaveform::cw(5.0e-10, duration);
    TraceOptions opt;
    opt.settle_time = 1.0e-4;
    const TraceResult a = simulate_trace(p, w, duration, 99, opt);
    const TraceResult b = simulate_trace(p, w, duration, 99, opt);
    CHECK(a.clicks_in_window == b.clicks_in_window);
    CHECK(a.mean_photocurrent == b.mean_photocurrent);
    CHECK(a.final_temperature == b.final_temperature);
    REQUIRE(a.clicks.size() == b.clicks.size());
    for (std::size_t i = 0; i < a.clicks.size(); ++i) {
        CHECK(a.clicks[i].gate_index == b.clicks[i].gate_index);
        CHECK(a.clicks[i].time == b.clicks[i].time);
        CHECK(a.clicks[i].cause == b.clicks[i].cause);
    }
    REQUIRE(a.photocurrent_samples.size() == b.photocurrent_samples.size());
    for (std::size_t i = 0; i < a.photocurrent_samples.size(); ++i) {
        CHECK(a.photocurrent_samples[i] == b.photocurrent_samples[i]);
    }
    const TraceResult c = simulate_trace(p, w, duration, 100, opt);
    auto gate_indices = [](const TraceResult& tr) {
        std::vector<std::uint64_t> v;
        for (const auto& click : tr.clicks) v.push_back(click.gate_index);
        return v;
    };
    CHECK(gate_indices(c) != gate_indices(a));
}

TEST_CASE("AC baseline restores to zero mean under steady light") {
    ApdParams p = testsupport::vulnerable_params();
    const double power = 1.0e-6;  // bright but below the blinding onset
    const double duration = 4.0e-3;
    TraceOptions opt;
    opt.settle_time = 2.0e-3;
    opt.record_clicks = false;
    const TraceResult tr =
        simulate_trace(p, OpticalWaveform::cw(power, duration), duration, 5, opt);
    const double scale = p.r_sense * tr.mean_photocurrent;
    REQUIRE(scale > 1.0e-3);
    CHECK(std::abs(tr.ac_residual_mean) <= 1.0e-3 * scale);
}

TEST_CASE("gated linear response amplitude") {
    ApdParams p = testsupport::vulnerable_params();
    SUBCASE("negligible at single-photon powers") {
        CHECK(gain_modulation_amplitude(p, 1.0e-8, p.ambient_temp) < 1.0e-3);
        ApdParams q = testsupport::correct_params();
        CHECK(gain_modulation_amplitude(q, 1.0e-8, q.ambient_temp) < 1.0e-3);
    }
    SUBCASE("grows under bright light") {
        CHECK(gain_modulation_amplitude(p, 1.0e-6, p.ambient_temp) > 0.01);
    }
    SUBCASE("bounded by the load line") {
        // Both currents pin eventually; the difference cannot exceed
        // gate_amplitude / r_bias.
        const double ceiling = p.r_sense * p.gate_amplitude / p.r_bias;
        for (double power : {1e-5, 1e-4, 1e-3, 1e-2}) {
            CHECK(gain_modulation_amplitude(p, power, p.ambient_temp) <= ceiling * (1 + 1e-9));
        }
    }
}

TEST_CASE("waveforms: power lookup, integrals, and validation") {
    SUBCASE("cw helper") {
        const OpticalWaveform w = OpticalWaveform::cw(2.0e-6, 1.0e-3);
        CHECK(w.power_at(5.0e-4) == doctest::Approx(2.0e-6));
        CHECK(w.power_at(2.0e-3) == 0.0);
        CHECK(w.total_energy() == doctest::Approx(2.0e-9).epsilon(1e-12));
        CHECK(w.energy_between(0.0, 5.0e-4) == doctest::Approx(1.0e-9).epsilon(1e-12));
    }
    SUBCASE("piecewise integral matches a closed form") {
        std::vector<WaveformSegment> segs;
        for (int k = 0; k < 100; ++k) {
            segs.push_back({k * 1e-6, 4e-7, (k % 3 + 1) * 1e-6});
        }
        const OpticalWaveform w(std::move(segs));
        double expected = 0.0;
        for (int k = 0; k < 100; ++k) expected += 4e-7 * ((k % 3 + 1) * 1e-6);
        CHECK(close_rel(w.total_energy(), expected, 1e-12));
        CHECK(close_rel(w.energy_between(0.0, 1.0), expected, 1e-12));
        // Partial overlap of one segment.
        CHECK(close_rel(w.energy_between(1e-6, 1.2e-6), 2e-6 * 2e-7, 1e-12));
        CHECK(w.peak_power_between(0.0, 1.0) == doctest::Approx(3e-6));
    }
    SUBCASE("overlapping segments are rejected") {
        std::vector<WaveformSegment> segs = {{0.0, 2e-6, 1e-6}, {1e-6, 2e-6, 1e-6}};
        CHECK_THROWS_AS(OpticalWaveform(std::move(segs)), ConfigError);
    }
    SUBCASE("negative power is rejected") {
        std::vector<WaveformSegment> segs = {{0.0, 2e-6, -1e-6}};
        CHECK_THROWS_AS(OpticalWaveform(std::move(segs)), ConfigError);
    }
}

TEST_CASE("parameter validation and JSON round trip") {
    SUBCASE("round trip preserves every field") {
        ApdParams p = testsupport::clavis2_params();
        p.eta_0 = 0.107;
        p.thermal_resistance = 1.23e4;
        const ApdParams q = params_from_json_text(params_to_json_text(p));
        CHECK(q.eta_0 == p.eta_0);
        CHECK(q.thermal_resistance == p.thermal_resistance);
        CHECK(q.r_bias == p.r_bias);
        CHECK(q.discrimination_level == p.discrimination_level);
        CHECK(q.coupling == p.coupling);
        CHECK(q.acceptance_window == p.acceptance_window);
        CHECK(params_to_json_text(q) == params_to_json_text(p));
    }
    SUBCASE("unknown fields are rejected by name") {
        CHECK_THROWS_WITH_AS(params_from_json_text("{\"r_bais\": 100.0}"),
                             doctest::Contains("r_bais"), ConfigError);
    }
    SUBCASE("invalid values are rejected") {
        ApdParams p;
        p.eta_0 = 1.5;
        CHECK_THROWS_AS(p.validate(), ConfigError);
        p = ApdParams{};
        p.gate_width = 1.0e-6;  // longer than the 0.5 us period
        CHECK_THROWS_AS(p.validate(), ConfigError);
        p = ApdParams{};
        p.v_punch_through = 55.0;
        CHECK_THROWS_AS(p.validate(), ConfigError);
    }
    SUBCASE("coupling strings") {
        CHECK(coupling_from_string("AC") == Coupling::AC);
        CHECK(coupling_from_string("DC") == Coupling::DC);
        CHECK_THROWS_AS(coupling_from_string("ac"), ConfigError);
    }
}

TEST_CASE("seed derivation separates work items") {
    CHECK(derive_seed(1, 0) != derive_seed(1, 1));
    CHECK(derive_seed(1, 0) != derive_seed(2, 0));
    CHECK(derive_seed(7, 3) == derive_seed(7, 3));
}
