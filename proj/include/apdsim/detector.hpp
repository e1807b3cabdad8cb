#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "apdsim/params.hpp"
#include "apdsim/waveform.hpp"

namespace apdsim {

// Energy of one 1550 nm photon [J].
inline constexpr double kPhotonEnergy = 1.2816e-19;

// Optical peak power above which the device is outside its absolute maximum
// rating [W], and the matching current bound [A].  Exceeding either only sets
// a flag; the model keeps running.
inline constexpr double kMaxRatedPower = 3.0e-3;
inline constexpr double kMaxRatedCurrent = 5.0e-3;

enum class ClickCause { None, Avalanche, Dark, GainModulation, LinearMode };

std::string to_string(ClickCause c);

// Slowly-varying state carried between gates.
struct DetectorState {
    double temperature = 0.0;   // junction temperature [K]
    double photocurrent = 0.0;  // quasi-static multiplied photocurrent [A]
    double ac_baseline = 0.0;   // restored discriminator baseline [V] (AC coupling)
    double time = 0.0;          // [s]
};

// Result of one gate evaluation.
struct GateOutcome {
    std::uint64_t gate_index = 0;
    double time = 0.0;         // click time (gate start for in-gate clicks) [s]
    bool clicked = false;
    ClickCause cause = ClickCause::None;
    double signal_peak = 0.0;  // absolute peak at the discriminator [V]
    double excess_bias = 0.0;  // effective excess bias during this gate [V]
    bool in_window = false;    // click fell inside the acceptance window
};

// Light delivered while one gate is open.
struct GateStimulus {
    double energy = 0.0;      // optical energy inside the gate [J]
    double peak_power = 0.0;  // highest optical power inside the gate [W]
};

// --- stateless model pieces ---

// Breakdown voltage at the given junction temperature.
double breakdown_voltage(const ApdParams& p, double temperature);

// Linear multiplication factor at the given reverse bias: zero at or below
// punch-through, the multiplication law below breakdown (ceiling applied),
// and the ceiling itself at or above breakdown.
double linear_gain(const ApdParams& p, double bias, double temperature);

// Self-consistent multiplied photocurrent under constant illumination with
// the series resistor dropping bias: solves i = P * S * gain(V - i * R).
// Damped fixed-point iteration with a bisection fallback; when the series
// feedback pins the diode at punch-through the load-line current is returned.
double steady_state_photocurrent(const ApdParams& p, double power, double applied_bias,
                                 double temperature);

// Expected click rate for Poissonian light: rate * (1 - (1 - p_dark) * exp(-mu * eta)).
double count_rate_analytic(double gate_rate, double mu, double eta, double p_dark);

// Excess bias left over after the series resistor drops photocurrent * r_bias.
double effective_excess_bias(const ApdParams& p, double photocurrent, double temperature,
                             bool gate_on);

// Detection efficiency at the given excess bias: eta_0 scaled linearly with
// excess bias relative to nominal, clamped to [0, eta_0].
double detection_efficiency(const ApdParams& p, double excess_bias);

// Peak discriminator voltage of one avalanche at the given excess bias.
double avalanche_amplitude(const ApdParams& p, double excess_bias);

// Peak discriminator voltage of the gate-synchronous linear response under
// constant illumination (difference between gated and ungated photocurrent).
double gain_modulation_amplitude(const ApdParams& p, double power, double temperature);

// Threshold comparison: DC coupling compares the absolute peak, AC coupling
// compares the peak relative to the restored baseline.  The threshold itself
// counts as a click.
bool discriminate(const ApdParams& p, double signal_peak, double ac_baseline);

// Evaluate one gate given the current slow state.  Draws exactly one uniform
// variate from rng.  Does not advance state.time or the slow state; callers
// handle inter-gate evolution.
GateOutcome simulate_gate(const ApdParams& p, DetectorState& state, const GateStimulus& stim,
                          std::mt19937_64& rng, std::uint64_t gate_index);

struct TraceOptions {
    double settle_time = 0.0;         // click/current statistics start here [s]
    bool record_clicks = true;        // keep per-click outcomes
    double sample_interval = 2.5e-5;  // spacing of photocurrent samples [s]
};

// Aggregated result of a full trace.  Statistics cover t >= settle_time;
// photocurrent samples always cover the whole trace so downstream consumers
// can see turn-on transients.
struct TraceResult {
    std::uint64_t gates = 0;  // gates counted (after settle)
    std::uint64_t clicks_in_window = 0;
    std::uint64_t clicks_outside_window = 0;
    std::uint64_t avalanche_clicks = 0;
    std::uint64_t dark_clicks = 0;
    std::uint64_t gain_modulation_clicks = 0;
    std::uint64_t linear_mode_clicks = 0;
    double duration = 0.0;           // counted span [s]
    double count_rate = 0.0;         // in-window clicks / duration [Hz]
    double mean_photocurrent = 0.0;  // time-averaged diode current incl. avalanche charge [A]
    double peak_photocurrent = 0.0;  // highest quasi-static current [A]
    double final_temperature = 0.0;  // [K]
    double peak_temperature = 0.0;   // [K]
    double ac_residual_mean = 0.0;   // mean baseline-subtracted slow level (AC) [V]
    double ac_residual_peak = 0.0;   // largest |baseline-subtracted slow level| [V]
    double sample_interval = 0.0;    // [s]
    std::vector<double> photocurrent_samples;  // per-interval mean current [A]
    std::vector<GateOutcome> clicks;           // clicked gates only (record_clicks)
    bool max_rating_exceeded = false;
};

// Drive the detector with an optical waveform for the given duration.  Time
// advances gate by gate; thermal and baseline relaxation use closed-form
// exponential updates over each constant-power span, so cost is O(gates +
// segments), independent of any sampling step.
TraceResult simulate_trace(const ApdParams& p, const OpticalWaveform& w, double duration,
                           std::uint64_t seed, const TraceOptions& opt = {});

// Stable stream splitting: derive an independent seed for a work item.
std::uint64_t derive_seed(std::uint64_t base_seed, std::uint64_t index);

}  // namespace apdsim
