#include "apdsim/detector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace apdsim {

std::string to_string(ClickCause c) {
    switch (c) {
        case ClickCause::None: return "none";
        case ClickCause::Avalanche: return "avalanche";
        case ClickCause::Dark: return "dark";
        case ClickCause::GainModulation: return "gain_modulation";
        case ClickCause::LinearMode: return "linear_mode";
    }
    return "none";
}

double breakdown_voltage(const ApdParams& p, double temperature) {
    return p.v_breakdown_0 + p.temp_coeff_vb * (temperature - p.ambient_temp);
}

double linear_gain(const ApdParams& p, double bias, double temperature) {
    if (bias <= p.v_punch_through) return 0.0;
    const double vb = breakdown_voltage(p, temperature);
    if (bias >= vb) return p.gain_clamp;
    const double x = std::pow(bias / vb, p.miller_exponent);
    return std::min(1.0 / (1.0 - x), p.gain_clamp);
}

double steady_state_photocurrent(const ApdParams& p, double power, double applied_bias,
                                 double temperature) {
    if (power <= 0.0) return 0.0;
    const double primary = power * p.responsivity;
    auto f = [&](double i) { return primary * linear_gain(p, applied_bias - i * p.r_bias, temperature); };
    const double i0 = f(0.0);
    if (p.r_bias == 0.0 || i0 == 0.0) return i0;

    // Damped fixed-point iteration.  The right-hand side is nonincreasing in
    // i, so the damped map contracts whenever a smooth interior root exists.
    const double lambda = 0.5;
    double i = i0;
    for (int k = 0; k < 500; ++k) {
        const double next = (1.0 - lambda) * i + lambda * f(i);
        const double scale = std::max(std::abs(next), 1e-30);
        if (std::abs(next - i) <= 1e-9 * scale) {
            i = next;
            break;
        }
        i = next;
    }
    if (std::abs(f(i) - i) <= 1e-6 * std::max(i, 1e-30)) return i;

    // Fallback: bisection on g(i) = f(i) - i.  g(0) > 0 and g(hi) <= 0 with
    // hi the largest current the multiplier can deliver.  When the series
    // feedback drives the diode to punch-through there is no smooth root and
    // the bisection converges onto the load-line pin instead.
    double lo = 0.0;
    double hi = primary * p.gain_clamp;
    if (f(hi) - hi > 0.0) throw NumericError("photocurrent solver failed to bracket a root");
    for (int k = 0; k < 200; ++k) {
        const double mid = 0.5 * (lo + hi);
        if (f(mid) - mid > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo <= 1e-13 * std::max(hi, 1e-30)) break;
    }
    return 0.5 * (lo + hi);
}

double count_rate_analytic(double gate_rate, double mu, double eta, double p_dark) {
    const double p_opt = -std::expm1(-mu * eta);
    return gate_rate * (p_opt + p_dark - p_opt * p_dark);
}

double effective_excess_bias(const ApdParams& p, double photocurrent, double temperature,
                             bool gate_on) {
    const double applied = p.v_dc + (gate_on ? p.gate_amplitude : 0.0) - photocurrent * p.r_bias;
    return applied - breakdown_voltage(p, temperature);
}

double detection_efficiency(const ApdParams& p, double excess_bias) {
    const double nominal = p.nominal_excess_bias();
    if (nominal <= 0.0) return 0.0;
    const double fraction = std::clamp(excess_bias / nominal, 0.0, 1.0);
    return p.eta_0 * fraction;
}

double avalanche_amplitude(const ApdParams& p, double excess_bias) {
    return p.avalanche_gain_constant * std::max(excess_bias, 0.0);
}

double gain_modulation_amplitude(const ApdParams& p, double power, double temperature) {
    const double on = steady_state_photocurrent(p, power, p.v_dc + p.gate_amplitude, temperature);
    const double off = steady_state_photocurrent(p, power, p.v_dc, temperature);
    return p.r_sense * std::max(on - off, 0.0);
}

bool discriminate(const ApdParams& p, double signal_peak, double ac_baseline) {
    const double reference = (p.coupling == Coupling::AC) ? ac_baseline : 0.0;
    return signal_peak - reference >= p.discrimination_level;
}

namespace {

// Everything one gate needs, precomputed from the slow state and the light.
struct GateChannels {
    double excess_bias = 0.0;
    double p_optical = 0.0;     // probability of a photon-triggered avalanche
    double p_any = 0.0;         // probability of any avalanche (photon or dark)
    double avalanche_amp = 0.0; // discriminator amplitude of an avalanche [V]
    double switching_amp = 0.0; // discriminator amplitude of the gated linear response [V]
    double i_on = 0.0;          // gated quasi-static current [A]
};

GateChannels make_channels(const ApdParams& p, double i_pre, double temperature, double energy,
                           double i_on) {
    GateChannels c;
    c.i_on = i_on;
    c.excess_bias = effective_excess_bias(p, i_pre, temperature, true);
    const double eta = detection_efficiency(p, c.excess_bias);
    const double mu = std::max(energy, 0.0) / kPhotonEnergy;
    c.p_optical = -std::expm1(-mu * eta);
    c.p_any = c.p_optical + p.p_dark - c.p_optical * p.p_dark;
    c.avalanche_amp = avalanche_amplitude(p, c.excess_bias);
    double sw = p.r_sense * std::max(i_on - i_pre, 0.0);
    if (c.excess_bias > 0.0) {
        // Above breakdown the gated transient is an avalanche that the quench
        // electronics terminate after a fixed released charge.
        sw = std::min(sw, p.r_sense * p.charge_per_avalanche / p.gate_width);
    }
    c.switching_amp = sw;
    return c;
}

GateOutcome resolve_gate(const ApdParams& p, double i_pre, double ac_baseline,
                         const GateChannels& c, double u, std::uint64_t gate_index, double time) {
    const bool avalanche_drawn = u < c.p_any;
    const bool optical = u < c.p_optical;
    const double av = avalanche_drawn ? c.avalanche_amp : 0.0;
    const double pulse = std::max({p.capacitive_amplitude, c.switching_amp, av});

    GateOutcome out;
    out.gate_index = gate_index;
    out.time = time;
    out.excess_bias = c.excess_bias;
    out.signal_peak = p.r_sense * i_pre + pulse;
    out.clicked = discriminate(p, out.signal_peak, ac_baseline);
    out.in_window = true;  // gate clicks coincide with the window start
    if (out.clicked) {
        const double reference = (p.coupling == Coupling::AC) ? ac_baseline : 0.0;
        const double needed = p.discrimination_level + reference - p.r_sense * i_pre;
        const bool av_crosses = avalanche_drawn && av >= needed;
        const bool sw_crosses = c.switching_amp >= needed;
        if (av_crosses && (!sw_crosses || av >= c.switching_amp)) {
            out.cause = optical ? ClickCause::Avalanche : ClickCause::Dark;
        } else {
            // Both the gated linear response and the gate-edge feedthrough are
            // deterministic electrical responses to the gate.
            out.cause = ClickCause::GainModulation;
        }
    }
    return out;
}

}  // namespace

GateOutcome simulate_gate(const ApdParams& p, DetectorState& state, const GateStimulus& stim,
                          std::mt19937_64& rng, std::uint64_t gate_index) {
    const double i_on = steady_state_photocurrent(p, stim.peak_power, p.v_dc + p.gate_amplitude,
                                                  state.temperature);
    const GateChannels c = make_channels(p, state.photocurrent, state.temperature, stim.energy, i_on);
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    return resolve_gate(p, state.photocurrent, state.ac_baseline, c, u, gate_index, state.time);
}

std::uint64_t derive_seed(std::uint64_t base_seed, std::uint64_t index) {
    std::uint64_t z = base_seed + 0x9E3779B97F4A7C15ull * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

namespace {

// Memo for steady-state solves.  Entries stay valid while the junction
// temperature remains inside a tolerance band, so steady stretches of a trace
// cost one solve regardless of length.
class SspCache {
  public:
    explicit SspCache(const ApdParams& p) : p_(p) {}

    double get(double power, bool gate_on, double temperature) {
        if (power <= 0.0) return 0.0;
        const double tol = 2e-3 + 2e-3 * std::abs(temperature - p_.ambient_temp);
        for (auto& e : entries_) {
            if (e.power == power && e.gate_on == gate_on &&
                std::abs(e.temperature - temperature) <= tol) {
                return e.value;
            }
        }
        const double bias = p_.v_dc + (gate_on ? p_.gate_amplitude : 0.0);
        const double value = steady_state_photocurrent(p_, power, bias, temperature);
        if (entries_.size() >= 64) entries_.clear();
        entries_.push_back({power, temperature, value, gate_on});
        return value;
    }

  private:
    struct Entry {
        double power;
        double temperature;
        double value;
        bool gate_on;
    };
    const ApdParams& p_;
    std::vector<Entry> entries_;
};

// Memo for exp(-dt / tau) factors; traces revisit the same span lengths.
class DecayCache {
  public:
    explicit DecayCache(double tau) : tau_(tau) {}
    double get(double dt) {
        for (const auto& e : entries_) {
            if (e.dt == dt) return e.factor;
        }
        const double f = std::exp(-dt / tau_);
        if (entries_.size() >= 64) entries_.clear();
        entries_.push_back({dt, f});
        return f;
    }

  private:
    struct Entry {
        double dt;
        double factor;
    };
    double tau_;
    std::vector<Entry> entries_;
};

}  // namespace

TraceResult simulate_trace(const ApdParams& p, const OpticalWaveform& w, double duration,
                           std::uint64_t seed, const TraceOptions& opt) {
    p.validate();
    const double period = p.gate_period();
    const double gate_width = p.gate_width;
    const auto n_periods = static_cast<std::uint64_t>(std::floor(duration / period + 1e-9));
    if (n_periods == 0) throw ConfigError("trace duration is shorter than one gate period");
    if (opt.sample_interval <= 0.0) throw ConfigError("sample_interval must be positive");
    const double t_end = static_cast<double>(n_periods) * period;
    const std::uint64_t settle_idx =
        std::min<std::uint64_t>(n_periods, static_cast<std::uint64_t>(
            std::ceil(std::max(opt.settle_time, 0.0) / period - 1e-9)));

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    SspCache ssp(p);
    DecayCache thermal_decay(p.thermal_time_constant);
    DecayCache baseline_decay(p.ac_time_constant);
    const bool ac = p.coupling == Coupling::AC;

    DetectorState st;
    st.temperature = p.ambient_temp;
    st.photocurrent = 0.0;
    st.ac_baseline = 0.0;
    st.time = 0.0;

    TraceResult res;
    res.sample_interval = opt.sample_interval;
    const auto n_bins =
        static_cast<std::size_t>(std::ceil(t_end / opt.sample_interval - 1e-9));
    std::vector<double> bin_charge(std::max<std::size_t>(n_bins, 1), 0.0);
    auto deposit = [&](double t0, double t1, double current) {
        // Spread current * dt over the sample bins it spans.
        if (t1 <= t0 || current == 0.0) return;
        std::size_t b = std::min<std::size_t>(
            static_cast<std::size_t>(t0 / opt.sample_interval), bin_charge.size() - 1);
        double t = t0;
        while (t < t1) {
            const double edge = std::min(t1, static_cast<double>(b + 1) * opt.sample_interval);
            bin_charge[b] += current * (edge - t);
            t = edge;
            if (edge < t1 && b + 1 < bin_charge.size()) ++b;
        }
    };
    auto deposit_point = [&](double t, double charge) {
        const std::size_t b = std::min<std::size_t>(
            static_cast<std::size_t>(t / opt.sample_interval), bin_charge.size() - 1);
        bin_charge[b] += charge;
    };

    const auto& segs = w.segments();
    std::size_t cursor = 0;

    double counted_charge = 0.0;
    double ac_residual_sum = 0.0;
    double ac_residual_peak = 0.0;
    std::uint64_t residual_samples = 0;
    bool armed = true;  // slow-level discriminator re-arms below threshold

    for (std::uint64_t k = 0; k < n_periods; ++k) {
        const double t0 = static_cast<double>(k) * period;
        const double t1 = t0 + period;
        const bool counted = k >= settle_idx;
        bool clicked_this_period = false;

        // --- the gate itself ---
        const double gate_energy = w.energy_between(t0, t0 + gate_width);
        const double gate_peak = w.peak_power_between(t0, t0 + gate_width);
        const double i_on = ssp.get(gate_peak, true, st.temperature);
        const GateChannels ch = make_channels(p, st.photocurrent, st.temperature, gate_energy, i_on);
        const double u = uniform(rng);
        GateOutcome out = resolve_gate(p, st.photocurrent, st.ac_baseline, ch, u, k, t0);
        if (gate_peak > kMaxRatedPower || i_on > kMaxRatedCurrent) res.max_rating_exceeded = true;
        res.peak_photocurrent = std::max(res.peak_photocurrent, i_on);
        if (out.clicked) {
            clicked_this_period = true;
            if (counted) {
                ++res.clicks_in_window;
                switch (out.cause) {
                    case ClickCause::Avalanche: ++res.avalanche_clicks; break;
                    case ClickCause::Dark: ++res.dark_clicks; break;
                    case ClickCause::GainModulation: ++res.gain_modulation_clicks; break;
                    default: break;
                }
                if (opt.record_clicks) res.clicks.push_back(out);
            }
            if (ch.excess_bias > 0.0) {
                // A quenched avalanche releases a fixed charge.
                if (counted) counted_charge += p.charge_per_avalanche;
                deposit_point(t0, p.charge_per_avalanche);
            }
        }
        if (ch.excess_bias <= 0.0 && ch.i_on > st.photocurrent) {
            // Below breakdown the gate briefly lifts the linear photocurrent.
            const double extra = (ch.i_on - st.photocurrent) * gate_width;
            if (counted) counted_charge += extra;
            deposit_point(t0, extra);
        }

        // --- slow evolution across the period ---
        double t = t0;
        while (t < t1 - 1e-15) {
            while (cursor < segs.size() && segs[cursor].start + segs[cursor].duration <= t + 1e-15) {
                ++cursor;
            }
            double power = 0.0;
            double span_end = t1;
            if (cursor < segs.size()) {
                if (segs[cursor].start <= t + 1e-15) {
                    power = segs[cursor].power;
                    span_end = std::min(t1, segs[cursor].start + segs[cursor].duration);
                } else {
                    span_end = std::min(t1, segs[cursor].start);
                }
            }
            const double dt = span_end - t;
            if (dt <= 0.0) break;

            if (power > kMaxRatedPower) res.max_rating_exceeded = true;

            const double i_new = ssp.get(power, false, st.temperature);
            if (i_new > kMaxRatedCurrent) res.max_rating_exceeded = true;
            res.peak_photocurrent = std::max(res.peak_photocurrent, i_new);

            // Edge-triggered response of the discriminator to the slow level.
            const double slow_level = p.r_sense * i_new;
            const double rel = slow_level - (ac ? st.ac_baseline : 0.0);
            if (rel < p.discrimination_level) {
                armed = true;
            } else if (armed) {
                armed = false;
                if (!clicked_this_period) {
                    clicked_this_period = true;
                    const double offset = t - t0;
                    const bool in_window = offset < p.acceptance_window;
                    if (counted) {
                        if (in_window) {
                            ++res.clicks_in_window;
                        } else {
                            ++res.clicks_outside_window;
                        }
                        ++res.linear_mode_clicks;
                        if (opt.record_clicks) {
                            GateOutcome lin;
                            lin.gate_index = k;
                            lin.time = t;
                            lin.clicked = true;
                            lin.cause = ClickCause::LinearMode;
                            lin.signal_peak = slow_level;
                            lin.excess_bias = ch.excess_bias;
                            lin.in_window = in_window;
                            res.clicks.push_back(lin);
                        }
                    }
                }
            }

            st.photocurrent = i_new;
            if (counted) counted_charge += i_new * dt;
            deposit(t, span_end, i_new);

            // Closed-form relaxation over the span.
            const double t_target = p.ambient_temp + power * p.thermal_resistance;
            const double a_th = thermal_decay.get(dt);
            st.temperature = t_target + (st.temperature - t_target) * a_th;
            res.peak_temperature = std::max(res.peak_temperature, st.temperature);
            if (ac) {
                const double a_b = baseline_decay.get(dt);
                st.ac_baseline = slow_level + (st.ac_baseline - slow_level) * a_b;
            }

            t = span_end;
        }
        st.time = t1;

        if (counted) {
            const double rel_now = p.r_sense * st.photocurrent - (ac ? st.ac_baseline : 0.0);
            ac_residual_sum += rel_now;
            ac_residual_peak = std::max(ac_residual_peak, std::abs(rel_now));
            ++residual_samples;
        }
    }

    res.gates = n_periods - settle_idx;
    res.duration = static_cast<double>(res.gates) * period;
    res.count_rate = res.duration > 0.0 ? static_cast<double>(res.clicks_in_window) / res.duration : 0.0;
    res.mean_photocurrent = res.duration > 0.0 ? counted_charge / res.duration : 0.0;
    res.final_temperature = st.temperature;
    res.peak_temperature = std::max(res.peak_temperature, st.temperature);
    res.ac_residual_mean = residual_samples > 0 ? ac_residual_sum / static_cast<double>(residual_samples) : 0.0;
    res.ac_residual_peak = ac_residual_peak;
    res.photocurrent_samples.resize(bin_charge.size());
    for (std::size_t i = 0; i < bin_charge.size(); ++i) {
        const double lo = static_cast<double>(i) * opt.sample_interval;
        const double width = std::min(opt.sample_interval, t_end - lo);
        res.photocurrent_samples[i] = width > 0.0 ? bin_charge[i] / width : 0.0;
    }
    return res;
}

}  // namespace apdsim
