#include "apdsim/countermeasures.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "apdsim/parallel.hpp"

namespace apdsim {

double expected_photocurrent(double count_rate, double charge_per_avalanche) {
    return count_rate * charge_per_avalanche;
}

MonitorVerdict run_monitor(const ApdParams& p, const TraceResult& trace, const MonitorConfig& cfg) {
    if (cfg.window <= 0.0) throw ConfigError("monitor window must be positive");
    if (cfg.margin_factor <= 0.0) throw ConfigError("monitor margin_factor must be positive");
    const double reference =
        cfg.reference_count_rate > 0.0 ? cfg.reference_count_rate : p.gate_rate;

    MonitorVerdict v;
    v.threshold = cfg.margin_factor * expected_photocurrent(reference, p.charge_per_avalanche);

    const auto& samples = trace.photocurrent_samples;
    const double dt = trace.sample_interval;
    if (samples.empty() || dt <= 0.0) return v;
    const auto window_n = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(cfg.window / dt)));

    double running = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        running += samples[i];
        if (i >= window_n) running -= samples[i - window_n];
        const auto filled = std::min<std::size_t>(i + 1, window_n);
        if (filled < window_n) continue;
        const double mean = running / static_cast<double>(window_n);
        v.peak_windowed_current = std::max(v.peak_windowed_current, mean);
        if (!v.alarmed && mean > v.threshold) {
            v.alarmed = true;
            v.first_alarm_time = static_cast<double>(i + 1) * dt;
        }
    }
    return v;
}

AuditReport audit_config(const ApdParams& p, const AuditLimits& limits) {
    p.validate();
    AuditReport report;
    auto flag = [&](const char* rule, std::string message, double observed, double limit) {
        report.passed = false;
        report.findings.push_back({rule, std::move(message), observed, limit});
    };

    if (p.r_bias > limits.r_bias_max) {
        std::ostringstream msg;
        msg << "series bias resistance " << p.r_bias << " ohm exceeds " << limits.r_bias_max
            << " ohm; strong illumination can starve the gate of excess bias";
        flag(kRuleRBiasMax, msg.str(), p.r_bias, limits.r_bias_max);
    }
    if (p.discrimination_level <= p.capacitive_amplitude) {
        std::ostringstream msg;
        msg << "discrimination level " << p.discrimination_level
            << " V does not clear the gate feedthrough amplitude " << p.capacitive_amplitude
            << " V; every gate would register";
        flag(kRuleBelowCapacitive, msg.str(), p.discrimination_level, p.capacitive_amplitude);
    }
    const double headroom_limit = limits.headroom_factor * p.capacitive_amplitude;
    if (p.discrimination_level > headroom_limit) {
        std::ostringstream msg;
        msg << "discrimination level " << p.discrimination_level << " V exceeds "
            << limits.headroom_factor << "x the gate feedthrough amplitude ("
            << headroom_limit << " V); weakened avalanches could fall below threshold";
        flag(kRuleHeadroom, msg.str(), p.discrimination_level, headroom_limit);
    }
    return report;
}

double recommended_settle_time(const ApdParams& p) {
    double settle = 100.0 * p.gate_period();
    settle = std::max(settle, 5.0 * p.thermal_time_constant);
    if (p.coupling == Coupling::AC) settle = std::max(settle, 5.0 * p.ac_time_constant);
    return settle;
}

namespace {

struct PointEval {
    double count_rate = 0.0;
    double photocurrent = 0.0;
    bool blinded = false;
    bool certifiable = false;
};

PointEval evaluate_point(const ApdParams& p, double power, const GapScanSpec& spec,
                         std::uint64_t seed) {
    const double settle = recommended_settle_time(p);
    const double duration =
        settle + static_cast<double>(spec.gates_per_point) * p.gate_period();
    TraceOptions opt;
    opt.settle_time = settle;
    opt.record_clicks = false;
    TraceResult tr = simulate_trace(p, OpticalWaveform::cw(power, duration), duration, seed, opt);

    PointEval e;
    e.count_rate = tr.count_rate;
    e.photocurrent = tr.mean_photocurrent;
    e.blinded = tr.clicks_in_window == 0;
    const double mu = power * p.gate_width / kPhotonEnergy;
    const double healthy_rate = count_rate_analytic(p.gate_rate, mu, p.eta_0, p.p_dark);
    e.certifiable = healthy_rate * tr.duration >= spec.min_expected_clicks;
    return e;
}

}  // namespace

GapScanResult scan_zero_count_gap(const ApdParams& p, const GapScanSpec& spec) {
    p.validate();
    if (!(spec.power_min > 0.0) || !(spec.power_max > spec.power_min)) {
        throw ConfigError("gap scan power range must satisfy 0 < power_min < power_max");
    }
    if (spec.points_per_decade < 1) throw ConfigError("points_per_decade must be >= 1");
    if (spec.gates_per_point == 0) throw ConfigError("gates_per_point must be positive");
    if (!(spec.edge_tolerance > 0.0)) throw ConfigError("edge_tolerance must be positive");

    const double decades = std::log10(spec.power_max / spec.power_min);
    const auto n_points =
        static_cast<std::size_t>(std::floor(decades * spec.points_per_decade + 1e-9)) + 1;
    std::vector<double> powers(n_points);
    for (std::size_t i = 0; i < n_points; ++i) {
        powers[i] = spec.power_min *
                    std::pow(10.0, static_cast<double>(i) / spec.points_per_decade);
    }
    powers.back() = std::min(powers.back(), spec.power_max);

    GapScanResult result;
    result.points.resize(n_points);
    parallel_for(n_points, spec.threads, [&](std::size_t i) {
        const PointEval e = evaluate_point(p, powers[i], spec, derive_seed(spec.seed, i));
        result.points[i] = {powers[i], e.count_rate, e.photocurrent, e.blinded, e.certifiable};
    });

    // Collect points that certify a silent detector.
    std::vector<std::size_t> zeros;
    for (std::size_t i = 0; i < n_points; ++i) {
        if (result.points[i].blinded && result.points[i].certifiable) zeros.push_back(i);
    }
    if (zeros.empty()) return result;

    const std::size_t first = zeros.front();
    const std::size_t last = zeros.back();
    for (std::size_t i = first; i <= last; ++i) {
        if (!result.points[i].blinded) {
            std::ostringstream msg;
            msg << "zero-click region is not contiguous: clicks at " << result.points[i].power
                << " W inside the candidate span [" << powers[first] << ", " << powers[last]
                << "] W; refine the grid before trusting gap edges";
            throw NumericError(msg.str());
        }
    }

    std::uint64_t probe = 1u << 20;
    auto blind_probe = [&](double power) {
        return evaluate_point(p, power, spec, derive_seed(spec.seed, probe++)).blinded;
    };
    // Log-space bisection between a clicking and a silent power.
    auto refine = [&](double clicking, double silent) {
        double a = clicking, b = silent;  // blind(b) holds, blind(a) does not
        while (std::abs(std::log(b / a)) > std::log1p(spec.edge_tolerance)) {
            const double mid = std::sqrt(a * b);
            if (blind_probe(mid)) {
                b = mid;
            } else {
                a = mid;
            }
        }
        return std::pair<double, double>{a, b};
    };

    ZeroCountGap gap;
    if (first == 0) {
        gap.i_b = powers[0];
    } else {
        gap.i_b = refine(powers[first - 1], powers[first]).second;
    }
    if (last + 1 < n_points) {
        gap.i_r = refine(powers[last + 1], powers[last]).first;
    }
    result.gap = gap;
    return result;
}

std::optional<ZeroCountGap> find_zero_count_gap(const ApdParams& p, const GapScanSpec& spec) {
    return scan_zero_count_gap(p, spec).gap;
}

}  // namespace apdsim
