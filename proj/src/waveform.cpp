#include "apdsim/waveform.hpp"

#include <algorithm>
#include <cmath>

namespace apdsim {

OpticalWaveform::OpticalWaveform(std::vector<WaveformSegment> segments)
    : segments_(std::move(segments)) {
    std::sort(segments_.begin(), segments_.end(),
              [](const WaveformSegment& a, const WaveformSegment& b) { return a.start < b.start; });
    double prev_end = -1.0;
    for (const auto& s : segments_) {
        if (!std::isfinite(s.start) || !std::isfinite(s.duration) || !std::isfinite(s.power)) {
            throw ConfigError("waveform segment has a non-finite value");
        }
        if (s.start < 0.0) throw ConfigError("waveform segment starts before t = 0");
        if (s.duration <= 0.0) throw ConfigError("waveform segment duration must be positive");
        if (s.power < 0.0) throw ConfigError("waveform segment power must be non-negative");
        // Allow exact abutment; reject genuine overlap.
        if (s.start < prev_end - 1e-18) throw ConfigError("waveform segments overlap");
        prev_end = s.start + s.duration;
    }
    cum_energy_.resize(segments_.size() + 1, 0.0);
    for (std::size_t i = 0; i < segments_.size(); ++i) {
        cum_energy_[i + 1] = cum_energy_[i] + segments_[i].power * segments_[i].duration;
    }
}

OpticalWaveform OpticalWaveform::cw(double power, double duration) {
    if (power <= 0.0 || duration <= 0.0) return OpticalWaveform{};
    return OpticalWaveform({{0.0, duration, power}});
}

double OpticalWaveform::power_at(double t) const {
    auto it = std::upper_bound(segments_.begin(), segments_.end(), t,
                               [](double v, const WaveformSegment& s) { return v < s.start; });
    if (it == segments_.begin()) return 0.0;
    const auto& s = *(it - 1);
    return (t < s.start + s.duration) ? s.power : 0.0;
}

double OpticalWaveform::energy_between(double t0, double t1) const {
    if (t1 <= t0 || segments_.empty()) return 0.0;
    // First segment whose end lies beyond t0.
    auto lo = std::lower_bound(segments_.begin(), segments_.end(), t0,
                               [](const WaveformSegment& s, double v) { return s.start + s.duration <= v; });
    double e = 0.0;
    for (auto it = lo; it != segments_.end() && it->start < t1; ++it) {
        const double a = std::max(t0, it->start);
        const double b = std::min(t1, it->start + it->duration);
        if (b > a) e += it->power * (b - a);
    }
    return e;
}

double OpticalWaveform::peak_power_between(double t0, double t1) const {
    if (t1 <= t0 || segments_.empty()) return 0.0;
    auto lo = std::lower_bound(segments_.begin(), segments_.end(), t0,
                               [](const WaveformSegment& s, double v) { return s.start + s.duration <= v; });
    double peak = 0.0;
    for (auto it = lo; it != segments_.end() && it->start < t1; ++it) {
        peak = std::max(peak, it->power);
    }
    return peak;
}

double OpticalWaveform::total_energy() const { return cum_energy_.empty() ? 0.0 : cum_energy_.back(); }

double OpticalWaveform::peak_power() const {
    double peak = 0.0;
    for (const auto& s : segments_) peak = std::max(peak, s.power);
    return peak;
}

double OpticalWaveform::end_time() const {
    return segments_.empty() ? 0.0 : segments_.back().start + segments_.back().duration;
}

}  // namespace apdsim
