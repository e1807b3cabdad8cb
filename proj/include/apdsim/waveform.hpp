#pragma once

#include <cstddef>
#include <vector>

#include "apdsim/params.hpp"

namespace apdsim {

// One span of constant optical power.  Power is zero outside all segments.
struct WaveformSegment {
    double start = 0.0;     // [s]
    double duration = 0.0;  // [s]
    double power = 0.0;     // [W]
};

// Piecewise-constant optical power versus time.  Segments are kept sorted and
// non-overlapping; prefix sums make energy integrals O(log n).
class OpticalWaveform {
  public:
    OpticalWaveform() = default;
    explicit OpticalWaveform(std::vector<WaveformSegment> segments);

    static OpticalWaveform cw(double power, double duration);

    double power_at(double t) const;
    // Integral of power over [t0, t1).
    double energy_between(double t0, double t1) const;
    double peak_power_between(double t0, double t1) const;
    double total_energy() const;
    double peak_power() const;
    double end_time() const;
    const std::vector<WaveformSegment>& segments() const { return segments_; }

  private:
    std::vector<WaveformSegment> segments_;
    std::vector<double> cum_energy_;  // energy up to the start of segment i
};

}  // namespace apdsim
