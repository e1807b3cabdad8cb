#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "apdsim/detector.hpp"
#include "apdsim/params.hpp"

namespace apdsim {

// Photocurrent a click rate should produce when every click is a genuine
// quenched avalanche.
double expected_photocurrent(double count_rate, double charge_per_avalanche);

// Bias-current watchdog: alarms when the windowed mean photocurrent exceeds
// margin_factor times the current expected at reference_count_rate.  A zero
// reference_count_rate means "use the gate rate", i.e. the highest click rate
// the gated detector can report.
struct MonitorConfig {
    double window = 1.0e-3;             // averaging window [s]
    double margin_factor = 2.0;         // alarm threshold multiplier
    double reference_count_rate = 0.0;  // [Hz]; 0 selects the gate rate
};

struct MonitorVerdict {
    bool alarmed = false;
    double first_alarm_time = 0.0;  // [s]; meaningful when alarmed
    double threshold = 0.0;         // [A]
    double peak_windowed_current = 0.0;  // [A]
};

MonitorVerdict run_monitor(const ApdParams& p, const TraceResult& trace, const MonitorConfig& cfg);

// --- static configuration audit ---

inline constexpr const char* kRuleRBiasMax = "R_BIAS_MAX";
inline constexpr const char* kRuleHeadroom = "L_HEADROOM";
inline constexpr const char* kRuleBelowCapacitive = "L_BELOW_CAPACITIVE";

struct AuditLimits {
    double r_bias_max = 2.0e4;      // largest safe series resistance [ohm]
    double headroom_factor = 1.5;   // required L / capacitive_amplitude ratio
};

struct AuditFinding {
    std::string rule_id;
    std::string message;
    double observed = 0.0;
    double limit = 0.0;
};

struct AuditReport {
    bool passed = true;
    std::vector<AuditFinding> findings;
};

AuditReport audit_config(const ApdParams& p, const AuditLimits& limits = {});

// --- blinding-gap scan ---

struct GapScanSpec {
    double power_min = 1.0e-15;  // [W]
    double power_max = 1.0e-2;   // [W]
    int points_per_decade = 10;
    std::uint64_t gates_per_point = 200000;
    std::uint64_t seed = 1;
    int threads = 1;
    double edge_tolerance = 0.01;  // relative width of the refined edge bracket
    // Only points whose ideal-detector expectation reaches this many clicks
    // can certify a zero; prevents calling a statistical fluke "blind".
    double min_expected_clicks = 100.0;
};

struct ZeroCountGap {
    double i_b = 0.0;                // lowest blinding power [W]
    std::optional<double> i_r;       // recovery power [W]; absent if blind up to power_max
};

struct GapScanPoint {
    double power = 0.0;
    double count_rate = 0.0;
    double photocurrent = 0.0;
    bool blinded = false;
    bool certifiable = false;
};

struct GapScanResult {
    std::optional<ZeroCountGap> gap;
    std::vector<GapScanPoint> points;
};

// Time to run a trace before trusting its statistics: covers thermal and
// baseline relaxation plus a hundred gate periods.
double recommended_settle_time(const ApdParams& p);

// Sweep CW power on a log grid, find the contiguous zero-click region, and
// refine both edges by bisection to edge_tolerance.  Throws NumericError with
// a diagnostic if the zero-click set is not contiguous.
GapScanResult scan_zero_count_gap(const ApdParams& p, const GapScanSpec& spec);

// Convenience wrapper returning just the gap.
std::optional<ZeroCountGap> find_zero_count_gap(const ApdParams& p, const GapScanSpec& spec);

}  // namespace apdsim
