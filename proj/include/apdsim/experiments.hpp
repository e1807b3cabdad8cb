#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "apdsim/attacks.hpp"
#include "apdsim/countermeasures.hpp"
#include "apdsim/detector.hpp"
#include "apdsim/params.hpp"

namespace apdsim {

struct SweepSpec {
    double min_value = 1.0e-15;  // lowest x (power [W] for power sweeps)
    double max_value = 1.0e-2;   // highest x
    int points_per_decade = 25;
    std::uint64_t gates_per_point = 1000000;
    std::uint64_t seed = 1;
    int threads = 1;
};

// One row of every sweep product.  x_value is the swept quantity: optical
// power [W] for power and amplitude sweeps, series resistance [ohm] for
// bias-network scans.
struct SweepRow {
    double x_value = 0.0;
    double count_rate_hz = 0.0;
    double photocurrent_a = 0.0;
    double ac_amplitude_v = 0.0;
    bool blinded = false;
    std::optional<double> i_b_w;  // populated by bias-network scans
    std::optional<double> i_r_w;
};

struct SweepResult {
    std::vector<SweepRow> rows;
};

// Monte-Carlo CW power sweep: one settled trace per grid point.
SweepResult run_sweep(const ApdParams& p, const SweepSpec& spec);

// Deterministic CW response curve at the settled junction temperature: the
// gated linear amplitude, quasi-static photocurrent, and the click rate the
// discriminator channels predict.  No Monte Carlo, so grids can be dense.
SweepResult run_ac_amplitude_sweep(const ApdParams& p, const SweepSpec& spec);

// For each series resistance, locate the zero-count gap and probe the
// response at probe_power.  x_value carries the resistance.
struct RBiasScanSpec {
    std::vector<double> r_values;     // [ohm]
    double probe_power = 1.0e-5;      // [W]
    GapScanSpec gap;
};
SweepResult run_rbias_scan(const ApdParams& p, const RBiasScanSpec& spec);

// Cross product of detector configurations and attack scenarios.
struct AttackMatrixCell {
    std::string config_name;
    std::string scenario_name;
    AttackReport report;
};
std::vector<AttackMatrixCell> run_attack_matrix(
    const std::vector<std::pair<std::string, ApdParams>>& configs,
    const std::vector<std::pair<std::string, AttackScenario>>& scenarios, std::uint64_t seed,
    const MonitorConfig& monitor_cfg, bool enable_monitor, int threads);

// --- calibration against measured anchor observables ---

struct CalibrationAnchors {
    std::optional<double> i_b_w;                  // blinding onset power [W]
    std::optional<double> i_r_w;                  // recovery power [W]
    std::optional<double> photocurrent_at_i_b_a;  // photocurrent at onset [A]
    std::optional<double> thermal_blind_power_w;  // sustained power that kills dark response [W]
    std::optional<double> thermal_response_time_s;

    std::size_t count() const;
};

CalibrationAnchors anchors_from_json_text(const std::string& text);
CalibrationAnchors load_anchors(const std::string& path);

struct CalibrationResult {
    ApdParams fitted;
    std::map<std::string, double> residuals;  // relative error per anchor
    double objective = 0.0;
    int evaluations = 0;
    bool converged = false;
};

// Fit {responsivity, avalanche_gain_constant, v_punch_through,
// thermal_resistance, thermal_time_constant} so the fast deterministic model
// reproduces the anchors.  Fully deterministic.
CalibrationResult calibrate(const ApdParams& initial, const CalibrationAnchors& anchors);

std::string calibration_report_to_json_text(const CalibrationResult& r);

// Deterministic model predictions used by the calibration (also handy for
// tests): blinding onset / recovery powers from the discriminator channels.
struct ChannelPrediction {
    std::optional<double> i_b;
    std::optional<double> i_r;
};
ChannelPrediction predict_gap_channels(const ApdParams& p, double power_min, double power_max);
double predict_photocurrent_cw(const ApdParams& p, double power);
double predict_thermal_blind_power(const ApdParams& p);

// CSV with the exact column contract shared by all sweeps.
void write_sweep_csv(const SweepResult& result, const std::string& path, bool rbias_columns);
std::string sweep_csv_text(const SweepResult& result, bool rbias_columns);

}  // namespace apdsim
