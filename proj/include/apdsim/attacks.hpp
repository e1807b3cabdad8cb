#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "apdsim/countermeasures.hpp"
#include "apdsim/detector.hpp"
#include "apdsim/params.hpp"
#include "apdsim/waveform.hpp"

namespace apdsim {

// Width of the short optical pulses used by triggered scenarios [s].
inline constexpr double kTriggerPulseWidth = 1.0e-10;

enum class AttackKind { CwBlind, FakedState, ThermalFrames, SinkHole, AfterGate };

std::string to_string(AttackKind k);
AttackKind attack_kind_from_string(const std::string& s);

struct FrameInterval {
    double start = 0.0;     // [s]
    double duration = 0.0;  // [s]
};

// Description of one illumination attack.  Only the fields belonging to the
// given kind may be set; the JSON loader rejects everything else.
struct AttackScenario {
    AttackKind kind = AttackKind::CwBlind;
    double duration = 5.0e-2;  // total attack span [s]

    // CwBlind and FakedState: constant background power [W].
    double cw_power = 0.0;

    // FakedState: bright trigger pulses centred in selected gates.
    double trigger_pulse_energy = 0.0;        // [J]
    std::vector<double> trigger_times;        // explicit trigger instants [s]
    std::uint64_t trigger_every_n_gates = 0;  // or: one trigger every n gates

    // ThermalFrames: light switched off inside frames, bright elsewhere.
    std::vector<FrameInterval> frames;
    double inter_frame_power = 0.0;  // [W]

    // SinkHole: bright light only between gates.
    double inter_gate_power = 0.0;  // [W]
    double guard_interval = 1.0e-9; // dark margin around each gate [s]

    // AfterGate: one short pulse per period, delayed past the gate.
    double after_gate_delay = 0.0;  // measured from gate end [s]
    double pulse_energy = 0.0;      // [J]

    void validate(const ApdParams& p) const;  // throws ConfigError
};

AttackScenario scenario_from_json_text(const std::string& text);
std::string scenario_to_json_text(const AttackScenario& s);
AttackScenario load_scenario(const std::string& path);
void save_scenario(const AttackScenario& s, const std::string& path);

// Translate a scenario into the optical power waveform it injects.
OpticalWaveform build_waveform(const AttackScenario& s, const ApdParams& p);

// Gate indices that carry a trigger or after-gate pulse.
std::vector<std::uint64_t> trigger_gate_indices(const AttackScenario& s, const ApdParams& p);

struct AttackReport {
    AttackKind kind = AttackKind::CwBlind;
    bool attack_success = false;
    bool blinded = false;
    bool detected = false;          // monitor enabled and alarmed
    bool monitor_enabled = false;
    std::uint64_t expected_forced = 0;  // pulses that should produce clicks
    std::uint64_t forced_clicks = 0;    // pulses that did produce in-window clicks
    std::uint64_t other_clicks = 0;     // judged in-window clicks not tied to a pulse
    std::uint64_t clicks_in_frames = 0; // ThermalFrames: clicks inside judged frames
    std::uint64_t stray_clicks = 0;     // ThermalFrames: clicks outside frames
    double judge_start = 0.0;           // transients before this time are not judged [s]
    double mean_injected_power = 0.0;   // [W]
    MonitorVerdict monitor_verdict;
    bool audit_passed = false;
    TraceResult trace;
};

// Run the scenario against the detector and judge it.  Success semantics:
//  - CwBlind / SinkHole / ThermalFrames: the detector reports no accepted
//    clicks in the judged span (for ThermalFrames, inside judged frames).
//  - FakedState: every judged trigger produces an accepted click and nothing
//    else clicks.
//  - AfterGate: every judged pulse produces an accepted click; clicks pushed
//    outside the acceptance window do not count.
AttackReport evaluate_attack(const ApdParams& p, const AttackScenario& s, std::uint64_t seed,
                             const MonitorConfig& monitor_cfg = {}, bool enable_monitor = true);

std::string attack_report_to_json_text(const AttackReport& r);

}  // namespace apdsim
