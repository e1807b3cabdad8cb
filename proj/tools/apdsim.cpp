// Command-line front end: CW sweeps, attack evaluation, configuration audit,
// and parameter calibration for the gated-APD blinding simulator.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "apdsim/attacks.hpp"
#include "apdsim/countermeasures.hpp"
#include "apdsim/detector.hpp"
#include "apdsim/experiments.hpp"
#include "apdsim/params.hpp"

namespace {

constexpr const char* kToolName = "apdsim";
constexpr const char* kToolVersion = "0.1.0";

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitSecurityFinding = 2;
constexpr int kExitNumeric = 3;

std::uint64_t default_seed() {
    const char* env = std::getenv("APDSIM_SEED");
    if (env == nullptr || *env == '\0') return 1;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end == nullptr || *end != '\0') {
        throw apdsim::ConfigError("APDSIM_SEED must be an unsigned integer");
    }
    return static_cast<std::uint64_t>(v);
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw apdsim::ConfigError("cannot write output file: " + path);
    out << text;
}

void write_manifest(const std::string& output_path, const std::string& command,
                    const nlohmann::json& inputs, std::uint64_t seed, int threads) {
    nlohmann::json j;
    j["tool"] = kToolName;
    j["version"] = kToolVersion;
    j["command"] = command;
    j["inputs"] = inputs;
    j["seed"] = seed;
    j["threads"] = threads;
    j["output"] = output_path;
    write_text_file(output_path + ".manifest.json", j.dump(2) + "\n");
}

std::vector<double> parse_double_list(const std::string& text) {
    std::vector<double> values;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            std::size_t pos = 0;
            const double v = std::stod(item, &pos);
            if (pos != item.size()) throw std::invalid_argument(item);
            values.push_back(v);
        } catch (const std::exception&) {
            throw apdsim::ConfigError("cannot parse number \"" + item + "\" in list");
        }
    }
    if (values.empty()) throw apdsim::ConfigError("expected a comma-separated list of numbers");
    return values;
}

struct SweepCli {
    std::string params_path;
    std::string variable = "power";
    std::string out_path;
    double min_value = 1.0e-15;
    double max_value = 1.0e-2;
    int points_per_decade = 0;  // 0 -> per-variable default
    std::uint64_t gates = 0;    // 0 -> per-variable default
    std::string rbias_values = "0,5000,20000,50000,100000,200000";
    double probe_power = 1.0e-5;
    std::uint64_t seed = 1;
    int threads = 1;
};

int cmd_sweep(const SweepCli& cli) {
    const apdsim::ApdParams params = apdsim::load_params(cli.params_path);
    apdsim::SweepResult result;
    bool rbias_columns = false;

    if (cli.variable == "power") {
        apdsim::SweepSpec spec;
        spec.min_value = cli.min_value;
        spec.max_value = cli.max_value;
        spec.points_per_decade = cli.points_per_decade > 0 ? cli.points_per_decade : 25;
        spec.gates_per_point = cli.gates > 0 ? cli.gates : 200000;
        spec.seed = cli.seed;
        spec.threads = cli.threads;
        result = apdsim::run_sweep(params, spec);
    } else if (cli.variable == "amplitude") {
        apdsim::SweepSpec spec;
        spec.min_value = cli.min_value;
        spec.max_value = cli.max_value;
        spec.points_per_decade = cli.points_per_decade > 0 ? cli.points_per_decade : 50;
        spec.seed = cli.seed;
        spec.threads = cli.threads;
        result = apdsim::run_ac_amplitude_sweep(params, spec);
    } else if (cli.variable == "rbias") {
        apdsim::RBiasScanSpec spec;
        spec.r_values = parse_double_list(cli.rbias_values);
        spec.probe_power = cli.probe_power;
        spec.gap.power_min = cli.min_value;
        spec.gap.power_max = cli.max_value;
        spec.gap.points_per_decade = cli.points_per_decade > 0 ? cli.points_per_decade : 10;
        spec.gap.gates_per_point = cli.gates > 0 ? cli.gates : 200000;
        spec.gap.seed = cli.seed;
        spec.gap.threads = cli.threads;
        result = apdsim::run_rbias_scan(params, spec);
        rbias_columns = true;
    } else {
        throw apdsim::ConfigError("unknown sweep variable \"" + cli.variable +
                                  "\" (expected power, amplitude, or rbias)");
    }

    apdsim::write_sweep_csv(result, cli.out_path, rbias_columns);
    nlohmann::json inputs;
    inputs["params"] = cli.params_path;
    inputs["variable"] = cli.variable;
    write_manifest(cli.out_path, "sweep", inputs, cli.seed, cli.threads);
    return kExitOk;
}

struct AttackCli {
    std::string params_path;
    std::string scenario_path;
    std::string out_path;
    bool no_monitor = false;
    double monitor_margin = 2.0;
    double monitor_window = 1.0e-3;
    std::uint64_t seed = 1;
};

int cmd_attack(const AttackCli& cli) {
    const apdsim::ApdParams params = apdsim::load_params(cli.params_path);
    const apdsim::AttackScenario scenario = apdsim::load_scenario(cli.scenario_path);
    apdsim::MonitorConfig mon;
    mon.margin_factor = cli.monitor_margin;
    mon.window = cli.monitor_window;
    const apdsim::AttackReport report =
        apdsim::evaluate_attack(params, scenario, cli.seed, mon, !cli.no_monitor);

    const std::string text = apdsim::attack_report_to_json_text(report);
    if (cli.out_path.empty()) {
        std::cout << text;
    } else {
        write_text_file(cli.out_path, text);
        nlohmann::json inputs;
        inputs["params"] = cli.params_path;
        inputs["scenario"] = cli.scenario_path;
        write_manifest(cli.out_path, "attack", inputs, cli.seed, 1);
    }

    if (report.attack_success && !report.detected) {
        std::cerr << "security finding: attack \"" << apdsim::to_string(report.kind)
                  << "\" succeeded without detection";
        if (!report.monitor_enabled) std::cerr << " (monitor disabled)";
        std::cerr << "\n";
        const apdsim::AuditReport audit = apdsim::audit_config(params);
        for (const auto& f : audit.findings) {
            std::cerr << "  " << f.rule_id << ": " << f.message << "\n";
        }
        return kExitSecurityFinding;
    }
    if (report.attack_success) {
        std::cerr << "attack succeeded but the photocurrent monitor raised an alarm\n";
    } else {
        std::cerr << "attack failed\n";
    }
    return kExitOk;
}

struct AuditCli {
    std::string params_path;
    std::string out_path;
    double r_bias_max = 2.0e4;
    double headroom_factor = 1.5;
};

int cmd_audit(const AuditCli& cli) {
    const apdsim::ApdParams params = apdsim::load_params(cli.params_path);
    apdsim::AuditLimits limits;
    limits.r_bias_max = cli.r_bias_max;
    limits.headroom_factor = cli.headroom_factor;
    const apdsim::AuditReport report = apdsim::audit_config(params, limits);

    nlohmann::json j;
    j["passed"] = report.passed;
    nlohmann::json findings = nlohmann::json::array();
    for (const auto& f : report.findings) {
        findings.push_back({{"rule_id", f.rule_id},
                            {"message", f.message},
                            {"observed", f.observed},
                            {"limit", f.limit}});
    }
    j["findings"] = findings;
    const std::string text = j.dump(2) + "\n";
    if (cli.out_path.empty()) {
        std::cout << text;
    } else {
        write_text_file(cli.out_path, text);
        nlohmann::json inputs;
        inputs["params"] = cli.params_path;
        write_manifest(cli.out_path, "audit", inputs, 0, 1);
    }

    if (!report.passed) {
        std::cerr << "audit failed: " << report.findings.size() << " finding(s)\n";
        for (const auto& f : report.findings) {
            std::cerr << "  " << f.rule_id << ": " << f.message << "\n";
        }
        return kExitSecurityFinding;
    }
    return kExitOk;
}

struct CalibrateCli {
    std::string params_path;
    std::string anchors_path;
    std::string out_path;
    std::string report_path;
};

int cmd_calibrate(const CalibrateCli& cli) {
    const apdsim::ApdParams initial = apdsim::load_params(cli.params_path);
    const apdsim::CalibrationAnchors anchors = apdsim::load_anchors(cli.anchors_path);
    const apdsim::CalibrationResult result = apdsim::calibrate(initial, anchors);

    apdsim::save_params(result.fitted, cli.out_path);
    nlohmann::json inputs;
    inputs["params"] = cli.params_path;
    inputs["anchors"] = cli.anchors_path;
    write_manifest(cli.out_path, "calibrate", inputs, 0, 1);
    if (!cli.report_path.empty()) {
        write_text_file(cli.report_path, apdsim::calibration_report_to_json_text(result));
    }

    if (!result.converged) {
        std::cerr << "calibration did not converge (objective " << result.objective << ")\n";
        return kExitNumeric;
    }
    std::cerr << "calibration converged: objective " << result.objective << " after "
              << result.evaluations << " evaluations\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gated avalanche photodiode bright-light attack simulator"};
    app.set_version_flag("--version", std::string(kToolName) + " " + kToolVersion);
    app.require_subcommand(1);

    std::uint64_t seed = 1;
    bool seed_given = false;

    SweepCli sweep;
    CLI::App* sweep_cmd = app.add_subcommand("sweep", "Sweep CW power, response amplitude, or bias network");
    sweep_cmd->add_option("--params", sweep.params_path, "Detector parameter JSON")->required();
    sweep_cmd->add_option("--variable", sweep.variable, "power | amplitude | rbias");
    sweep_cmd->add_option("--out", sweep.out_path, "Output CSV path")->required();
    sweep_cmd->add_option("--min", sweep.min_value, "Lowest power [W]");
    sweep_cmd->add_option("--max", sweep.max_value, "Highest power [W]");
    sweep_cmd->add_option("--points-per-decade", sweep.points_per_decade, "Grid density");
    sweep_cmd->add_option("--gates", sweep.gates, "Gates simulated per point");
    sweep_cmd->add_option("--rbias-values", sweep.rbias_values,
                          "Comma-separated resistances [ohm] (rbias variable)");
    sweep_cmd->add_option("--probe-power", sweep.probe_power,
                          "Probe power for rbias rows [W]");
    sweep_cmd->add_option("--threads", sweep.threads, "Worker threads");

    AttackCli attack;
    CLI::App* attack_cmd = app.add_subcommand("attack", "Evaluate an attack scenario");
    attack_cmd->add_option("--params", attack.params_path, "Detector parameter JSON")->required();
    attack_cmd->add_option("--scenario", attack.scenario_path, "Attack scenario JSON")->required();
    attack_cmd->add_option("--out", attack.out_path, "Report JSON path (default: stdout)");
    attack_cmd->add_flag("--no-monitor", attack.no_monitor, "Disable the photocurrent monitor");
    attack_cmd->add_option("--monitor-margin", attack.monitor_margin, "Monitor threshold multiplier");
    attack_cmd->add_option("--monitor-window", attack.monitor_window, "Monitor window [s]");

    AuditCli audit;
    CLI::App* audit_cmd = app.add_subcommand("audit", "Audit a detector configuration");
    audit_cmd->add_option("--params", audit.params_path, "Detector parameter JSON")->required();
    audit_cmd->add_option("--out", audit.out_path, "Report JSON path (default: stdout)");
    audit_cmd->add_option("--r-bias-max", audit.r_bias_max, "Largest safe bias resistance [ohm]");
    audit_cmd->add_option("--headroom-factor", audit.headroom_factor,
                          "Allowed threshold / feedthrough ratio");

    CalibrateCli calibrate;
    CLI::App* cal_cmd = app.add_subcommand("calibrate", "Fit device parameters to anchors");
    cal_cmd->add_option("--params", calibrate.params_path, "Initial parameter JSON")->required();
    cal_cmd->add_option("--anchors", calibrate.anchors_path, "Anchor observables JSON")->required();
    cal_cmd->add_option("--out", calibrate.out_path, "Fitted parameter JSON path")->required();
    cal_cmd->add_option("--report", calibrate.report_path, "Residual report JSON path");

    for (CLI::App* sub : {sweep_cmd, attack_cmd}) {
        sub->add_option("--seed", seed, "Random seed (overrides APDSIM_SEED)")
            ->each([&](const std::string&) { seed_given = true; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (!seed_given) seed = default_seed();
        sweep.seed = seed;
        attack.seed = seed;
        if (sweep.threads < 1 || sweep.threads > 256) {
            throw apdsim::ConfigError("--threads must be between 1 and 256");
        }
        if (sweep_cmd->parsed()) return cmd_sweep(sweep);
        if (attack_cmd->parsed()) return cmd_attack(attack);
        if (audit_cmd->parsed()) return cmd_audit(audit);
        if (cal_cmd->parsed()) return cmd_calibrate(calibrate);
        throw apdsim::ConfigError("no subcommand selected");
    } catch (const apdsim::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const apdsim::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitOk;
}
