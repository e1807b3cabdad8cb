#include "apdsim/params.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace apdsim {

using nlohmann::json;

std::string to_string(Coupling c) { return c == Coupling::AC ? "AC" : "DC"; }

Coupling coupling_from_string(const std::string& s) {
    if (s == "AC") return Coupling::AC;
    if (s == "DC") return Coupling::DC;
    throw ConfigError("coupling must be \"AC\" or \"DC\", got \"" + s + "\"");
}

namespace {

void require_positive(double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
        throw ConfigError(std::string(name) + " must be positive and finite");
    }
}

void require_nonnegative(double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
        throw ConfigError(std::string(name) + " must be non-negative and finite");
    }
}

}  // namespace

void ApdParams::validate() const {
    require_positive(v_breakdown_0, "v_breakdown_0");
    require_positive(v_dc, "v_dc");
    require_positive(gate_amplitude, "gate_amplitude");
    require_positive(gate_width, "gate_width");
    require_positive(gate_rate, "gate_rate");
    require_nonnegative(r_bias, "r_bias");
    require_positive(r_sense, "r_sense");
    require_positive(discrimination_level, "discrimination_level");
    require_nonnegative(capacitive_amplitude, "capacitive_amplitude");
    require_positive(responsivity, "responsivity");
    require_positive(miller_exponent, "miller_exponent");
    require_positive(v_punch_through, "v_punch_through");
    require_positive(avalanche_gain_constant, "avalanche_gain_constant");
    require_positive(charge_per_avalanche, "charge_per_avalanche");
    require_nonnegative(temp_coeff_vb, "temp_coeff_vb");
    require_nonnegative(thermal_resistance, "thermal_resistance");
    require_positive(thermal_time_constant, "thermal_time_constant");
    require_positive(ambient_temp, "ambient_temp");
    require_positive(ac_time_constant, "ac_time_constant");
    require_positive(acceptance_window, "acceptance_window");
    if (!(eta_0 >= 0.0 && eta_0 <= 1.0)) throw ConfigError("eta_0 must lie in [0, 1]");
    if (!(p_dark >= 0.0 && p_dark < 1.0)) throw ConfigError("p_dark must lie in [0, 1)");
    if (!(gain_clamp >= 1.0)) throw ConfigError("gain_clamp must be >= 1");
    if (!(gate_width < gate_period())) throw ConfigError("gate_width must be shorter than the gate period");
    if (!(acceptance_window <= gate_period())) throw ConfigError("acceptance_window must not exceed the gate period");
    if (!(v_punch_through < v_breakdown_0)) throw ConfigError("v_punch_through must be below v_breakdown_0");
    if (!(v_dc + gate_amplitude > v_punch_through)) {
        throw ConfigError("gated bias must exceed v_punch_through");
    }
}

namespace {

// Pull a field out of the object, erasing it so leftovers can be detected.
template <typename T>
void take(json& j, const char* key, T& out) {
    auto it = j.find(key);
    if (it == j.end()) return;  // keep default
    try {
        out = it->get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("field \"") + key + "\" has the wrong type");
    }
    j.erase(it);
}

void take_coupling(json& j, const char* key, Coupling& out) {
    auto it = j.find(key);
    if (it == j.end()) return;
    if (!it->is_string()) throw ConfigError(std::string("field \"") + key + "\" must be a string");
    out = coupling_from_string(it->get<std::string>());
    j.erase(it);
}

}  // namespace

ApdParams params_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("parameter file must contain a JSON object");

    ApdParams p;
    take(j, "v_breakdown_0", p.v_breakdown_0);
    take(j, "v_dc", p.v_dc);
    take(j, "gate_amplitude", p.gate_amplitude);
    take(j, "gate_width", p.gate_width);
    take(j, "gate_rate", p.gate_rate);
    take(j, "r_bias", p.r_bias);
    take(j, "r_sense", p.r_sense);
    take(j, "discrimination_level", p.discrimination_level);
    take(j, "capacitive_amplitude", p.capacitive_amplitude);
    take(j, "eta_0", p.eta_0);
    take(j, "p_dark", p.p_dark);
    take(j, "responsivity", p.responsivity);
    take(j, "miller_exponent", p.miller_exponent);
    take(j, "v_punch_through", p.v_punch_through);
    take(j, "gain_clamp", p.gain_clamp);
    take(j, "avalanche_gain_constant", p.avalanche_gain_constant);
    take(j, "charge_per_avalanche", p.charge_per_avalanche);
    take(j, "temp_coeff_vb", p.temp_coeff_vb);
    take(j, "thermal_resistance", p.thermal_resistance);
    take(j, "thermal_time_constant", p.thermal_time_constant);
    take(j, "ambient_temp", p.ambient_temp);
    take_coupling(j, "coupling", p.coupling);
    take(j, "ac_time_constant", p.ac_time_constant);
    take(j, "acceptance_window", p.acceptance_window);

    if (!j.empty()) {
        throw ConfigError("unknown field \"" + j.begin().key() + "\" in parameter file");
    }
    p.validate();
    return p;
}

std::string params_to_json_text(const ApdParams& p) {
    json j;
    j["v_breakdown_0"] = p.v_breakdown_0;
    j["v_dc"] = p.v_dc;
    j["gate_amplitude"] = p.gate_amplitude;
    j["gate_width"] = p.gate_width;
    j["gate_rate"] = p.gate_rate;
    j["r_bias"] = p.r_bias;
    j["r_sense"] = p.r_sense;
    j["discrimination_level"] = p.discrimination_level;
    j["capacitive_amplitude"] = p.capacitive_amplitude;
    j["eta_0"] = p.eta_0;
    j["p_dark"] = p.p_dark;
    j["responsivity"] = p.responsivity;
    j["miller_exponent"] = p.miller_exponent;
    j["v_punch_through"] = p.v_punch_through;
    j["gain_clamp"] = p.gain_clamp;
    j["avalanche_gain_constant"] = p.avalanche_gain_constant;
    j["charge_per_avalanche"] = p.charge_per_avalanche;
    j["temp_coeff_vb"] = p.temp_coeff_vb;
    j["thermal_resistance"] = p.thermal_resistance;
    j["thermal_time_constant"] = p.thermal_time_constant;
    j["ambient_temp"] = p.ambient_temp;
    j["coupling"] = to_string(p.coupling);
    j["ac_time_constant"] = p.ac_time_constant;
    j["acceptance_window"] = p.acceptance_window;
    return j.dump(2) + "\n";
}

ApdParams load_params(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open parameter file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return params_from_json_text(ss.str());
}

void save_params(const ApdParams& p, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write parameter file: " + path);
    out << params_to_json_text(p);
}

}  // namespace apdsim
