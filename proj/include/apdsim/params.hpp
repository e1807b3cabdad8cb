#pragma once

#include <stdexcept>
#include <string>

namespace apdsim {

// Raised for malformed configuration files, invalid parameter values, or
// unusable CLI input.  The CLI maps this to exit code 1.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Raised when an internal numeric routine fails to converge or produces a
// non-finite value.  The CLI maps this to exit code 3.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// How the discriminator sees the sense signal: directly (DC) or through a
// baseline-restoring high-pass stage (AC).
enum class Coupling { DC, AC };

std::string to_string(Coupling c);
Coupling coupling_from_string(const std::string& s);

// Full description of one gated avalanche photodiode channel plus its bias
// network and discriminator.  All values are SI units (volts, ohms, seconds,
// watts, amperes, kelvin).  Defaults describe the reference device used by
// the bundled data profiles.
struct ApdParams {
    double v_breakdown_0 = 50.0;          // breakdown voltage at ambient_temp [V]
    double v_dc = 48.5;                   // standing bias between gates [V]
    double gate_amplitude = 4.0;          // gate pulse height added to v_dc [V]
    double gate_width = 3.5e-9;           // gate duration [s]
    double gate_rate = 2.0e6;             // gate repetition rate [Hz]
    double r_bias = 1.0e5;                // series resistor feeding the diode [ohm]
    double r_sense = 1.4e3;               // effective sense impedance seen by the discriminator [ohm/V per A]
    double discrimination_level = 0.040;  // click threshold at the discriminator [V]
    double capacitive_amplitude = 0.035;  // gate-edge feedthrough spike height [V]
    double eta_0 = 0.11;                  // photon detection efficiency at full excess bias
    double p_dark = 1.0e-5;               // dark count probability per gate
    double responsivity = 1.4357;         // unity-gain photoresponse [A/W]
    double miller_exponent = 3.0;         // exponent of the multiplication law
    double v_punch_through = 41.5;        // bias below which no photocurrent is collected [V]
    double gain_clamp = 30.0;             // ceiling on the linear multiplication factor
    double avalanche_gain_constant = 0.0656;  // avalanche pulse height per volt of excess bias [V/V]
    double charge_per_avalanche = 1.25e-13;   // charge released by one avalanche [C]
    double temp_coeff_vb = 0.1;           // breakdown voltage shift per kelvin [V/K]
    double thermal_resistance = 1.89e4;   // junction heating per absorbed watt [K/W]
    double thermal_time_constant = 1.0e-2;  // junction thermal relaxation time [s]
    double ambient_temp = 243.15;         // cold-finger temperature [K]
    Coupling coupling = Coupling::AC;     // discriminator coupling
    double ac_time_constant = 1.0e-5;     // baseline restoration time for AC coupling [s]
    double acceptance_window = 5.0e-7;    // span after each gate start in which clicks are accepted [s]

    double gate_period() const { return 1.0 / gate_rate; }
    // Excess bias seen by an undisturbed gate at ambient temperature.
    double nominal_excess_bias() const { return v_dc + gate_amplitude - v_breakdown_0; }

    // Throws ConfigError when any value is outside its physical domain.
    void validate() const;
};

// Strict JSON (de)serialization: every field must be present-or-defaulted and
// unknown keys are rejected with the offending name in the message.
ApdParams params_from_json_text(const std::string& text);
std::string params_to_json_text(const ApdParams& p);
ApdParams load_params(const std::string& path);
void save_params(const ApdParams& p, const std::string& path);

}  // namespace apdsim
