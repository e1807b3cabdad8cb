#pragma once

// Shared fixtures and independent reference implementations used by the test
// suites.  Reference params mirror the profiles shipped in data/.

#include <cmath>
#include <cstdlib>
#include <string>

#include "apdsim/detector.hpp"
#include "apdsim/params.hpp"

namespace testsupport {

inline apdsim::ApdParams vulnerable_params() {
    apdsim::ApdParams p;  // defaults are the vulnerable reference device
    p.r_bias = 1.0e5;
    p.coupling = apdsim::Coupling::AC;
    p.acceptance_window = 5.0e-7;
    return p;
}

inline apdsim::ApdParams correct_params() {
    apdsim::ApdParams p;
    p.r_bias = 0.0;
    p.coupling = apdsim::Coupling::DC;
    p.acceptance_window = 4.0e-9;
    return p;
}

inline apdsim::ApdParams clavis2_params() {
    apdsim::ApdParams p;
    p.r_bias = 1.0e3;
    p.discrimination_level = 0.080;
    p.coupling = apdsim::Coupling::AC;
    p.acceptance_window = 5.0e-7;
    return p;
}

// No series resistor, but the discrimination level raised past the safe
// headroom band: vulnerable to sustained heating instead of bias droop.
inline apdsim::ApdParams thermal_misconfig_params() {
    apdsim::ApdParams p;
    p.r_bias = 0.0;
    p.discrimination_level = 0.070;
    p.coupling = apdsim::Coupling::AC;
    p.acceptance_window = 5.0e-7;
    return p;
}

inline bool close_rel(double a, double b, double rel) {
    const double scale = std::max(std::abs(a), std::abs(b));
    return std::abs(a - b) <= rel * std::max(scale, 1e-300);
}

// Independent steady-current reference: relax i' = lambda * (f(i) - i) with a
// small gain until stationary.  Deliberately shares no code with the library
// solver beyond the gain law itself.
inline double relaxation_photocurrent(const apdsim::ApdParams& p, double power,
                                      double applied_bias, double temperature) {
    auto f = [&](double i) {
        return power * p.responsivity *
               apdsim::linear_gain(p, applied_bias - i * p.r_bias, temperature);
    };
    double i = 0.0;
    const double lambda = 0.02;
    for (int k = 0; k < 400000; ++k) {
        const double next = i + lambda * (f(i) - i);
        if (std::abs(next - i) <= 1e-14 * std::max(std::abs(next), 1e-300) && k > 100) {
            return next;
        }
        i = next;
    }
    return i;
}

inline std::string data_dir() {
    const char* env = std::getenv("APDSIM_DATA");
    if (env != nullptr && *env != '\0') return env;
    return "data";
}

}  // namespace testsupport
