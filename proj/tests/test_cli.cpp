#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "support.hpp"

namespace fs = std::filesystem;

namespace {

std::string bin_path() {
    const char* env = std::getenv("APDSIM_BIN");
    REQUIRE_MESSAGE(env != nullptr, "APDSIM_BIN must point at the built binary");
    return env;
}

const fs::path& work_dir() {
    static const fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "apdsim_cli_tests";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string wpath(const std::string& name) { return (work_dir() / name).string(); }

std::string data_file(const std::string& name) {
    return (fs::path(testsupport::data_dir()) / name).string();
}

// Run a shell command, returning its exit code.  stdout/stderr are captured
// into files under the scratch directory.
int run(const std::string& args, const std::string& tag) {
    const std::string cmd = args + " > " + wpath(tag + ".out") + " 2> " + wpath(tag + ".err");
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    REQUIRE(WIFEXITED(status));
    return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    REQUIRE_MESSAGE(in.good(), "missing file: " << path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

bool contains(const std::string& haystack, const std::string& needle) {
    return haystack.find(needle) != std::string::npos;
}

}  // namespace

TEST_CASE("version flag exits cleanly") {
    CHECK(run(bin_path() + " --version", "version") == 0);
    CHECK(contains(slurp(wpath("version.out")), "apdsim"));
}

TEST_CASE("missing subcommand or file is a usage error") {
    CHECK(run(bin_path(), "nosub") == 1);
    CHECK(run(bin_path() + " sweep --params /nonexistent.json --out " + wpath("x.csv"),
              "badfile") == 1);
    CHECK(run(bin_path() + " sweep --params " + data_file("apd1_correct.json"), "noout") == 1);
    CHECK(run(bin_path() + " attack --params " + data_file("apd1_correct.json") +
                  " --scenario /nonexistent.json",
              "badscen") == 1);
}

TEST_CASE("strict parameter parsing reports the offending field") {
    const std::string bad = wpath("bad_params.json");
    {
        std::ofstream out(bad);
        out << "{\"r_bais\": 100000.0}\n";  // deliberate typo
    }
    CHECK(run(bin_path() + " sweep --params " + bad + " --out " + wpath("y.csv"), "typo") == 1);
    CHECK(contains(slurp(wpath("typo.err")), "r_bais"));
}

TEST_CASE("power sweep writes CSV plus manifest and is reproducible") {
    const std::string base = bin_path() + " sweep --params " + data_file("apd1_correct.json") +
                             " --variable power --min 1e-9 --max 1e-8 --points-per-decade 2" +
                             " --gates 5000 --threads 2";
    CHECK(run(base + " --seed 3 --out " + wpath("sweep_a.csv"), "sweep_a") == 0);
    const std::string csv_a = slurp(wpath("sweep_a.csv"));
    CHECK(csv_a.rfind("x_value,count_rate_hz,photocurrent_a,ac_amplitude_v,blinded\n", 0) == 0);
    CHECK(std::count(csv_a.begin(), csv_a.end(), '\n') == 4);  // header + 3 grid rows

    const std::string manifest = slurp(wpath("sweep_a.csv.manifest.json"));
    CHECK(contains(manifest, "\"command\": \"sweep\""));
    CHECK(contains(manifest, "\"seed\": 3"));
    CHECK(contains(manifest, "apd1_correct.json"));

    // Same seed, same bytes.
    CHECK(run(base + " --seed 3 --out " + wpath("sweep_b.csv"), "sweep_b") == 0);
    CHECK(slurp(wpath("sweep_b.csv")) == csv_a);

    // Seed from the environment is equivalent to --seed.
    CHECK(run("APDSIM_SEED=3 " + base + " --out " + wpath("sweep_c.csv"), "sweep_c") == 0);
    CHECK(slurp(wpath("sweep_c.csv")) == csv_a);

    // An explicit --seed beats the environment.
    CHECK(run("APDSIM_SEED=77 " + base + " --seed 3 --out " + wpath("sweep_d.csv"),
              "sweep_d") == 0);
    CHECK(slurp(wpath("sweep_d.csv")) == csv_a);

    // A different seed changes the Monte Carlo columns.
    CHECK(run(base + " --seed 4 --out " + wpath("sweep_e.csv"), "sweep_e") == 0);
    CHECK(slurp(wpath("sweep_e.csv")) != csv_a);

    // Garbage in the environment seed is rejected.
    CHECK(run("APDSIM_SEED=banana " + base + " --out " + wpath("sweep_f.csv"), "sweep_f") == 1);

    // Inverted range is a usage error.
    CHECK(run(bin_path() + " sweep --params " + data_file("apd1_correct.json") +
                  " --min 1e-6 --max 1e-9 --out " + wpath("bad_range.csv"),
              "bad_range") == 1);
    CHECK(run(bin_path() + " sweep --params " + data_file("apd1_correct.json") +
                  " --variable nonsense --out " + wpath("bad_var.csv"),
              "bad_var") == 1);
}

TEST_CASE("blinding attack on the vulnerable profile is a security finding") {
    const int rc = run(bin_path() + " attack --params " + data_file("apd1_vulnerable.json") +
                           " --scenario " + data_file("scenarios/cw_blind.json") +
                           " --no-monitor --seed 5 --out " + wpath("cw_vuln.json"),
                       "cw_vuln");
    CHECK(rc == 2);
    const std::string err = slurp(wpath("cw_vuln.err"));
    CHECK(contains(err, "security finding"));
    CHECK(contains(err, "monitor disabled"));
    CHECK(contains(err, "R_BIAS_MAX"));
    const std::string report = slurp(wpath("cw_vuln.json"));
    CHECK(contains(report, "\"attack_success\": true"));
    CHECK(contains(report, "\"detected\": false"));
    CHECK(fs::exists(wpath("cw_vuln.json.manifest.json")));
}

TEST_CASE("the photocurrent monitor turns the same attack into a detected event") {
    const int rc = run(bin_path() + " attack --params " + data_file("apd1_vulnerable.json") +
                           " --scenario " + data_file("scenarios/cw_blind.json") +
                           " --seed 5 --out " + wpath("cw_mon.json"),
                       "cw_mon");
    CHECK(rc == 0);
    CHECK(contains(slurp(wpath("cw_mon.err")), "alarm"));
    CHECK(contains(slurp(wpath("cw_mon.json")), "\"detected\": true"));
}

TEST_CASE("the delayed-pulse attack slips past the monitor") {
    const int rc = run(bin_path() + " attack --params " + data_file("apd1_vulnerable.json") +
                           " --scenario " + data_file("scenarios/after_gate.json") +
                           " --seed 5 --out " + wpath("ag_vuln.json"),
                       "ag_vuln");
    CHECK(rc == 2);  // succeeds AND stays under the current threshold
    const std::string report = slurp(wpath("ag_vuln.json"));
    CHECK(contains(report, "\"attack_success\": true"));
    CHECK(contains(report, "\"detected\": false"));
}

TEST_CASE("attacks against the correctly built detector fail") {
    const int rc = run(bin_path() + " attack --params " + data_file("apd1_correct.json") +
                           " --scenario " + data_file("scenarios/cw_blind.json") + " --seed 5",
                       "cw_correct");
    CHECK(rc == 0);
    CHECK(contains(slurp(wpath("cw_correct.err")), "attack failed"));
    // Without --out the report goes to stdout.
    CHECK(contains(slurp(wpath("cw_correct.out")), "\"attack_success\": false"));
}

TEST_CASE("audit exit codes separate safe from unsafe configurations") {
    CHECK(run(bin_path() + " audit --params " + data_file("apd1_correct.json"), "audit_ok") == 0);
    CHECK(contains(slurp(wpath("audit_ok.out")), "\"passed\": true"));

    CHECK(run(bin_path() + " audit --params " + data_file("apd1_vulnerable.json"),
              "audit_vuln") == 2);
    CHECK(contains(slurp(wpath("audit_vuln.out")), "R_BIAS_MAX"));

    CHECK(run(bin_path() + " audit --params " + data_file("clavis2_like.json"),
              "audit_clavis") == 2);
    CHECK(contains(slurp(wpath("audit_clavis.out")), "L_HEADROOM"));

    CHECK(run(bin_path() + " audit --params " + data_file("apd1_thermal_misconfig.json"),
              "audit_thermal") == 2);

    // Relaxing the headroom limit clears the threshold finding.
    CHECK(run(bin_path() + " audit --params " + data_file("clavis2_like.json") +
                  " --headroom-factor 2.5",
              "audit_relaxed") == 0);
}

TEST_CASE("calibration round trip via the command line") {
    const int rc = run(bin_path() + " calibrate --params " + data_file("apd1_vulnerable.json") +
                           " --anchors " + data_file("anchors_apd1.json") + " --out " +
                           wpath("fitted.json") + " --report " + wpath("fit_report.json"),
                       "calibrate");
    CHECK(rc == 0);
    CHECK(contains(slurp(wpath("calibrate.err")), "calibration converged"));
    CHECK(contains(slurp(wpath("fitted.json")), "responsivity"));
    CHECK(contains(slurp(wpath("fit_report.json")), "\"converged\": true"));
    CHECK(fs::exists(wpath("fitted.json.manifest.json")));

    // The fitted file itself must be a loadable parameter set.
    CHECK(run(bin_path() + " audit --params " + wpath("fitted.json"), "audit_fitted") == 2);
}

TEST_CASE("unreachable anchors exit with the numeric failure code") {
    const std::string absurd = wpath("absurd_anchors.json");
    {
        std::ofstream out(absurd);
        out << "{\"i_b_w\": 5.0}\n";
    }
    CHECK(run(bin_path() + " calibrate --params " + data_file("apd1_vulnerable.json") +
                  " --anchors " + absurd + " --out " + wpath("fitted_absurd.json"),
              "cal_absurd") == 3);
}
