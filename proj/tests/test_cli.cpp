#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

#ifndef AIRCOMP_CLI_PATH
#error "AIRCOMP_CLI_PATH must be defined by the build"
#endif

const std::string kCli = AIRCOMP_CLI_PATH;

struct RunResult {
    int exit_code = -1;
    std::string stdout_text;
};

RunResult run(const std::string& args) {
    const fs::path out = fs::temp_directory_path() / "aircomp_cli_stdout.txt";
    const std::string cmd = kCli + " " + args + " > " + out.string() + " 2>/dev/null";
    const int rc = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    std::ifstream f(out);
    std::stringstream ss;
    ss << f.rdbuf();
    r.stdout_text = ss.str();
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p);
    REQUIRE(f.good());
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

fs::path write_config(const std::string& name, const std::string& body) {
    const fs::path p = fs::temp_directory_path() / name;
    std::ofstream f(p);
    f << body;
    return p;
}

size_t count_lines(const std::string& s) {
    size_t n = 0;
    for (char c : s) n += c == '\n';
    return n;
}

}  // namespace

TEST_CASE("validate subcommand passes on a correct build") {
    auto r = run("validate");
    CHECK(r.exit_code == 0);
    CHECK(r.stdout_text.find("[PASS]") != std::string::npos);
    CHECK(r.stdout_text.find("[FAIL]") == std::string::npos);
}

TEST_CASE("missing or malformed config exits with code 1") {
    CHECK(run("sumber --config /nonexistent.json").exit_code == 1);
    auto bad = write_config("bad.json", "{ not json");
    CHECK(run("sumber --config " + bad.string()).exit_code == 1);
    auto nover = write_config("nover.json", R"({"decoders":["fsjd"],"snr_db":[1]})");
    CHECK(run("sumber --config " + nover.string()).exit_code == 1);
}

TEST_CASE("sumber: noiseless single-frame sweep yields zero SUM BER rows") {
    auto cfg = write_config("sb.json", R"({
      "version": 1,
      "decoders": ["fsjd", "conv-psud"],
      "users": 2,
      "scenarios": [{"scenario": "fixed-offset", "theta": 1.5707963267948966}],
      "snr_db": ["inf", "inf"],
      "frames": 1,
      "conv_info_bits": 90
    })");
    const fs::path out = fs::temp_directory_path() / "aircomp_sb";
    fs::remove_all(out);
    auto r = run("sumber --config " + cfg.string() + " --seed 7 --out " + out.string());
    REQUIRE(r.exit_code == 0);
    const auto csv = slurp(out / "sumber_fixed-offset_theta90.csv");
    CHECK(csv.find("# aircomp") == 0);
    CHECK(csv.find("decoder,users,phase_scenario") != std::string::npos);
    // 2 decoders x 2 snr points + header comment + schema line
    CHECK(count_lines(csv) == 6);
    // every data row reports zero errors
    std::stringstream ss(csv);
    std::string line;
    std::getline(ss, line);
    std::getline(ss, line);
    while (std::getline(ss, line)) CHECK(line.find(",0,") != std::string::npos);
}

TEST_CASE("sumber is byte-deterministic for a fixed seed") {
    auto cfg = write_config("det.json", R"({
      "version": 1,
      "decoders": ["rsjd"],
      "users": 2,
      "snr_db": [6.0],
      "frames": 2,
      "conv_info_bits": 90,
      "rsjd_retained": 64
    })");
    const fs::path o1 = fs::temp_directory_path() / "aircomp_d1";
    const fs::path o2 = fs::temp_directory_path() / "aircomp_d2";
    fs::remove_all(o1);
    fs::remove_all(o2);
    REQUIRE(run("sumber --config " + cfg.string() + " --seed 3 --out " + o1.string()).exit_code == 0);
    REQUIRE(run("sumber --config " + cfg.string() + " --seed 3 --out " + o2.string()).exit_code == 0);
    CHECK(slurp(o1 / "sumber_aligned.csv") == slurp(o2 / "sumber_aligned.csv"));
}

TEST_CASE("bound: alpha=0 with fine quantization zeroes the K column") {
    auto cfg = write_config("bound.json", R"({
      "version": 1,
      "gamma": 10.0,
      "rounds": 20,
      "alpha": 0.0,
      "quant_bits": 20,
      "span": 2.0,
      "w0_gap": 1.0
    })");
    const fs::path out = fs::temp_directory_path() / "aircomp_bound";
    fs::remove_all(out);
    REQUIRE(run("bound --config " + cfg.string() + " --out " + out.string()).exit_code == 0);
    const auto csv = slurp(out / "bound.csv");
    std::stringstream ss(csv);
    std::string line;
    std::getline(ss, line);  // comment
    std::getline(ss, line);  // schema
    while (std::getline(ss, line)) {
        const auto last = line.rfind(',');
        CHECK(line.substr(last + 1) == "0");
    }
}

TEST_CASE("fl: error-free and trace(0) produce identical accuracy columns") {
    auto cfg = write_config("fl.json", R"({
      "version": 1,
      "modes": ["error-free", "trace"],
      "devices": 6,
      "selected": 2,
      "users": 2,
      "rounds": 3,
      "trace_sum_ber": 0.0,
      "train_samples": 200,
      "test_samples": 100
    })");
    const fs::path out = fs::temp_directory_path() / "aircomp_fl";
    fs::remove_all(out);
    REQUIRE(run("fl --config " + cfg.string() + " --seed 2 --out " + out.string()).exit_code == 0);
    auto ef = slurp(out / "fl_error-free.csv");
    auto tr = slurp(out / "fl_trace.csv");
    // strip the mode column and compare the rest
    auto strip = [](std::string s) {
        std::string r;
        std::stringstream ss(s);
        std::string line;
        while (std::getline(ss, line)) {
            auto a = line.find(',');
            auto b = line.find(',', a + 1);
            r += a == std::string::npos ? line : line.substr(0, a) + line.substr(b);
            r += '\n';
        }
        return r;
    };
    CHECK(strip(ef) == strip(tr));
    CHECK(slurp(out / "fl_summary.csv").find("error-free") != std::string::npos);
}

TEST_CASE("phase-sweep writes one file per offset") {
    auto cfg = write_config("ps.json", R"({
      "version": 1,
      "decoders": ["conv-psud"],
      "users": 2,
      "thetas": [0.0, 1.5707963267948966],
      "snr_db": [8.0],
      "frames": 1,
      "conv_info_bits": 90
    })");
    const fs::path out = fs::temp_directory_path() / "aircomp_ps";
    fs::remove_all(out);
    REQUIRE(run("phase-sweep --config " + cfg.string() + " --out " + out.string()).exit_code == 0);
    CHECK(fs::exists(out / "phase_sweep_theta0.csv"));
    CHECK(fs::exists(out / "phase_sweep_theta90.csv"));
}
