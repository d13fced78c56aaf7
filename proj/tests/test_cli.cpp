#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

namespace {

struct CliResult {
    int exit_code = -1;
    std::string out;
    std::map<std::string, std::string> kv;
};

// runs the CLI, captures stdout and the machine-readable summary
CliResult run_cli(const std::string& args) {
    const std::string cmd = std::string(PDHG_CLI_PATH) + " " + args + " 2>/dev/null";
    CliResult r;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::array<char, 512> buf;
    while (fgets(buf.data(), buf.size(), pipe)) r.out += buf.data();
    const int status = pclose(pipe);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::size_t pos = 0;
    while (pos < r.out.size()) {
        const std::size_t eol = r.out.find('\n', pos);
        const std::string line = r.out.substr(pos, eol - pos);
        const std::size_t eq = line.find('=');
        if (eq != std::string::npos) r.kv[line.substr(0, eq)] = line.substr(eq + 1);
        if (eol == std::string::npos) break;
        pos = eol + 1;
    }
    return r;
}

std::string scratch_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("pdhg_cli_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p.string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("toy-prop divergence exits with the dedicated code") {
    const std::string dir = scratch_dir("toyprop");
    auto r = run_cli("toy-prop --sigma 1.5 --c 100 --out-dir " + dir);
    REQUIRE(r.exit_code == 3);
    REQUIRE(r.kv["diverged"] == "true");
    REQUIRE(r.kv["matched_closed_form"] == "true");
    REQUIRE(std::stod(r.kv["max_norm"]) > 1e6);
    // the trace shows geometric growth of the dual increment
    REQUIRE(std::filesystem::exists(dir + "/trace.csv"));
}

TEST_CASE("toy-prop at the convergence boundary exits cleanly") {
    const std::string dir = scratch_dir("toyprop2");
    auto r = run_cli("toy-prop --sigma 2 --c 100 --iters 500 --out-dir " + dir);
    REQUIRE(r.exit_code == 0);
    REQUIRE(r.kv["diverged"] == "false");
    REQUIRE(std::stod(r.kv["final_u"]) < 1e-3);
}

TEST_CASE("toy-example dichotomy through the CLI") {
    const std::string dir = scratch_dir("toyex");
    auto a = run_cli("toy-example --sigma 3 --out-dir " + dir);
    REQUIRE(a.exit_code == 0);
    REQUIRE(a.kv["u_all_zero"] == "true");
    REQUIRE(a.kv["matched_closed_form"] == "true");
    auto b = run_cli("toy-example --sigma 1.5 --out-dir " + dir);
    REQUIRE(b.exit_code == 3);
    REQUIRE(b.kv["diverged"] == "true");
}

TEST_CASE("dither reports a critical, almost binary result") {
    const std::string dir = scratch_dir("dither");
    auto r = run_cli("dither --size 32 --out-dir " + dir);
    REQUIRE(r.exit_code == 0);
    // published defaults: lambda = 0.01, sigma = 2*omega = 0.16, tau = 1/sigma
    REQUIRE(std::stod(r.kv["lambda"]) == Catch::Approx(0.01));
    REQUIRE(std::stod(r.kv["sigma"]) == Catch::Approx(0.16));
    REQUIRE(std::stod(r.kv["tau"]) == Catch::Approx(6.25));
    REQUIRE(r.kv["critical"] == "true");
    REQUIRE(std::stod(r.kv["binary_fraction"]) >= 0.95);
    REQUIRE(std::filesystem::exists(dir + "/result.pgm"));
    REQUIRE(std::filesystem::exists(dir + "/thresholded.pgm"));
}

TEST_CASE("ms-denoise initialization changes the reached critical point") {
    const std::string d1 = scratch_dir("msd1");
    const std::string d2 = scratch_dir("msd2");
    const std::string common = " --size 24 --max-iter 800 --seed 5 ";
    auto a = run_cli("ms-denoise --init input" + common + "--out-dir " + d1);
    auto b = run_cli("ms-denoise --init zero" + common + "--out-dir " + d2);
    REQUIRE(a.exit_code == 0);
    REQUIRE(b.exit_code == 0);
    REQUIRE(a.kv["energy"] != b.kv["energy"]);
}

TEST_CASE("byte-identical traces for identical config and seed") {
    const std::string d1 = scratch_dir("det1");
    const std::string d2 = scratch_dir("det2");
    const std::string common = "ms-denoise --size 24 --max-iter 300 --seed 11 --out-dir ";
    auto a = run_cli(common + d1);
    const std::string trace_a = slurp(d1 + "/trace.csv");
    const std::string result_a = slurp(d1 + "/result.pgm");
    auto b = run_cli(common + d2);
    REQUIRE(a.exit_code == 0);
    REQUIRE(b.exit_code == 0);
    REQUIRE(trace_a == slurp(d2 + "/trace.csv"));
    REQUIRE(result_a == slurp(d2 + "/result.pgm"));
    // rerunning into the same directory reproduces the summary byte for
    // byte, wall_ms included (0 without --time)
    auto c = run_cli(common + d1);
    REQUIRE(c.out == a.out);
}

TEST_CASE("config errors exit with code 2") {
    SECTION("unknown flag") {
        auto r = run_cli("ms-denoise --frobnicate 3");
        REQUIRE(r.exit_code == 2);
    }
    SECTION("steps outside the regime are refused without --allow-unsafe") {
        const std::string dir = scratch_dir("unsafe");
        auto refused = run_cli("ms-denoise --size 16 --sigma 30 --out-dir " + dir);
        REQUIRE(refused.exit_code == 2);
        auto allowed = run_cli(
            "ms-denoise --size 16 --sigma 30 --max-iter 50 --allow-unsafe --out-dir " + dir);
        REQUIRE(allowed.exit_code == 0);
    }
    SECTION("bad init keyword") {
        auto r = run_cli("ms-denoise --size 16 --init sideways");
        REQUIRE(r.exit_code == 2);
    }
}

TEST_CASE("missing input exits with the I/O code") {
    auto r = run_cli("ms-denoise --input /nonexistent/file.pgm");
    REQUIRE(r.exit_code == 4);
}

TEST_CASE("run files feed the config, flags win") {
    const std::string dir = scratch_dir("runfile");
    const std::string rf = dir + "/run.json";
    {
        std::ofstream out(rf);
        out << R"({"lambda": 0.02, "size": 24, "max-iter": 120})";
    }
    auto file_only = run_cli("ms-denoise --run-file " + rf + " --out-dir " + dir);
    REQUIRE(file_only.exit_code == 0);
    REQUIRE(std::stod(file_only.kv["lambda"]) == Catch::Approx(0.02));
    auto overridden =
        run_cli("ms-denoise --run-file " + rf + " --lambda 0.3 --out-dir " + dir);
    REQUIRE(overridden.exit_code == 0);
    REQUIRE(std::stod(overridden.kv["lambda"]) == Catch::Approx(0.3));

    const std::string bad = dir + "/bad.json";
    std::ofstream(bad) << R"({"lambduh": 0.02})";
    auto rejected = run_cli("ms-denoise --run-file " + bad);
    REQUIRE(rejected.exit_code == 2);
}

TEST_CASE("ms-inpaint cracktip defaults run end to end") {
    const std::string dir = scratch_dir("crack");
    // small instance and loose stopping keep this quick
    auto r = run_cli("ms-inpaint --size 31 --max-iter 400 --tol 1e-5 --out-dir " + dir);
    REQUIRE(r.exit_code == 0);
    REQUIRE(r.kv["adaptive"] == "true");
    // published defaults for the crack-tip configuration
    REQUIRE(std::stod(r.kv["alpha"]) == Catch::Approx(96.82));
    REQUIRE(std::stod(r.kv["lambda"]) == Catch::Approx(0.5));
    REQUIRE(std::stod(r.kv["eps0"]) == Catch::Approx(0.9));
    REQUIRE(std::filesystem::exists(dir + "/result.pgm"));
}

TEST_CASE("illum emits the sorted intensity curve") {
    const std::string dir = scratch_dir("illum");
    auto r = run_cli("illum --size 24 --max-iter 400 --tol 1e-6 --out-dir " + dir);
    REQUIRE(r.exit_code == 0);
    REQUIRE(std::filesystem::exists(dir + "/curve.csv"));
    REQUIRE(std::filesystem::exists(dir + "/result.png"));
    REQUIRE(r.kv.count("plateau_fraction") == 1);
    // configured floor for the two-level tonemapping effect
    REQUIRE(std::stod(r.kv["plateau_fraction"]) >= 0.05);
}

TEST_CASE("denoise-sharpen flow writes the outer trajectory") {
    const std::string dir = scratch_dir("flow");
    auto r = run_cli(
        "denoise-sharpen --size 20 --flow-steps 3 --max-iter 300 --tol 1e-6 --out-dir " + dir);
    REQUIRE(r.exit_code == 0);
    REQUIRE(r.kv["flow_completed"] == "3");
    REQUIRE(std::filesystem::exists(dir + "/flow_1.pgm"));
    REQUIRE(std::filesystem::exists(dir + "/flow_3.pgm"));
}
