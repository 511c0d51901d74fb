#include "pgap/harness.hpp"

#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

using namespace pgap;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json small_sweep()
{
    return json::parse(R"({
      "schema_version": 1,
      "seed": 7,
      "geometry": {"d": 2, "m": 4, "eps": 0.01, "R0": 0.49,
                   "profile": {"kind": "curvilinear_square", "r_tilde0": 1.0}},
      "solver": {"p": 2, "n1": 48, "n2": 8, "grading_q": 2, "L": 0.49},
      "sweep": {"eps": [0.01, 0.005, 0.0025, 0.00125], "tolerance": 1.0}
    })");
}

std::string usage_path(const json& doc)
{
    try {
        parse_config(doc);
    } catch (const UsageError& e) {
        return e.path;
    }
    return "<accepted>";
}

fs::path scratch(const std::string& name)
{
    const fs::path dir = fs::temp_directory_path() / ("pgap_test_harness_" + name);
    fs::remove_all(dir);
    return dir;
}

json read_json(const fs::path& file)
{
    std::ifstream in(file);
    return json::parse(in);
}

int run_cli(const std::string& args)
{
    const char* cli = std::getenv("PGAP_CLI");
    REQUIRE(cli != nullptr);
    const std::string cmd = std::string(cli) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(WIFEXITED(status));
    return WEXITSTATUS(status);
}

} // namespace

TEST_CASE("config errors name the offending key")
{
    json doc = small_sweep();
    CHECK(usage_path(doc) == "<accepted>");

    doc["solver"]["bogus"] = 1;
    CHECK(usage_path(doc) == "solver.bogus");

    doc = small_sweep();
    doc["sweep"]["eps"] = json::array({0.01, 0.001});
    CHECK(usage_path(doc) == "sweep.eps");

    doc = small_sweep();
    doc["sweep"]["eps"] = json::array({0.01, 0.001, 0.002, 0.0001});
    CHECK(usage_path(doc) == "sweep.eps");

    doc = small_sweep();
    doc.erase("schema_version");
    CHECK(usage_path(doc) == "schema_version");

    doc = small_sweep();
    doc["schema_version"] = 2;
    CHECK(usage_path(doc) == "schema_version");

    doc = small_sweep();
    doc["solver"]["n1"] = "many";
    CHECK(usage_path(doc) == "solver.n1");

    doc = small_sweep();
    doc["solver"]["L"] = 0.6;
    CHECK(usage_path(doc) == "solver.L");

    doc = small_sweep();
    doc["extra"] = json::object();
    CHECK(usage_path(doc) == "extra");
}

TEST_CASE("load_config reports unreadable input against --config")
{
    const fs::path dir = scratch("load");
    fs::create_directories(dir);
    std::ofstream(dir / "bad.json") << "{ not json";
    try {
        load_config(dir / "bad.json");
        FAIL("expected UsageError");
    } catch (const UsageError& e) {
        CHECK(e.path == "--config");
    }
    CHECK_THROWS_AS(load_config(dir / "missing.json"), UsageError);
}

TEST_CASE("fnv1a matches the reference vectors")
{
    CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a("foobar") == 0x85944171f73967e8ULL);
    const ExperimentConfig a = parse_config(small_sweep());
    const ExperimentConfig b = parse_config(small_sweep());
    CHECK(config_hash(a) == config_hash(b));
    json other = small_sweep();
    other["seed"] = 8;
    CHECK(config_hash(parse_config(other)) != config_hash(a));
}

TEST_CASE("identical configs give byte-identical outputs")
{
    const ExperimentConfig config = parse_config(small_sweep());
    std::ostringstream log;
    RunOptions opts;

    opts.out_dir = scratch("repeat_a");
    CHECK(run_command("sweep", config, opts, log) == ExitCode::ok);
    const json first = read_json(*opts.out_dir / "manifest.json");

    opts.out_dir = scratch("repeat_b");
    opts.jobs = 2;
    CHECK(run_command("sweep", config, opts, log) == ExitCode::ok);
    const json second = read_json(*opts.out_dir / "manifest.json");

    REQUIRE(first["files"].size() == 3);
    CHECK(first["files"] == second["files"]);
    CHECK(first["config_hash"] == second["config_hash"]);
    CHECK(first["tool_version"] == kToolVersion);

    const json fit = read_json(*opts.out_dir / "fit.json");
    CHECK(fit["fitted_exponent"].get<double>() > 0.0);
    CHECK(fit["failures"].empty());
}

TEST_CASE("sweep CSV header and row count")
{
    const ExperimentConfig config = parse_config(small_sweep());
    RunOptions opts;
    opts.out_dir = scratch("csv");
    std::ostringstream log;
    REQUIRE(run_command("sweep", config, opts, log) == ExitCode::ok);
    std::ifstream in(*opts.out_dir / "sweep.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "eps,gmax,harnack_ratio,grad_osc_ratio,osc_center,converged,outer_iters");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 4);
}

TEST_CASE("a breached exponent tolerance exits with the threshold code")
{
    json doc = small_sweep();
    doc["sweep"]["tolerance"] = 0.0;
    RunOptions opts;
    opts.out_dir = scratch("threshold");
    std::ostringstream log;
    CHECK(run_command("sweep", parse_config(doc), opts, log) == ExitCode::threshold);
    CHECK(fs::exists(*opts.out_dir / "fit.json"));
}

TEST_CASE("flat profile: admissibility fails and the sweep skips the comparison")
{
    json doc = small_sweep();
    doc["geometry"]["profile"] = {{"kind", "flat"}};
    const ExperimentConfig config = parse_config(doc);
    std::ostringstream log;
    RunOptions opts;

    opts.out_dir = scratch("flat_geometry");
    CHECK(run_command("check-geometry", config, opts, log) == ExitCode::threshold);
    const json report = read_json(*opts.out_dir / "geometry_report.json");
    CHECK(report["admissibility"]["pass"] == false);

    opts.out_dir = scratch("flat_sweep");
    CHECK(run_command("sweep", config, opts, log) == ExitCode::ok);
    const json fit = read_json(*opts.out_dir / "fit.json");
    CHECK(fit["abs_gap"].is_null());
    CHECK(fit.contains("note"));
    CHECK(std::abs(fit["fitted_exponent"].get<double>()) < 1e-8);
}

TEST_CASE("missing blocks are usage errors and still leave a manifest")
{
    json doc = small_sweep();
    doc.erase("sweep");
    RunOptions opts;
    opts.out_dir = scratch("missing");
    std::ostringstream log;
    CHECK(run_command("sweep", parse_config(doc), opts, log) == ExitCode::usage);
    const json manifest = read_json(*opts.out_dir / "manifest.json");
    REQUIRE(!manifest["tasks"].empty());
    CHECK(manifest["tasks"][0]["status"] == "failed");
    CHECK(run_command("no-such-command", parse_config(doc), opts, log) == ExitCode::usage);
}

TEST_CASE("weighted command reports alpha for the constant weight")
{
    const json doc = json::parse(R"({
      "schema_version": 1,
      "weighted": {"weight": {"kind": "constant", "value": 1.0}, "n": 128, "n_r": 200, "n_theta": 32}
    })");
    RunOptions opts;
    opts.out_dir = scratch("weighted");
    std::ostringstream log;
    CHECK(run_command("weighted", parse_config(doc), opts, log) == ExitCode::ok);
    const json w = read_json(*opts.out_dir / "weighted.json");
    CHECK(w["alpha"].get<double>() == doctest::Approx(std::sqrt(2.0) - 1.0).epsilon(1e-10));
    CHECK(fs::exists(*opts.out_dir / "decay.csv"));
}

TEST_CASE("command-line exit codes")
{
    const fs::path dir = scratch("cli");
    fs::create_directories(dir);
    CHECK(run_cli("") == 1);
    CHECK(run_cli("--version") == 0);

    json bad = small_sweep();
    bad["sweep"]["unknown"] = true;
    std::ofstream(dir / "bad.json") << bad.dump();
    CHECK(run_cli("sweep --config " + (dir / "bad.json").string() + " --out " + (dir / "bad").string()) == 1);

    std::ofstream(dir / "ok.json") << small_sweep().dump();
    CHECK(run_cli("sweep --config " + (dir / "ok.json").string() + " --out " + (dir / "ok").string()) == 0);
    CHECK(fs::exists(dir / "ok" / "manifest.json"));
    CHECK(run_cli("solve --config " + (dir / "ok.json").string() + " --out " + (dir / "solve").string()) == 0);
    CHECK(fs::exists(dir / "solve" / "solve.json"));
}
