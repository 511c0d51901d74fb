#pragma once

// Experiment configuration, command orchestration and run manifests.

#include "pgap/barriers.hpp"
#include "pgap/geometry.hpp"
#include "pgap/neck_solver.hpp"
#include "pgap/rates.hpp"
#include "pgap/weighted.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace pgap {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kToolVersion = "1.0.0";

enum class ExitCode : int { ok = 0, usage = 1, numeric = 2, threshold = 3 };

struct GeometryBlock {
    GapGeometry geometry;
    bool kappa_given = false;
    int admissibility_samples = 64;
    double p = 2.0;    // exponent used for the p-dependent constants
    double beta = 0.5;
};

struct SolverBlock {
    SolverConfig config;
    double L = 0.0;
};

struct SweepBlock {
    std::vector<double> eps;
    double measure_tau = 0.5;
    double harnack_r = 0.05;
    double tolerance = 0.08;
};

struct BarrierParams {
    double p = 2.0;
    double tau = 0.5;
    double gamma = 0.5;
};

struct BarrierBlock {
    double eps = 1e-4;
    std::optional<BarrierParams> supersolution;
    std::optional<BarrierParams> subsolution;
    SampleGrid grid;
};

struct WeightedBlock {
    WeightFunction weight;
    nlohmann::json weight_json;
    int d = 3;
    int n = 512;
    int n_r = 400;
    int n_theta = 64;
    int quad_n = 256;
    /// v = boundary_mean + boundary_cos cos(theta) + boundary_sin sin(theta) at r = 1.
    double boundary_mean = 0.0;
    double boundary_cos = 1.0;
    double boundary_sin = 0.0;
    double alpha_tolerance = 0.1; // relative
};

struct ExperimentConfig {
    int schema_version = kSchemaVersion;
    std::uint64_t seed = 0;
    std::string output_dir = "out";
    std::optional<GeometryBlock> geometry;
    std::optional<SolverBlock> solver;
    std::optional<SweepBlock> sweep;
    std::optional<BarrierBlock> barrier;
    std::optional<WeightedBlock> weighted;
    nlohmann::json raw;
};

/// Parses and validates every block present. Throws UsageError naming the
/// offending key path (e.g. "solver.n1").
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes);
std::string config_hash(const ExperimentConfig& config);

struct TaskStatus {
    std::string name;
    std::string status; // "ok", "failed", "threshold"
    std::string detail;
};

struct FileEntry {
    std::string path; // relative to the output directory
    std::uintmax_t bytes = 0;
    std::string fnv1a;
};

struct RunManifest {
    std::string config_hash;
    std::string tool_version = kToolVersion;
    std::string command;
    std::string started_utc;
    std::string finished_utc;
    std::uint64_t seed = 0;
    std::vector<TaskStatus> tasks;
    std::vector<FileEntry> files;
};

nlohmann::json to_json(const RunManifest& manifest);

struct RunOptions {
    std::optional<std::filesystem::path> out_dir; // overrides output_dir
    std::optional<int> jobs;
    bool dump_field = false;
};

/// Runs one of check-geometry, verify-barriers, solve, sweep, weighted and
/// writes its files plus manifest.json. Returns the exit code contract.
ExitCode run_command(const std::string& command, const ExperimentConfig& config, const RunOptions& options,
                     std::ostream& log);

// Serialisers shared by the CLI and tests.
nlohmann::json to_json(const AdmissibilityReport& report);
nlohmann::json to_json(const GeometryConstants& constants);
nlohmann::json to_json(const BarrierVerdict& verdict);
nlohmann::json to_json(const IterationTrace& trace);
nlohmann::json to_json(const RateFit& fit);
nlohmann::json to_json(const SphereEigenResult& eig);

/// Sweep report CSV: eps, gmax, harnack_ratio, grad_osc_ratio, osc_center, converged, outer_iters.
void write_sweep_csv(const SweepResult& sweep, std::ostream& out);

} // namespace pgap
