#include "pgap/harness.hpp"

#include "pgap/errors.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <initializer_list>
#include <ostream>
#include <sstream>

namespace pgap {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------- parsing

std::string join(const std::string& path, const std::string& key)
{
    return path.empty() ? key : path + "." + key;
}

void require_object(const json& j, const std::string& path)
{
    if (!j.is_object()) throw UsageError(path.empty() ? "<root>" : path, "expected an object");
}

void reject_unknown(const json& j, const std::string& path, std::initializer_list<const char*> allowed)
{
    for (const auto& item : j.items()) {
        bool known = false;
        for (const char* key : allowed) known = known || item.key() == key;
        if (!known) throw UsageError(join(path, item.key()), "unknown key");
    }
}

double get_number(const json& j, const std::string& path, const char* key, std::optional<double> fallback)
{
    const auto it = j.find(key);
    if (it == j.end()) {
        if (!fallback) throw UsageError(join(path, key), "required key is missing");
        return *fallback;
    }
    if (!it->is_number()) throw UsageError(join(path, key), "expected a number");
    const double value = it->get<double>();
    if (!std::isfinite(value)) throw UsageError(join(path, key), "expected a finite number");
    return value;
}

int get_int(const json& j, const std::string& path, const char* key, std::optional<int> fallback)
{
    const auto it = j.find(key);
    if (it == j.end()) {
        if (!fallback) throw UsageError(join(path, key), "required key is missing");
        return *fallback;
    }
    if (!it->is_number_integer()) throw UsageError(join(path, key), "expected an integer");
    return it->get<int>();
}

bool get_bool(const json& j, const std::string& path, const char* key, bool fallback)
{
    const auto it = j.find(key);
    if (it == j.end()) return fallback;
    if (!it->is_boolean()) throw UsageError(join(path, key), "expected a boolean");
    return it->get<bool>();
}

std::string get_string(const json& j, const std::string& path, const char* key)
{
    const auto it = j.find(key);
    if (it == j.end()) throw UsageError(join(path, key), "required key is missing");
    if (!it->is_string()) throw UsageError(join(path, key), "expected a string");
    return it->get<std::string>();
}

std::vector<double> get_numbers(const json& j, const std::string& path, const char* key, bool required)
{
    const auto it = j.find(key);
    if (it == j.end()) {
        if (required) throw UsageError(join(path, key), "required key is missing");
        return {};
    }
    if (!it->is_array()) throw UsageError(join(path, key), "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t k = 0; k < it->size(); ++k) {
        const json& v = (*it)[k];
        if (!v.is_number()) throw UsageError(join(path, key) + "[" + std::to_string(k) + "]", "expected a number");
        out.push_back(v.get<double>());
    }
    return out;
}

/// Runs a module-level validation and re-labels its ParameterError with a key path.
template <class F>
void validated(const std::string& path, F&& check)
{
    try {
        check();
    } catch (const ParameterError& e) {
        throw UsageError(path, e.what());
    } catch (const GeometryError& e) {
        throw UsageError(path, e.what());
    } catch (const DomainError& e) {
        throw UsageError(path, e.what());
    }
}

ProfileSpec parse_profile(const json& j, const std::string& path, double m)
{
    require_object(j, path);
    const std::string kind = get_string(j, path, "kind");
    if (kind == "curvilinear_square") {
        reject_unknown(j, path, {"kind", "r_tilde0"});
        const double r0 = get_number(j, path, "r_tilde0", 1.0);
        if (!(r0 > 0.0)) throw UsageError(join(path, "r_tilde0"), "must be positive");
        return ProfileSpec::curvilinear_square(m, r0);
    }
    if (kind == "power") {
        reject_unknown(j, path, {"kind", "lambda", "symmetric"});
        const double lambda = get_number(j, path, "lambda", std::nullopt);
        if (!(lambda > 0.0)) throw UsageError(join(path, "lambda"), "must be positive");
        return ProfileSpec::power(m, lambda, get_bool(j, path, "symmetric", true));
    }
    if (kind == "flat") {
        reject_unknown(j, path, {"kind"});
        return ProfileSpec::flat(m);
    }
    throw UsageError(join(path, "kind"), "expected curvilinear_square, power or flat");
}

GeometryBlock parse_geometry(const json& j)
{
    const std::string path = "geometry";
    require_object(j, path);
    reject_unknown(j, path,
                   {"d", "m", "eps", "profile", "kappa", "R0", "mu0", "admissibility_samples", "p", "beta"});

    GeometryBlock block;
    GapGeometry& g = block.geometry;
    g.d = get_int(j, path, "d", 2);
    g.m = get_number(j, path, "m", std::nullopt);
    g.eps = get_number(j, path, "eps", 1e-3);
    g.R0 = get_number(j, path, "R0", std::nullopt);
    if (j.contains("mu0")) g.mu0 = get_number(j, path, "mu0", std::nullopt);
    if (!j.contains("profile")) throw UsageError(join(path, "profile"), "required key is missing");
    validated(join(path, "m"), [&] {
        if (!(g.m >= 2.0)) throw ParameterError("m must be >= 2");
    });
    g.profile = parse_profile(j.at("profile"), join(path, "profile"), g.m);
    block.admissibility_samples = get_int(j, path, "admissibility_samples", 64);
    if (block.admissibility_samples < 16) throw UsageError(join(path, "admissibility_samples"), "must be >= 16");
    block.p = get_number(j, path, "p", 2.0);
    if (!(block.p > 1.0)) throw UsageError(join(path, "p"), "must exceed 1");
    block.beta = get_number(j, path, "beta", 0.5);
    if (!(block.beta > 0.0 && block.beta < 1.0)) throw UsageError(join(path, "beta"), "must lie in (0, 1)");
    validated(path, [&] { g.validate(); });

    if (j.contains("kappa")) {
        const std::string kpath = join(path, "kappa");
        const json& k = j.at("kappa");
        require_object(k, kpath);
        reject_unknown(k, kpath, {"kappa1", "kappa2", "kappa3", "kappa4"});
        g.kappa.kappa1 = get_number(k, kpath, "kappa1", std::nullopt);
        g.kappa.kappa2 = get_number(k, kpath, "kappa2", std::nullopt);
        g.kappa.kappa3 = get_number(k, kpath, "kappa3", std::nullopt);
        g.kappa.kappa4 = get_number(k, kpath, "kappa4", std::nullopt);
        if (!(g.kappa.kappa1 > 0.0)) throw UsageError(join(kpath, "kappa1"), "must be positive");
        if (!(g.kappa.kappa2 >= g.kappa.kappa1)) throw UsageError(join(kpath, "kappa2"), "must be >= kappa1");
        if (!(g.kappa.kappa3 > 0.0)) throw UsageError(join(kpath, "kappa3"), "must be positive");
        if (!(g.kappa.kappa4 > 0.0)) throw UsageError(join(kpath, "kappa4"), "must be positive");
        block.kappa_given = true;
    } else {
        // Tightest bounds fitting the profile; profiles without a positive
        // lower bound keep the unit defaults so the (H1) check can fail.
        AdmissibilityReport estimate;
        validated(join(path, "R0"), [&] { estimate = check_admissibility(g, block.admissibility_samples); });
        if (estimate.estimated.kappa1 > 0.0) g.kappa = estimate.estimated;
    }
    return block;
}

SolverBlock parse_solver(const json& j, const std::optional<GeometryBlock>& geometry)
{
    const std::string path = "solver";
    require_object(j, path);
    reject_unknown(j, path,
                   {"p", "sigma", "tol_nonlinear", "max_outer", "damping", "n1", "n2", "grading_q", "lateral_value",
                    "L"});
    SolverBlock block;
    SolverConfig& c = block.config;
    c.p = get_number(j, path, "p", std::nullopt);
    if (j.contains("sigma")) c.sigma = get_number(j, path, "sigma", std::nullopt);
    c.tol_nonlinear = get_number(j, path, "tol_nonlinear", c.tol_nonlinear);
    c.max_outer = get_int(j, path, "max_outer", c.max_outer);
    c.damping = get_number(j, path, "damping", c.damping);
    c.n1 = get_int(j, path, "n1", c.n1);
    c.n2 = get_int(j, path, "n2", c.n2);
    c.grading_q = get_number(j, path, "grading_q", c.grading_q);
    c.lateral_value = get_number(j, path, "lateral_value", c.lateral_value);
    validated(path, [&] { c.validate(); });

    if (j.contains("L")) {
        block.L = get_number(j, path, "L", std::nullopt);
    } else if (geometry) {
        block.L = geometry->geometry.R0;
    } else {
        throw UsageError(join(path, "L"), "required when no geometry block is given");
    }
    if (!(block.L > 0.0)) throw UsageError(join(path, "L"), "must be positive");
    if (geometry && block.L > geometry->geometry.R0) throw UsageError(join(path, "L"), "must not exceed geometry.R0");
    return block;
}

SweepBlock parse_sweep(const json& j)
{
    const std::string path = "sweep";
    require_object(j, path);
    reject_unknown(j, path, {"eps", "measure_tau", "harnack_r", "tolerance"});
    SweepBlock block;
    block.eps = get_numbers(j, path, "eps", true);
    if (block.eps.size() < 4) throw UsageError(join(path, "eps"), "need at least 4 gap distances");
    for (std::size_t k = 0; k < block.eps.size(); ++k) {
        if (!(block.eps[k] > 0.0)) throw UsageError(join(path, "eps"), "gap distances must be positive");
        if (k > 0 && !(block.eps[k] < block.eps[k - 1])) {
            throw UsageError(join(path, "eps"), "gap distances must be strictly decreasing");
        }
    }
    block.measure_tau = get_number(j, path, "measure_tau", block.measure_tau);
    block.harnack_r = get_number(j, path, "harnack_r", block.harnack_r);
    if (!(block.harnack_r > 0.0)) throw UsageError(join(path, "harnack_r"), "must be positive");
    block.tolerance = get_number(j, path, "tolerance", block.tolerance);
    if (!(block.tolerance >= 0.0)) throw UsageError(join(path, "tolerance"), "must be non-negative");
    return block;
}

BarrierParams parse_barrier_params(const json& j, const std::string& path)
{
    require_object(j, path);
    reject_unknown(j, path, {"p", "tau", "gamma"});
    BarrierParams params;
    params.p = get_number(j, path, "p", std::nullopt);
    params.tau = get_number(j, path, "tau", std::nullopt);
    params.gamma = get_number(j, path, "gamma", std::nullopt);
    return params;
}

BarrierBlock parse_barrier(const json& j, const std::optional<GeometryBlock>& geometry)
{
    const std::string path = "barrier";
    require_object(j, path);
    reject_unknown(j, path, {"eps", "supersolution", "subsolution", "grid"});
    if (!geometry) throw UsageError("geometry", "required by the barrier block");
    const GapGeometry& g = geometry->geometry;

    BarrierBlock block;
    block.eps = get_number(j, path, "eps", block.eps);
    if (!(block.eps > 0.0)) throw UsageError(join(path, "eps"), "must be positive");
    if (j.contains("supersolution")) {
        const std::string sub = join(path, "supersolution");
        block.supersolution = parse_barrier_params(j.at("supersolution"), sub);
        const BarrierParams& b = *block.supersolution;
        validated(sub, [&] { (void)BarrierSpec::supersolution(g.d, g.m, b.p, b.tau, b.gamma); });
    }
    if (j.contains("subsolution")) {
        const std::string sub = join(path, "subsolution");
        block.subsolution = parse_barrier_params(j.at("subsolution"), sub);
        const BarrierParams& b = *block.subsolution;
        validated(sub, [&] { (void)BarrierSpec::subsolution(g.m, b.p, b.tau, b.gamma, block.eps); });
        const auto* cs = std::get_if<CurvilinearSquare>(&g.profile.kind());
        if (g.d != 2 || cs == nullptr || cs->r_tilde0 != 1.0) {
            throw UsageError(sub, "needs a d = 2 curvilinear square with r_tilde0 = 1");
        }
    }
    if (!block.supersolution && !block.subsolution) throw UsageError(path, "no barrier requested");
    if (j.contains("grid")) {
        const std::string gpath = join(path, "grid");
        const json& grid = j.at("grid");
        require_object(grid, gpath);
        reject_unknown(grid, gpath, {"n_radial", "n_height"});
        block.grid.n_radial = get_int(grid, gpath, "n_radial", block.grid.n_radial);
        block.grid.n_height = get_int(grid, gpath, "n_height", block.grid.n_height);
        if (block.grid.n_radial < 2) throw UsageError(join(gpath, "n_radial"), "must be >= 2");
        if (block.grid.n_height < 2) throw UsageError(join(gpath, "n_height"), "must be >= 2");
    }
    return block;
}

WeightFunction parse_weight(const json& j, const std::string& path)
{
    require_object(j, path);
    const std::string kind = get_string(j, path, "kind");
    WeightFunction w;
    validated(path, [&] {
        if (kind == "constant") {
            reject_unknown(j, path, {"kind", "value"});
            w = WeightFunction::constant(get_number(j, path, "value", 1.0));
        } else if (kind == "cosine") {
            reject_unknown(j, path, {"kind", "mean", "amplitude", "mode"});
            w = WeightFunction::cosine(get_number(j, path, "mean", 1.0), get_number(j, path, "amplitude", std::nullopt),
                                       get_int(j, path, "mode", std::nullopt));
        } else if (kind == "fourier") {
            reject_unknown(j, path, {"kind", "mean", "cos", "sin"});
            w = WeightFunction::fourier(get_number(j, path, "mean", 1.0), get_numbers(j, path, "cos", false),
                                        get_numbers(j, path, "sin", false));
        } else {
            throw UsageError(join(path, "kind"), "expected constant, cosine or fourier");
        }
    });
    return w;
}

WeightedBlock parse_weighted(const json& j)
{
    const std::string path = "weighted";
    require_object(j, path);
    reject_unknown(j, path, {"weight", "d", "n", "n_r", "n_theta", "quad_n", "boundary", "alpha_tolerance"});
    WeightedBlock block;
    if (!j.contains("weight")) throw UsageError(join(path, "weight"), "required key is missing");
    block.weight = parse_weight(j.at("weight"), join(path, "weight"));
    block.weight_json = j.at("weight");
    block.d = get_int(j, path, "d", block.d);
    if (block.d < 3) throw UsageError(join(path, "d"), "must be >= 3");
    block.n = get_int(j, path, "n", block.n);
    if (block.n < 32 || block.n % 4 != 0) throw UsageError(join(path, "n"), "must be a multiple of 4 and >= 32");
    block.n_r = get_int(j, path, "n_r", block.n_r);
    if (block.n_r < 8) throw UsageError(join(path, "n_r"), "must be >= 8");
    block.n_theta = get_int(j, path, "n_theta", block.n_theta);
    if (block.n_theta < 8) throw UsageError(join(path, "n_theta"), "must be >= 8");
    block.quad_n = get_int(j, path, "quad_n", block.quad_n);
    if (block.quad_n < 64) throw UsageError(join(path, "quad_n"), "must be >= 64");
    if (j.contains("boundary")) {
        const std::string bpath = join(path, "boundary");
        const json& b = j.at("boundary");
        require_object(b, bpath);
        reject_unknown(b, bpath, {"mean", "cos", "sin"});
        block.boundary_mean = get_number(b, bpath, "mean", 0.0);
        block.boundary_cos = get_number(b, bpath, "cos", 0.0);
        block.boundary_sin = get_number(b, bpath, "sin", 0.0);
    }
    block.alpha_tolerance = get_number(j, path, "alpha_tolerance", block.alpha_tolerance);
    if (!(block.alpha_tolerance > 0.0)) throw UsageError(join(path, "alpha_tolerance"), "must be positive");
    return block;
}

// ---------------------------------------------------------------- output

std::string hex64(std::uint64_t value)
{
    std::ostringstream out;
    out << std::hex << std::setw(16) << std::setfill('0') << value;
    return out.str();
}

std::string utc_now()
{
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream out;
    out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return out.str();
}

json optional_number(const std::optional<double>& value)
{
    return value ? json(*value) : json(nullptr);
}

/// Single aggregation point for every file a command writes.
class OutputDir {
public:
    explicit OutputDir(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

    void write(const std::string& name, const std::string& content)
    {
        const fs::path target = root_ / name;
        std::ofstream out(target, std::ios::binary);
        if (!out) throw NumericError("cannot open " + target.string() + " for writing");
        out << content;
        out.close();
        if (!out) throw NumericError("failed writing " + target.string());
        files_.push_back(FileEntry{name, content.size(), hex64(fnv1a(content))});
    }

    void write_json(const std::string& name, const json& doc) { write(name, doc.dump(2) + "\n"); }

    const fs::path& root() const { return root_; }
    const std::vector<FileEntry>& files() const { return files_; }

private:
    fs::path root_;
    std::vector<FileEntry> files_;
};

std::ostringstream csv_stream()
{
    std::ostringstream out;
    out << std::setprecision(17);
    return out;
}

json barrier_params_json(const BarrierSpec& s)
{
    return json{{"kind", to_string(s.kind)}, {"d", s.d},         {"m", s.m},
                {"p", s.p},                  {"tau", s.tau},     {"gamma", s.gamma},
                {"coeff", s.coeff},          {"threshold", s.threshold}, {"eps", s.eps}};
}

GapGeometry with_eps(GapGeometry g, double eps)
{
    g.eps = eps;
    return g;
}

// ---------------------------------------------------------------- commands

struct CommandResult {
    ExitCode code = ExitCode::ok;
    std::vector<TaskStatus> tasks;
};

const GeometryBlock& need_geometry(const ExperimentConfig& config)
{
    if (!config.geometry) throw UsageError("geometry", "required by this command");
    return *config.geometry;
}

const SolverBlock& need_solver(const ExperimentConfig& config)
{
    if (!config.solver) throw UsageError("solver", "required by this command");
    return *config.solver;
}

CommandResult cmd_check_geometry(const ExperimentConfig& config, OutputDir& out, std::ostream& log)
{
    const GeometryBlock& block = need_geometry(config);
    const AdmissibilityReport report = check_admissibility(block.geometry, block.admissibility_samples);
    const GeometryConstants constants = compute_constants(block.geometry, block.p, block.beta);

    json doc;
    doc["profile"] = block.geometry.profile.name();
    doc["kappa"] = {{"kappa1", block.geometry.kappa.kappa1},
                    {"kappa2", block.geometry.kappa.kappa2},
                    {"kappa3", block.geometry.kappa.kappa3},
                    {"kappa4", block.geometry.kappa.kappa4}};
    doc["kappa_source"] = block.kappa_given ? "config" : "estimated";
    doc["admissibility"] = to_json(report);
    doc["constants"] = to_json(constants);
    out.write_json("geometry_report.json", doc);

    log << "admissibility: " << (report.pass ? "pass" : "fail") << " (H1 " << (report.h1_pass ? "pass" : "fail")
        << ", H2 " << (report.h2_pass ? "pass" : "fail") << ", H3 " << (report.h3_pass ? "pass" : "fail") << ")\n";
    CommandResult result;
    result.tasks.push_back({"admissibility", report.pass ? "ok" : "threshold",
                            report.pass ? "" : "admissibility hypotheses violated"});
    result.code = report.pass ? ExitCode::ok : ExitCode::threshold;
    return result;
}

CommandResult cmd_verify_barriers(const ExperimentConfig& config, OutputDir& out, std::ostream& log)
{
    const GeometryBlock& gblock = need_geometry(config);
    if (!config.barrier) throw UsageError("barrier", "required by this command");
    const BarrierBlock& block = *config.barrier;
    const GapGeometry g = with_eps(gblock.geometry, block.eps);

    CommandResult result;
    auto run = [&](const BarrierSpec& spec, const BarrierVerdict& verdict, const std::string& file) {
        json doc = to_json(verdict);
        out.write_json(file, doc);
        log << to_string(spec.kind) << ": " << verdict.n_samples << " samples, " << verdict.n_violations
            << " violations, min margin " << verdict.min_margin << ", r_hat " << verdict.empirical_r_hat << "\n";
        const bool ok = verdict.pass && verdict.n_violations == 0;
        result.tasks.push_back(
            {to_string(spec.kind), ok ? "ok" : "threshold",
             ok ? "" : std::to_string(verdict.n_violations) + " violations"});
        if (!ok) result.code = ExitCode::threshold;
    };
    if (block.supersolution) {
        const BarrierParams& b = *block.supersolution;
        const BarrierSpec spec = BarrierSpec::supersolution(g.d, g.m, b.p, b.tau, b.gamma);
        run(spec, verify_supersolution(spec, g, block.grid), "supersolution.json");
    }
    if (block.subsolution) {
        const BarrierParams& b = *block.subsolution;
        const BarrierSpec spec = BarrierSpec::subsolution(g.m, b.p, b.tau, b.gamma, block.eps);
        run(spec, verify_subsolution(spec, g, block.grid), "subsolution.json");
    }
    return result;
}

CommandResult cmd_solve(const ExperimentConfig& config, const RunOptions& options, OutputDir& out, std::ostream& log)
{
    const GeometryBlock& gblock = need_geometry(config);
    const SolverBlock& sblock = need_solver(config);
    const GapGeometry& g = gblock.geometry;

    const TransformedGrid grid = build_grid(g, sblock.config, sblock.L);
    CommandResult result;
    DiscreteField field;
    try {
        field = solve(grid, sblock.config);
    } catch (const ConvergenceError& e) {
        json trace{{"converged", false}, {"error", e.what()}, {"residual_history", e.residual_history}};
        out.write_json("trace.json", trace);
        throw;
    }

    const double tau = config.sweep ? config.sweep->measure_tau : 0.5;
    const double harnack_r = config.sweep ? config.sweep->harnack_r : 0.05;
    const double radius = g.m > 2.0 + tau ? std::min(sblock.L, measurement_radius(g.m, g.eps, tau)) : sblock.L;
    const LateralFlux flux = lateral_flux(field);

    json summary;
    summary["eps"] = g.eps;
    summary["L"] = sblock.L;
    summary["p"] = field.p;
    summary["sigma"] = field.sigma;
    summary["grid"] = {{"n1", grid.n1}, {"n2", grid.n2}, {"grading_q", grid.q}};
    summary["converged"] = field.converged;
    summary["outer_iterations"] = field.outer_iterations;
    summary["measure_radius"] = radius;
    summary["gmax"] = grad_max(field, radius);
    summary["gmax_neck"] = grad_max(field, sblock.L);
    summary["flux"] = {{"left", flux.left}, {"right", flux.right}};
    if (harnack_r <= sblock.L / 2.0) {
        const HarnackResult h = harnack_ratio(field, harnack_r);
        summary["harnack"] = {{"r", harnack_r}, {"ratio", h.ratio}, {"degenerate", h.degenerate}};
    }
    out.write_json("solve.json", summary);

    json trace = to_json(field.trace);
    trace["converged"] = field.converged;
    trace["residual_history"] = field.residual_history;
    out.write_json("trace.json", trace);

    if (options.dump_field) {
        std::ostringstream csv;
        write_field_csv(field, csv);
        out.write("field.csv", csv.str());
    }
    log << "solve: eps " << g.eps << ", " << field.outer_iterations << " outer iterations, gmax "
        << summary["gmax"].get<double>() << "\n";
    result.tasks.push_back({"solve", "ok", ""});
    return result;
}

CommandResult cmd_sweep(const ExperimentConfig& config, const RunOptions& options, OutputDir& out, std::ostream& log)
{
    const GeometryBlock& gblock = need_geometry(config);
    const SolverBlock& sblock = need_solver(config);
    if (!config.sweep) throw UsageError("sweep", "required by this command");
    const SweepBlock& sw = *config.sweep;

    SweepPlan plan;
    plan.geometry = gblock.geometry;
    plan.solver = sblock.config;
    plan.L = sblock.L;
    plan.eps = sw.eps;
    plan.measure_tau = sw.measure_tau;
    plan.harnack_r = sw.harnack_r;
    plan.jobs = options.jobs.value_or(1);
    validated("sweep", [&] { plan.validate(); });

    const SweepResult sweep = run_sweep(plan, options.dump_field);

    CommandResult result;
    for (const SweepPoint& pt : sweep.points) {
        std::ostringstream name;
        name << "eps=" << std::setprecision(6) << pt.eps;
        result.tasks.push_back({name.str(), pt.error.empty() ? "ok" : "failed", pt.error});
        if (options.dump_field && pt.field) {
            std::ostringstream file;
            file << "field_" << (&pt - sweep.points.data()) << ".csv";
            std::ostringstream csv;
            write_field_csv(*pt.field, csv);
            out.write(file.str(), csv.str());
        }
    }

    std::ostringstream csv;
    write_sweep_csv(sweep, csv);
    out.write("sweep.csv", csv.str());

    std::ostringstream dat = csv_stream();
    dat << "# log10_eps log10_gmax\n";
    for (const SweepPoint& pt : sweep.points) {
        if (pt.error.empty() && pt.gmax > 0.0) dat << std::log10(pt.eps) << " " << std::log10(pt.gmax) << "\n";
    }
    out.write("plot.dat", dat.str());

    json fit;
    fit["theory_rate"] = sweep.theory.rate_2d;
    fit["regime"] = to_string(sweep.theory.regime);
    fit["failures"] = sweep.failures;
    const bool flat = gblock.geometry.profile.is_flat();
    if (!sweep.fit) {
        fit["fitted_exponent"] = nullptr;
        fit["r2"] = nullptr;
        fit["abs_gap"] = nullptr;
        fit["note"] = "fewer than 4 converged points; no fit";
        out.write_json("fit.json", fit);
        result.code = ExitCode::numeric;
        return result;
    }
    fit["fitted_exponent"] = sweep.fit->fitted_exponent;
    fit["r2"] = sweep.fit->r_squared;
    fit["intercept"] = sweep.fit->intercept;
    fit["tolerance"] = sw.tolerance;
    if (flat) {
        // No convexity: gmax does not depend on eps and there is no rate to compare.
        fit["abs_gap"] = nullptr;
        fit["note"] = "flat profile: no blow-up expected, comparison with theory skipped";
        log << "sweep: fitted exponent " << sweep.fit->fitted_exponent << " (comparison skipped)\n";
    } else {
        const double gap = std::abs(sweep.fit->fitted_exponent - sweep.theory.rate_2d);
        fit["abs_gap"] = gap;
        log << "sweep: fitted exponent " << sweep.fit->fitted_exponent << ", theory " << sweep.theory.rate_2d
            << ", gap " << gap << ", r2 " << sweep.fit->r_squared << "\n";
        if (gap > sw.tolerance) {
            result.code = ExitCode::threshold;
            result.tasks.push_back({"fit", "threshold", "fitted exponent outside tolerance"});
        } else {
            result.tasks.push_back({"fit", "ok", ""});
        }
    }
    out.write_json("fit.json", fit);
    return result;
}

CommandResult cmd_weighted(const ExperimentConfig& config, OutputDir& out, std::ostream& log)
{
    if (!config.weighted) throw UsageError("weighted", "required by this command");
    const WeightedBlock& block = *config.weighted;

    const WeightReport report = check_weight(block.weight, block.quad_n);
    if (!report.valid) {
        throw UsageError("weighted.weight", "weight violates the moment or positivity conditions");
    }
    const SphereEigenResult eig = sphere_lambda1(block.weight, block.n, block.d);

    const double mean = block.boundary_mean, bc = block.boundary_cos, bs = block.boundary_sin;
    const WeightedSolveResult disk = solve_weighted_disk(
        block.weight, [=](double t) { return mean + bc * std::cos(t) + bs * std::sin(t); }, block.n_r,
        block.n_theta);

    json doc;
    doc["lambda1"] = eig.lambda1;
    doc["alpha"] = eig.alpha;
    doc["alpha_emp"] = optional_number(disk.decay_slope);
    doc["weight_descriptor"] = block.weight.descriptor;
    doc["weight"] = block.weight_json;
    doc["grid"] = {{"n", block.n}, {"d", block.d}, {"n_r", block.n_r}, {"n_theta", block.n_theta}};
    doc["eigen"] = to_json(eig);
    doc["weight_check"] = {{"min", report.min_value},
                           {"max", report.max_value},
                           {"moment_cos", report.moment_cos},
                           {"moment_sin", report.moment_sin}};
    doc["disk"] = {{"v0", disk.v0}, {"min_v", disk.min_v}, {"max_v", disk.max_v}};

    CommandResult result;
    if (disk.decay_slope) {
        const double rel = std::abs(*disk.decay_slope - eig.alpha) / eig.alpha;
        doc["alpha_relative_gap"] = rel;
        const bool ok = rel <= block.alpha_tolerance;
        result.tasks.push_back({"decay", ok ? "ok" : "threshold", ok ? "" : "decay slope outside tolerance"});
        if (!ok) result.code = ExitCode::threshold;
    } else {
        doc["note"] = "boundary data has no oscillating part near the origin; no decay slope";
        result.tasks.push_back({"decay", "ok", "no slope"});
    }
    out.write_json("weighted.json", doc);

    std::ostringstream csv = csv_stream();
    csv << "r,sup_osc\n";
    for (std::size_t i = 0; i < disk.r.size(); ++i) csv << disk.r[i] << "," << disk.sup_osc[i] << "\n";
    out.write("decay.csv", csv.str());

    log << "weighted: lambda1 " << eig.lambda1 << ", alpha " << eig.alpha;
    if (disk.decay_slope) log << ", empirical " << *disk.decay_slope;
    log << "\n";
    return result;
}

} // namespace

// ---------------------------------------------------------------- public

ExperimentConfig parse_config(const json& doc)
{
    require_object(doc, "");
    reject_unknown(doc, "", {"schema_version", "seed", "output_dir", "geometry", "solver", "sweep", "barrier",
                             "weighted"});
    ExperimentConfig config;
    config.raw = doc;
    config.schema_version = get_int(doc, "", "schema_version", std::nullopt);
    if (config.schema_version != kSchemaVersion) {
        throw UsageError("schema_version", "unsupported version " + std::to_string(config.schema_version));
    }
    if (doc.contains("seed")) {
        const json& seed = doc.at("seed");
        if (!seed.is_number_integer() || seed.get<std::int64_t>() < 0) {
            throw UsageError("seed", "expected a non-negative integer");
        }
        config.seed = doc.at("seed").get<std::uint64_t>();
    }
    if (doc.contains("output_dir")) config.output_dir = get_string(doc, "", "output_dir");

    if (doc.contains("geometry")) config.geometry = parse_geometry(doc.at("geometry"));
    if (doc.contains("solver")) config.solver = parse_solver(doc.at("solver"), config.geometry);
    if (doc.contains("sweep")) config.sweep = parse_sweep(doc.at("sweep"));
    if (doc.contains("barrier")) config.barrier = parse_barrier(doc.at("barrier"), config.geometry);
    if (doc.contains("weighted")) config.weighted = parse_weighted(doc.at("weighted"));
    return config;
}

ExperimentConfig load_config(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) throw UsageError("--config", "cannot open " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw UsageError("--config", std::string("invalid JSON: ") + e.what());
    }
    return parse_config(doc);
}

std::uint64_t fnv1a(std::string_view bytes)
{
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (const char c : bytes) {
        hash ^= static_cast<unsigned char>(c);
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

std::string config_hash(const ExperimentConfig& config)
{
    // nlohmann::json keeps object keys sorted, so dump() is canonical.
    return hex64(fnv1a(config.raw.dump()));
}

json to_json(const RunManifest& manifest)
{
    json tasks = json::array();
    for (const auto& t : manifest.tasks) tasks.push_back({{"name", t.name}, {"status", t.status}, {"detail", t.detail}});
    json files = json::array();
    for (const auto& f : manifest.files) files.push_back({{"path", f.path}, {"bytes", f.bytes}, {"fnv1a", f.fnv1a}});
    return json{{"config_hash", manifest.config_hash},
                {"tool_version", manifest.tool_version},
                {"command", manifest.command},
                {"started_utc", manifest.started_utc},
                {"finished_utc", manifest.finished_utc},
                {"seed", manifest.seed},
                {"tasks", tasks},
                {"files", files}};
}

json to_json(const AdmissibilityReport& report)
{
    json samples = json::array();
    for (const auto& s : report.samples) {
        samples.push_back({{"rho", s.rho},
                           {"h1_lower", s.h1_lower},
                           {"h1_upper", s.h1_upper},
                           {"grad_upper", s.grad_upper},
                           {"grad_lower", s.grad_lower}});
    }
    return json{{"pass", report.pass},
                {"h1_pass", report.h1_pass},
                {"h2_pass", report.h2_pass},
                {"h3_pass", report.h3_pass},
                {"h3_margin", report.h3_margin},
                {"c2_norm_estimate", report.c2_norm_estimate},
                {"estimated_kappas",
                 {{"kappa1", report.estimated.kappa1},
                  {"kappa2", report.estimated.kappa2},
                  {"kappa3", report.estimated.kappa3},
                  {"kappa4", report.estimated.kappa4}}},
                {"estimate_method", report.estimate_method},
                {"samples", samples}};
}

json to_json(const GeometryConstants& c)
{
    return json{{"c0", c.c0},   {"c_tilde0", c.c_tilde0}, {"R01", c.R01},
                {"R02", c.R02}, {"R03", optional_number(c.R03)}, {"j0", c.j0},
                {"r01", c.r01}, {"r02", c.r02},           {"r03", c.r03},
                {"r04", c.r04}, {"beta", c.beta},         {"p", c.p}};
}

json to_json(const BarrierVerdict& v)
{
    json violations = json::array();
    for (const auto& x : v.violations) {
        violations.push_back({{"point", x.point}, {"quantity", x.quantity}, {"value", x.value}, {"margin", x.margin}});
    }
    return json{{"params", barrier_params_json(v.spec)},
                {"region", {{"description", v.region}, {"r_inner", v.r_inner}, {"r_outer", v.r_outer}}},
                {"n_samples", v.n_samples},
                {"n_interior", v.n_interior},
                {"n_boundary", v.n_boundary},
                {"n_zero_region", v.n_zero_region},
                {"n_active_interior", v.n_active_interior},
                {"n_active_boundary", v.n_active_boundary},
                {"min_margin", v.min_margin},
                {"max_margin", v.max_margin},
                {"n_violations", v.n_violations},
                {"violations", violations},
                {"empirical_r_hat", v.empirical_r_hat},
                {"degenerate", v.degenerate},
                {"pass", v.pass}};
}

json to_json(const IterationTrace& t)
{
    return json{{"method", t.method},       {"outer", t.outer},         {"linear_refinements", t.linear_refinements},
                {"energy", t.energy},       {"step_size", t.step_size}, {"residual", t.residual}};
}

json to_json(const RateFit& fit)
{
    json doc{{"eps", fit.eps},
             {"gmax", fit.gmax},
             {"fitted_exponent", fit.fitted_exponent},
             {"intercept", fit.intercept},
             {"r2", fit.r_squared},
             {"abs_gap", optional_number(fit.abs_gap)}};
    if (fit.theory) {
        doc["theory_rate"] = fit.theory->rate_2d;
        doc["regime"] = to_string(fit.theory->regime);
    }
    return doc;
}

json to_json(const SphereEigenResult& e)
{
    return json{{"lambda1", e.lambda1},
                {"lambda1_raw", e.lambda1_raw},
                {"lambda1_coarse", e.lambda1_coarse},
                {"lambda1_coarsest", e.lambda1_coarsest},
                {"null_eigenvalue", e.null_eigenvalue},
                {"alpha", e.alpha},
                {"n", e.n},
                {"d", e.d}};
}

void write_sweep_csv(const SweepResult& sweep, std::ostream& out)
{
    const auto precision = out.precision(17);
    out << "eps,gmax,harnack_ratio,grad_osc_ratio,osc_center,converged,outer_iters\n";
    for (const SweepPoint& pt : sweep.points) {
        out << pt.eps << ",";
        if (pt.error.empty()) {
            out << pt.gmax << "," << pt.harnack.ratio << ",";
            if (pt.osc_ratio) out << pt.osc_ratio->ratio;
            out << "," << pt.osc_center;
        } else {
            out << ",,,";
        }
        out << "," << (pt.converged ? 1 : 0) << "," << pt.outer_iterations << "\n";
    }
    out.precision(precision);
}

ExitCode run_command(const std::string& command, const ExperimentConfig& config, const RunOptions& options,
                     std::ostream& log)
{
    RunManifest manifest;
    manifest.command = command;
    manifest.config_hash = config_hash(config);
    manifest.seed = config.seed;
    manifest.started_utc = utc_now();

    OutputDir out(options.out_dir.value_or(fs::path(config.output_dir)));
    CommandResult result;
    try {
        if (command == "check-geometry") {
            result = cmd_check_geometry(config, out, log);
        } else if (command == "verify-barriers") {
            result = cmd_verify_barriers(config, out, log);
        } else if (command == "solve") {
            result = cmd_solve(config, options, out, log);
        } else if (command == "sweep") {
            result = cmd_sweep(config, options, out, log);
        } else if (command == "weighted") {
            result = cmd_weighted(config, out, log);
        } else {
            throw UsageError("command", "unknown command " + command);
        }
    } catch (const UsageError& e) {
        log << "usage error: " << e.what() << "\n";
        result.code = ExitCode::usage;
        result.tasks.push_back({command, "failed", e.what()});
    } catch (const ParameterError& e) {
        log << "usage error: " << e.what() << "\n";
        result.code = ExitCode::usage;
        result.tasks.push_back({command, "failed", e.what()});
    } catch (const GeometryError& e) {
        log << "usage error: " << e.what() << "\n";
        result.code = ExitCode::usage;
        result.tasks.push_back({command, "failed", e.what()});
    } catch (const std::exception& e) {
        log << "numeric failure: " << e.what() << "\n";
        result.code = ExitCode::numeric;
        result.tasks.push_back({command, "failed", e.what()});
    }

    manifest.tasks = result.tasks;
    manifest.files = out.files();
    manifest.finished_utc = utc_now();
    const std::string text = to_json(manifest).dump(2) + "\n";
    std::ofstream(out.root() / "manifest.json", std::ios::binary) << text;
    return result.code;
}

} // namespace pgap
