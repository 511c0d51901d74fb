// Command-line front end: pgap <command> --config <path> [--out <dir>] [--jobs <n>] [--dump-field]

#include "pgap/errors.hpp"
#include "pgap/harness.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <string>

int main(int argc, char** argv)
{
    CLI::App app{"Gradient blow-up experiments for the insulated p-Laplace neck problem"};
    app.set_version_flag("--version", std::string(pgap::kToolVersion));
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    int jobs = 0;
    bool dump_field = false;

    const char* commands[][2] = {
        {"check-geometry", "Check the admissibility hypotheses and print the geometric constants"},
        {"verify-barriers", "Sample the sign conditions of the barrier functions"},
        {"solve", "Solve one neck problem"},
        {"sweep", "Solve over a range of gap distances and fit the blow-up exponent"},
        {"weighted", "Spherical eigenvalue and disk decay for the weighted reduction"},
    };
    for (const auto& [name, help] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config_path, "JSON experiment configuration")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out_dir, "Output directory (overrides output_dir)");
        sub->add_option("--jobs", jobs, "Worker threads for sweeps")->check(CLI::PositiveNumber);
        sub->add_flag("--dump-field", dump_field, "Write solution fields as CSV");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(pgap::ExitCode::usage);
    }

    const std::string command = app.get_subcommands().front()->get_name();
    pgap::ExperimentConfig config;
    try {
        config = pgap::load_config(config_path);
    } catch (const pgap::UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return static_cast<int>(pgap::ExitCode::usage);
    }

    pgap::RunOptions options;
    if (!out_dir.empty()) options.out_dir = out_dir;
    if (jobs > 0) options.jobs = jobs;
    options.dump_field = dump_field;
    return static_cast<int>(pgap::run_command(command, config, options, std::cerr));
}
