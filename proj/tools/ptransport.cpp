// ptransport: run declarative transport scenarios from JSON files.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "pathtransport/scenario.hpp"

namespace {

struct Loaded {
    pt::Json doc;
    std::string error;
};

Loaded load(const std::string& file) {
    std::ifstream in(file);
    if (!in) return {{}, "cannot open '" + file + "'"};
    try {
        return {pt::Json::parse(in), {}};
    } catch (const pt::Json::parse_error& e) {
        return {{}, file + ": invalid JSON: " + e.what()};
    }
}

pt::Json error_report(const std::string& message) {
    return pt::Json{{"status", "error"}, {"error", {{"kind", "config"}, {"message", message}}}};
}

int emit(const pt::Json& report, const std::string& format, const std::string& path) {
    const std::string text = format == "csv" ? pt::render_csv(report) : pt::render_json(report) + "\n";
    if (path.empty()) {
        std::cout << text;
        return 0;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out || !(out << text)) {
        std::cerr << "ptransport: cannot write '" << path << "'\n";
        return 2;
    }
    return 0;
}

void print_table(const pt::Geometry& g) {
    std::cout << g.name << "\n  " << g.description << "\n";
    const auto& t = g.coefficient_table;
    for (std::size_t i = 0; i < t.size(); ++i)
        for (std::size_t j = 0; j < t[i].size(); ++j)
            for (std::size_t a = 0; a < t[i][j].size(); ++a)
                if (t[i][j][a] != "0")
                    std::cout << "  Gamma^" << i + 1 << "_{." << j + 1 << a + 1 << "} = " << t[i][j][a] << "\n";
    if (!g.metric_table.empty()) {
        std::cout << "  metric:";
        for (const auto& row : g.metric_table) {
            std::cout << " [";
            for (std::size_t k = 0; k < row.size(); ++k) std::cout << (k ? ", " : "") << row[k];
            std::cout << "]";
        }
        std::cout << "\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Linear transports along paths: transport, derivations, torsion, curvature, flat frames"};
    app.require_subcommand(1);

    std::string config_file, output_path, format;
    std::optional<std::uint64_t> seed;
    std::optional<double> fixed_step;

    auto* run = app.add_subcommand("run", "Run a scenario and write its report");
    run->add_option("config", config_file, "Scenario JSON file")->required();
    run->add_option("--output,-o", output_path, "Write the report here instead of stdout");
    run->add_option("--format", format, "Report format")->check(CLI::IsMember({"json", "csv"}));
    run->add_option("--seed", seed, "Seed for randomized property suites");
    run->add_option("--fixed-step", fixed_step, "Use fixed-step RK4 with this step (deterministic output)")
        ->check(CLI::PositiveNumber);

    auto* validate = app.add_subcommand("validate", "Check a scenario against the schema without running it");
    validate->add_option("config", config_file, "Scenario JSON file")->required();

    app.add_subcommand("list-geometries", "List built-in geometries and their coefficients");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (app.got_subcommand("list-geometries")) {
        for (const auto& name : pt::builtin_geometry_names()) print_table(pt::builtin_geometry(name));
        return 0;
    }

    const Loaded loaded = load(config_file);
    if (!loaded.error.empty()) {
        std::cerr << "ptransport: " << loaded.error << "\n";
        if (app.got_subcommand("run")) emit(error_report(loaded.error), format.empty() ? "json" : format, output_path);
        return 2;
    }

    if (app.got_subcommand("validate")) {
        try {
            const auto cfg = pt::parse_scenario(loaded.doc);
            std::cout << "ok: task " << cfg.task_name << ", config hash " << pt::config_hash(cfg.canonical) << "\n";
            return 0;
        } catch (const pt::Error& e) {
            std::cerr << "ptransport: " << e.what() << "\n";
            return pt::exit_code_for(e);
        }
    }

    pt::RunOverrides overrides;
    overrides.seed = seed;
    overrides.fixed_step = fixed_step;
    if (!format.empty()) overrides.format = format;
    if (!output_path.empty()) overrides.output_path = output_path;

    // The destination may come from the config itself.
    std::string fmt = format.empty() ? "json" : format, dest = output_path;
    try {
        const auto cfg = pt::parse_scenario(loaded.doc, overrides);
        fmt = cfg.format;
        dest = cfg.output_path;
    } catch (const pt::Error&) {
    }

    const auto started = std::chrono::steady_clock::now();
    const pt::ScenarioOutcome outcome = pt::run_scenario(loaded.doc, overrides);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (outcome.exit_code != 0 && outcome.report.contains("error"))
        std::cerr << "ptransport: " << outcome.report["error"].value("message", std::string("error")) << "\n";
    std::cerr << "ptransport: finished in " << secs << " s\n";
    if (const int rc = emit(outcome.report, fmt, dest); rc != 0) return rc;
    return outcome.exit_code;
}
