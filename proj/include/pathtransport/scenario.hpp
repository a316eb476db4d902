#pragma once

// Declarative scenarios: a JSON document names a geometry, a task and its
// parameters; run_scenario dispatches to the engine and builds a report.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"

#include "pathtransport/geometries.hpp"
#include "pathtransport/transport.hpp"

namespace pt {

using Json = nlohmann::json;

struct GeometrySpec {
    std::string builtin;  // empty for expression-defined geometries
    int base_dim = 2;
    int fiber_dim = 2;
    CoefficientTable coefficients;
    MetricTable metric;
    std::vector<double> periods;
};

struct PathSpec {
    std::vector<std::string> coords;  // in s
    double lo = 0.0, hi = 1.0;
};

struct MapSpec {
    std::vector<std::string> coords;  // in s, t
    double s_lo = 0.0, s_hi = 1.0, t_lo = 0.0, t_hi = 1.0;
};

struct RegionSpec {
    std::vector<double> lo, hi;
    std::vector<int> resolution;
};

struct TransportTask {
    PathSpec path;
    double from = 0.0, to = 1.0;
    std::optional<std::vector<double>> vector;
};
struct DerivationTask {
    PathSpec path;
    std::vector<std::string> section;
    double s = 0.5;
    std::vector<double> eps{1e-2, 1e-3, 1e-4};
};
struct TorsionTask {
    MapSpec map;
    std::vector<std::pair<double, double>> points;
};
struct CurvatureTask {
    MapSpec map;
    std::vector<std::pair<double, double>> points;
    std::optional<double> h;
};
struct CertifyFlatTask {
    RegionSpec region;
    std::optional<double> threshold;
};
struct BuildFrameTask {
    RegionSpec region;
    std::vector<double> basepoint;
    std::vector<int> axis_order;
    int residual_paths = 20;
    int residual_samples = 16;
    std::optional<double> threshold;
};
struct HolonomyTask {
    PathSpec path;
    double closure_tol = 1e-10;
};
struct VerifyPropsTask {
    int samples = 10;
    std::optional<RegionSpec> region;
};

using TaskSpec = std::variant<TransportTask, DerivationTask, TorsionTask, CurvatureTask, CertifyFlatTask,
                              BuildFrameTask, HolonomyTask, VerifyPropsTask>;

struct ScenarioConfig {
    GeometrySpec geometry;
    std::string task_name;
    TaskSpec task;
    IntegratorOptions integrator;
    double fd_step = kDefaultFdStep;
    std::uint64_t seed = 1;
    std::string format = "json";  // json | csv
    std::string output_path;      // empty = stdout
    Json canonical;               // the validated document, used for the hash
};

struct RunOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<double> fixed_step;
    std::optional<std::string> format;
    std::optional<std::string> output_path;
};

// Schema validation; throws ConfigError (unknown keys, wrong types,
// non-positive tolerances, unparsable expressions).
ScenarioConfig parse_scenario(const Json& doc, const RunOverrides& overrides = {});

Geometry resolve_geometry(const GeometrySpec& spec);

struct ScenarioOutcome {
    Json report;
    int exit_code = 0;  // 0 ok, 2 config error, 3 engine error
};

// Validates and runs. Never throws for config or engine errors: they become
// an "error" record in the report and a nonzero exit code.
ScenarioOutcome run_scenario(const Json& doc, const RunOverrides& overrides = {});
ScenarioOutcome run_scenario(const ScenarioConfig& config);

// Exit code for an error kind: 2 for config/syntax errors, 3 otherwise.
int exit_code_for(const Error& e);

// --- report helpers (report.cpp) -------------------------------------------

// {"index": [...], "values": nested arrays}; index names follow the
// upper-index-first convention.
Json indexed(const std::vector<std::string>& index, const Matrix& m);
Json indexed(const std::vector<std::string>& index, const Vector& v);
template <std::size_t R>
Json indexed(const std::vector<std::string>& index, const Tensor<R>& t);

// 64-bit FNV-1a of the canonical JSON dump, as 16 hex digits.
std::string config_hash(const Json& canonical);

// UTF-8 JSON with sorted keys.
std::string render_json(const Json& report);
// Two columns (field,value); indexed arrays flatten to name[i=1][j=2].
std::string render_csv(const Json& report);

}  // namespace pt
