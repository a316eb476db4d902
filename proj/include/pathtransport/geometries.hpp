#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "pathtransport/expression.hpp"
#include "pathtransport/geometry.hpp"

namespace pt {

// table[i][j][alpha] holds Gamma^i_{.j alpha} as an expression in x1..xn.
using CoefficientTable = std::vector<std::vector<std::vector<std::string>>>;
using MetricTable = std::vector<std::vector<std::string>>;
using MetricFn = std::function<Matrix(const Vector&)>;

struct Geometry {
    std::string name;
    std::string description;
    ConnectionField connection;
    MetricFn metric;  // empty when the geometry has no natural metric
    // The same geometry spelled as expressions.
    CoefficientTable coefficient_table;
    MetricTable metric_table;
    // Per-coordinate period of angular coordinates, 0 when not periodic.
    std::vector<double> periods;
};

// euclidean-cartesian, euclidean-polar, sphere, torsion-constant, gauge-rotation
const std::vector<std::string>& builtin_geometry_names();
Geometry builtin_geometry(std::string_view name);

std::vector<std::string> chart_variables(int n);  // x1..xn

// Connection from expression strings; partials are symbolic derivatives.
ConnectionField expression_connection(int base_dim, int fiber_dim, const CoefficientTable& table);
MetricFn expression_metric(int base_dim, const MetricTable& table);

// Paths, maps and sections from per-component expressions; velocities and
// derivatives are symbolic.
Path expression_path(const std::vector<std::string>& coords, Interval domain, const std::string& var = "s");
TwoParamMap expression_map(const std::vector<std::string>& coords, Interval s_domain, Interval t_domain);
SectionAlongPath expression_section(const std::vector<std::string>& components, const std::string& var = "s");

}  // namespace pt
