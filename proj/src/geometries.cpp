#include "pathtransport/geometries.hpp"

#include <cmath>
#include <numbers>

namespace pt {

namespace {

Tensor3 zeros3(int m, int n) { return Tensor3({m, m, n}); }
Tensor4 zeros4(int m, int n) { return Tensor4({m, m, n, n}); }

Geometry euclidean_cartesian() {
    ConnectionField conn(
        ChartSpec(2, 2), [](const Vector&) { return zeros3(2, 2); }, [](const Vector&) { return zeros4(2, 2); });
    return {"euclidean-cartesian",
            "flat plane in Cartesian coordinates (x1, x2); all coefficients vanish",
            conn,
            [](const Vector&) { return Matrix::Identity(2, 2).eval(); },
            {{{"0", "0"}, {"0", "0"}}, {{"0", "0"}, {"0", "0"}}},
            {{"1", "0"}, {"0", "1"}},
            {}};
}

// x1 = r, x2 = phi.
Geometry euclidean_polar() {
    ConnectionField conn(
        ChartSpec(2, 2),
        [](const Vector& x) {
            Tensor3 c = zeros3(2, 2);
            const double r = x[0];
            c(0, 1, 1) = -r;
            c(1, 0, 1) = 1.0 / r;
            c(1, 1, 0) = 1.0 / r;
            return c;
        },
        [](const Vector& x) {
            Tensor4 d = zeros4(2, 2);
            const double r = x[0];
            d(0, 1, 1, 0) = -1.0;
            d(1, 0, 1, 0) = -1.0 / (r * r);
            d(1, 1, 0, 0) = -1.0 / (r * r);
            return d;
        });
    return {"euclidean-polar",
            "flat plane in polar coordinates (x1 = r, x2 = phi); Levi-Civita connection",
            conn,
            [](const Vector& x) {
                Matrix g = Matrix::Identity(2, 2);
                g(1, 1) = x[0] * x[0];
                return g;
            },
            {{{"0", "0"}, {"0", "-x1"}}, {{"0", "1/x1"}, {"1/x1", "0"}}},
            {{"1", "0"}, {"0", "x1^2"}},
            {0.0, 2.0 * std::numbers::pi}};
}

// Unit sphere, x1 = theta, x2 = phi.
Geometry sphere() {
    ConnectionField conn(
        ChartSpec(2, 2),
        [](const Vector& x) {
            Tensor3 c = zeros3(2, 2);
            const double s = std::sin(x[0]), co = std::cos(x[0]);
            c(0, 1, 1) = -s * co;
            c(1, 0, 1) = co / s;
            c(1, 1, 0) = co / s;
            return c;
        },
        [](const Vector& x) {
            Tensor4 d = zeros4(2, 2);
            const double s = std::sin(x[0]);
            d(0, 1, 1, 0) = -std::cos(2.0 * x[0]);
            d(1, 0, 1, 0) = -1.0 / (s * s);
            d(1, 1, 0, 0) = -1.0 / (s * s);
            return d;
        });
    return {"sphere",
            "unit round sphere (x1 = theta, x2 = phi); Levi-Civita connection",
            conn,
            [](const Vector& x) {
                Matrix g = Matrix::Identity(2, 2);
                const double s = std::sin(x[0]);
                g(1, 1) = s * s;
                return g;
            },
            {{{"0", "0"}, {"0", "-sin(x1)*cos(x1)"}}, {{"0", "cos(x1)/sin(x1)"}, {"cos(x1)/sin(x1)", "0"}}},
            {{"1", "0"}, {"0", "sin(x1)^2"}},
            {0.0, 2.0 * std::numbers::pi}};
}

// Only Gamma^1_{.12} = 1: flat with torsion.
Geometry torsion_constant() {
    ConnectionField conn(
        ChartSpec(2, 2),
        [](const Vector&) {
            Tensor3 c = zeros3(2, 2);
            c(0, 0, 1) = 1.0;
            return c;
        },
        [](const Vector&) { return zeros4(2, 2); });
    return {"torsion-constant",
            "constant non-symmetric connection on the plane with Gamma^1_{.12} = 1, all others 0",
            conn,
            {},
            {{{"0", "1"}, {"0", "0"}}, {{"0", "0"}, {"0", "0"}}},
            {},
            {}};
}

// Coefficients that vanish in the frame rotated by angle x1:
// Gamma^1_{.21} = 1, Gamma^2_{.11} = -1. Flat, with torsion.
Geometry gauge_rotation() {
    ConnectionField conn(
        ChartSpec(2, 2),
        [](const Vector&) {
            Tensor3 c = zeros3(2, 2);
            c(0, 1, 0) = 1.0;
            c(1, 0, 0) = -1.0;
            return c;
        },
        [](const Vector&) { return zeros4(2, 2); });
    return {"gauge-rotation",
            "pure-gauge connection of the frame rotated by angle x1 (flat, torsionful)",
            conn,
            [](const Vector&) { return Matrix::Identity(2, 2).eval(); },
            {{{"0", "0"}, {"1", "0"}}, {{"-1", "0"}, {"0", "0"}}},
            {{"1", "0"}, {"0", "1"}},
            {}};
}

std::vector<Expression> parse_all(const std::vector<std::string>& src, const std::vector<std::string>& vars) {
    std::vector<Expression> out;
    out.reserve(src.size());
    for (const auto& s : src) out.push_back(Expression::parse(s, vars));
    return out;
}

Vector eval_all(const std::vector<Expression>& exprs, std::span<const double> at) {
    Vector v(static_cast<Eigen::Index>(exprs.size()));
    for (std::size_t k = 0; k < exprs.size(); ++k) v[static_cast<Eigen::Index>(k)] = exprs[k].evaluate(at);
    return v;
}

}  // namespace

const std::vector<std::string>& builtin_geometry_names() {
    static const std::vector<std::string> names{"euclidean-cartesian", "euclidean-polar", "sphere",
                                                "torsion-constant", "gauge-rotation"};
    return names;
}

Geometry builtin_geometry(std::string_view name) {
    if (name == "euclidean-cartesian") return euclidean_cartesian();
    if (name == "euclidean-polar") return euclidean_polar();
    if (name == "sphere") return sphere();
    if (name == "torsion-constant") return torsion_constant();
    if (name == "gauge-rotation") return gauge_rotation();
    throw ConfigError("unknown built-in geometry '" + std::string(name) + "'");
}

std::vector<std::string> chart_variables(int n) {
    std::vector<std::string> vars;
    for (int k = 1; k <= n; ++k) vars.push_back("x" + std::to_string(k));
    return vars;
}

ConnectionField expression_connection(int base_dim, int fiber_dim, const CoefficientTable& table) {
    const int n = base_dim, m = fiber_dim;
    const ChartSpec chart(n, m);
    if (static_cast<int>(table.size()) != m) throw ConfigError("coefficient table needs fiber_dim rows");
    const auto vars = chart_variables(n);
    std::vector<Expression> coeff, partials;  // coeff[(i*m + j)*n + a], partials[...*n + b]
    for (const auto& row : table) {
        if (static_cast<int>(row.size()) != m) throw ConfigError("coefficient table needs fiber_dim columns");
        for (const auto& cell : row) {
            if (static_cast<int>(cell.size()) != n) throw ConfigError("each coefficient entry needs base_dim expressions");
            for (const auto& src : cell) {
                Expression e = Expression::parse(src, vars);
                for (int b = 0; b < n; ++b) partials.push_back(e.derivative(b));
                coeff.push_back(std::move(e));
            }
        }
    }
    return ConnectionField(
        chart,
        [coeff, m, n](const Vector& x) {
            Tensor3 c({m, m, n});
            const std::span<const double> at(x.data(), static_cast<std::size_t>(x.size()));
            c.data().clear();
            for (const auto& e : coeff) c.data().push_back(e.evaluate(at));
            return c;
        },
        [partials, m, n](const Vector& x) {
            Tensor4 d({m, m, n, n});
            const std::span<const double> at(x.data(), static_cast<std::size_t>(x.size()));
            d.data().clear();
            for (const auto& e : partials) d.data().push_back(e.evaluate(at));
            return d;
        });
}

MetricFn expression_metric(int base_dim, const MetricTable& table) {
    const auto vars = chart_variables(base_dim);
    const int m = static_cast<int>(table.size());
    std::vector<Expression> entries;
    for (const auto& row : table) {
        if (static_cast<int>(row.size()) != m) throw ConfigError("metric table must be square");
        for (const auto& src : row) entries.push_back(Expression::parse(src, vars));
    }
    return [entries, m](const Vector& x) {
        const std::span<const double> at(x.data(), static_cast<std::size_t>(x.size()));
        Matrix g(m, m);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j) g(i, j) = entries[static_cast<std::size_t>(i * m + j)].evaluate(at);
        return g;
    };
}

Path expression_path(const std::vector<std::string>& coords, Interval domain, const std::string& var) {
    if (coords.empty()) throw ConfigError("path needs at least one coordinate expression");
    const auto exprs = parse_all(coords, {var});
    std::vector<Expression> vel;
    for (const auto& e : exprs) vel.push_back(e.derivative(0));
    return Path(
        domain, [exprs](double s) { return eval_all(exprs, std::span<const double>(&s, 1)); },
        [vel](double s) { return eval_all(vel, std::span<const double>(&s, 1)); });
}

TwoParamMap expression_map(const std::vector<std::string>& coords, Interval s_domain, Interval t_domain) {
    if (coords.empty()) throw ConfigError("map needs at least one coordinate expression");
    const auto exprs = parse_all(coords, {"s", "t"});
    std::vector<Expression> ds, dt;
    for (const auto& e : exprs) {
        ds.push_back(e.derivative(0));
        dt.push_back(e.derivative(1));
    }
    auto at = [](const std::vector<Expression>& es) {
        return [es](double s, double t) {
            const double v[2] = {s, t};
            return eval_all(es, v);
        };
    };
    return TwoParamMap(s_domain, t_domain, at(exprs), at(ds), at(dt));
}

SectionAlongPath expression_section(const std::vector<std::string>& components, const std::string& var) {
    if (components.empty()) throw ConfigError("section needs at least one component expression");
    const auto exprs = parse_all(components, {var});
    std::vector<Expression> der;
    for (const auto& e : exprs) der.push_back(e.derivative(0));
    return SectionAlongPath([exprs](double s) { return eval_all(exprs, std::span<const double>(&s, 1)); },
                            [der](double s) { return eval_all(der, std::span<const double>(&s, 1)); });
}

}  // namespace pt
