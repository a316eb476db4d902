#include "pathtransport/scenario.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "pathtransport/curvature.hpp"
#include "pathtransport/flat_frame.hpp"

namespace pt {

namespace {

// ---------------------------------------------------------------------------
// Schema reading

// Reads the keys of one JSON object and rejects any key nobody asked for.
class Fields {
public:
    Fields(const Json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
        if (!obj_.is_object()) fail("must be an object");
    }

    [[noreturn]] void fail(const std::string& msg) const { throw ConfigError(where_ + ": " + msg); }
    std::string path(const std::string& key) const { return where_ + "." + key; }

    const Json* get(const std::string& key) {
        seen_.insert(key);
        const auto it = obj_.find(key);
        return it == obj_.end() ? nullptr : &*it;
    }
    const Json& require(const std::string& key) {
        const Json* v = get(key);
        if (!v) fail("missing required key '" + key + "'");
        return *v;
    }
    void finish() const {
        for (const auto& [key, value] : obj_.items())
            if (!seen_.count(key)) fail("unknown key '" + key + "'");
    }

private:
    const Json& obj_;
    std::string where_;
    std::set<std::string> seen_;
};

// Decimal number or a constant expression such as "pi", "2pi", "pi/3".
double read_number(const Json& v, const std::string& where) {
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) {
        std::string s = v.get<std::string>();
        if (s == "2pi") s = "2*pi";
        try {
            return Expression::parse(s, {}).evaluate({});
        } catch (const Error& e) {
            throw ConfigError(where + ": '" + v.get<std::string>() + "' is not a number (" + e.what() + ")");
        }
    }
    throw ConfigError(where + ": expected a number");
}

double read_positive(const Json& v, const std::string& where) {
    const double x = read_number(v, where);
    if (!(x > 0.0) || !std::isfinite(x)) throw ConfigError(where + ": must be positive");
    return x;
}

int read_int(const Json& v, const std::string& where, int min_value) {
    if (!v.is_number_integer()) throw ConfigError(where + ": expected an integer");
    const auto x = v.get<long long>();
    if (x < min_value || x > 1'000'000) throw ConfigError(where + ": out of range");
    return static_cast<int>(x);
}

std::vector<double> read_numbers(const Json& v, const std::string& where) {
    if (!v.is_array()) throw ConfigError(where + ": expected an array of numbers");
    std::vector<double> out;
    for (std::size_t k = 0; k < v.size(); ++k) out.push_back(read_number(v[k], where + "[" + std::to_string(k) + "]"));
    return out;
}

std::vector<std::string> read_strings(const Json& v, const std::string& where) {
    if (!v.is_array() || v.empty()) throw ConfigError(where + ": expected a non-empty array of strings");
    std::vector<std::string> out;
    for (const auto& e : v) {
        if (!e.is_string()) throw ConfigError(where + ": expected strings");
        out.push_back(e.get<std::string>());
    }
    return out;
}

std::vector<int> read_ints(const Json& v, const std::string& where, int min_value) {
    if (!v.is_array()) throw ConfigError(where + ": expected an array of integers");
    std::vector<int> out;
    for (std::size_t k = 0; k < v.size(); ++k) out.push_back(read_int(v[k], where, min_value));
    return out;
}

std::pair<double, double> read_range(const Json& v, const std::string& where) {
    const auto r = read_numbers(v, where);
    if (r.size() != 2 || !(r[0] < r[1])) throw ConfigError(where + ": expected [lo, hi] with lo < hi");
    return {r[0], r[1]};
}

void check_expressions(const std::vector<std::string>& exprs, const std::vector<std::string>& vars,
                       const std::string& where) {
    for (const auto& e : exprs) {
        try {
            Expression::parse(e, vars);
        } catch (const SyntaxError& err) {
            throw SyntaxError(where + ": " + err.what(), err.position(), err.expected());
        }
    }
}

PathSpec read_path(const Json& v, const std::string& where) {
    Fields f(v, where);
    PathSpec p;
    p.coords = read_strings(f.require("coords"), f.path("coords"));
    check_expressions(p.coords, {"s"}, f.path("coords"));
    std::tie(p.lo, p.hi) = read_range(f.require("domain"), f.path("domain"));
    f.finish();
    return p;
}

MapSpec read_map(const Json& v, const std::string& where) {
    Fields f(v, where);
    MapSpec m;
    m.coords = read_strings(f.require("coords"), f.path("coords"));
    check_expressions(m.coords, {"s", "t"}, f.path("coords"));
    std::tie(m.s_lo, m.s_hi) = read_range(f.require("s_domain"), f.path("s_domain"));
    std::tie(m.t_lo, m.t_hi) = read_range(f.require("t_domain"), f.path("t_domain"));
    f.finish();
    return m;
}

RegionSpec read_region(const Json& v, const std::string& where) {
    Fields f(v, where);
    RegionSpec r;
    r.lo = read_numbers(f.require("lo"), f.path("lo"));
    r.hi = read_numbers(f.require("hi"), f.path("hi"));
    r.resolution = read_ints(f.require("resolution"), f.path("resolution"), 1);
    if (r.lo.size() != r.hi.size() || r.lo.size() != r.resolution.size() || r.lo.empty())
        f.fail("lo, hi and resolution must have one entry per axis");
    for (std::size_t k = 0; k < r.lo.size(); ++k)
        if (!(r.lo[k] < r.hi[k])) f.fail("lo must be below hi on every axis");
    f.finish();
    return r;
}

std::vector<std::pair<double, double>> read_points(const Json& v, const std::string& where) {
    if (!v.is_array() || v.empty()) throw ConfigError(where + ": expected a non-empty array of [s, t] pairs");
    std::vector<std::pair<double, double>> out;
    for (std::size_t k = 0; k < v.size(); ++k) {
        const auto p = read_numbers(v[k], where + "[" + std::to_string(k) + "]");
        if (p.size() != 2) throw ConfigError(where + ": each point is [s, t]");
        out.emplace_back(p[0], p[1]);
    }
    return out;
}

GeometrySpec read_geometry(const Json& v) {
    GeometrySpec g;
    if (v.is_string()) {
        g.builtin = v.get<std::string>();
        const auto& names = builtin_geometry_names();
        if (std::find(names.begin(), names.end(), g.builtin) == names.end())
            throw ConfigError("geometry: unknown built-in geometry '" + g.builtin + "'");
        return g;
    }
    Fields f(v, "geometry");
    g.base_dim = read_int(f.require("base_dim"), f.path("base_dim"), 1);
    g.fiber_dim = read_int(f.require("fiber_dim"), f.path("fiber_dim"), 1);
    const Json& table = f.require("coefficients");
    const auto vars = chart_variables(g.base_dim);
    if (!table.is_array() || static_cast<int>(table.size()) != g.fiber_dim)
        f.fail("coefficients must be an m x m x n array of expression strings");
    for (const auto& row : table) {
        if (!row.is_array() || static_cast<int>(row.size()) != g.fiber_dim)
            f.fail("coefficients must be an m x m x n array of expression strings");
        std::vector<std::vector<std::string>> cells;
        for (const auto& cell : row) {
            auto exprs = read_strings(cell, f.path("coefficients"));
            if (static_cast<int>(exprs.size()) != g.base_dim) f.fail("each coefficient entry needs base_dim expressions");
            check_expressions(exprs, vars, f.path("coefficients"));
            cells.push_back(std::move(exprs));
        }
        g.coefficients.push_back(std::move(cells));
    }
    if (const Json* metric = f.get("metric")) {
        if (!metric->is_array() || static_cast<int>(metric->size()) != g.fiber_dim)
            f.fail("metric must be an m x m array of expression strings");
        for (const auto& row : *metric) {
            auto exprs = read_strings(row, f.path("metric"));
            if (static_cast<int>(exprs.size()) != g.fiber_dim) f.fail("metric must be square");
            check_expressions(exprs, vars, f.path("metric"));
            g.metric.push_back(std::move(exprs));
        }
    }
    if (const Json* periods = f.get("periods")) {
        g.periods = read_numbers(*periods, f.path("periods"));
        if (static_cast<int>(g.periods.size()) != g.base_dim) f.fail("periods needs one entry per coordinate");
        for (double p : g.periods)
            if (!(p >= 0.0) || !std::isfinite(p)) f.fail("periods must be non-negative (0 = not periodic)");
    }
    f.finish();
    return g;
}

IntegratorOptions read_integrator(const Json& v) {
    Fields f(v, "integrator");
    IntegratorOptions o;
    std::string method = "adaptive";
    if (const Json* m = f.get("method")) {
        if (!m->is_string()) f.fail("method must be \"adaptive\" or \"rk4\"");
        method = m->get<std::string>();
    }
    if (method == "adaptive") {
        o.method = IntegratorOptions::Method::adaptive;
    } else if (method == "rk4") {
        o.method = IntegratorOptions::Method::fixed_rk4;
    } else {
        f.fail("method must be \"adaptive\" or \"rk4\"");
    }
    if (const Json* x = f.get("rtol")) o.rtol = read_positive(*x, f.path("rtol"));
    if (const Json* x = f.get("atol")) o.atol = read_positive(*x, f.path("atol"));
    if (const Json* x = f.get("step")) o.fixed_step = read_positive(*x, f.path("step"));
    f.finish();
    return o;
}

TaskSpec read_task(const std::string& name, const Json& params) {
    Fields f(params, "params");
    auto opt_positive = [&](const char* key) -> std::optional<double> {
        if (const Json* x = f.get(key)) return read_positive(*x, f.path(key));
        return std::nullopt;
    };
    TaskSpec out;
    if (name == "transport") {
        TransportTask t;
        t.path = read_path(f.require("path"), f.path("path"));
        t.from = read_number(f.require("from"), f.path("from"));
        t.to = read_number(f.require("to"), f.path("to"));
        if (const Json* v = f.get("vector")) t.vector = read_numbers(*v, f.path("vector"));
        out = t;
    } else if (name == "derivation") {
        DerivationTask t;
        t.path = read_path(f.require("path"), f.path("path"));
        Fields sec(f.require("section"), f.path("section"));
        t.section = read_strings(sec.require("components"), sec.path("components"));
        check_expressions(t.section, {"s"}, sec.path("components"));
        sec.finish();
        t.s = read_number(f.require("s"), f.path("s"));
        if (const Json* v = f.get("eps")) {
            t.eps = read_numbers(*v, f.path("eps"));
            for (std::size_t k = 0; k < t.eps.size(); ++k)
                if (!(t.eps[k] > 0.0) || (k > 0 && !(t.eps[k] < t.eps[k - 1])))
                    f.fail("eps must be positive and strictly decreasing");
            if (t.eps.empty()) f.fail("eps must not be empty");
        }
        out = t;
    } else if (name == "torsion") {
        TorsionTask t;
        t.map = read_map(f.require("map"), f.path("map"));
        t.points = read_points(f.require("points"), f.path("points"));
        out = t;
    } else if (name == "curvature") {
        CurvatureTask t;
        t.map = read_map(f.require("map"), f.path("map"));
        t.points = read_points(f.require("points"), f.path("points"));
        t.h = opt_positive("h");
        out = t;
    } else if (name == "certify-flat") {
        CertifyFlatTask t;
        t.region = read_region(f.require("region"), f.path("region"));
        t.threshold = opt_positive("threshold");
        out = t;
    } else if (name == "build-frame") {
        BuildFrameTask t;
        t.region = read_region(f.require("region"), f.path("region"));
        t.basepoint = read_numbers(f.require("basepoint"), f.path("basepoint"));
        if (const Json* v = f.get("axis_order")) t.axis_order = read_ints(*v, f.path("axis_order"), 1);
        if (const Json* v = f.get("residual_paths")) t.residual_paths = read_int(*v, f.path("residual_paths"), 1);
        if (const Json* v = f.get("residual_samples")) t.residual_samples = read_int(*v, f.path("residual_samples"), 1);
        t.threshold = opt_positive("threshold");
        out = t;
    } else if (name == "holonomy") {
        HolonomyTask t;
        t.path = read_path(f.require("path"), f.path("path"));
        if (auto tol = opt_positive("closure_tol")) t.closure_tol = *tol;
        out = t;
    } else if (name == "verify-props") {
        VerifyPropsTask t;
        if (const Json* v = f.get("samples")) t.samples = read_int(*v, f.path("samples"), 1);
        if (const Json* v = f.get("region")) t.region = read_region(*v, f.path("region"));
        out = t;
    } else {
        throw ConfigError("task: unknown task '" + name +
                          "' (expected transport, derivation, torsion, curvature, certify-flat, build-frame, "
                          "holonomy or verify-props)");
    }
    f.finish();
    return out;
}

// ---------------------------------------------------------------------------
// Task execution

struct Context {
    const ScenarioConfig& config;
    Geometry geometry;
    CoefficientFunctional gamma;
};

Path make_path(const PathSpec& p) { return expression_path(p.coords, Interval(p.lo, p.hi)); }
TwoParamMap make_map(const MapSpec& m) {
    return expression_map(m.coords, Interval(m.s_lo, m.s_hi), Interval(m.t_lo, m.t_hi));
}
Box make_box(const RegionSpec& r) {
    return {Eigen::Map<const Vector>(r.lo.data(), static_cast<Eigen::Index>(r.lo.size())),
            Eigen::Map<const Vector>(r.hi.data(), static_cast<Eigen::Index>(r.hi.size()))};
}

void require_chart_dim(const Context& ctx, std::size_t dim, const char* what) {
    if (static_cast<int>(dim) != ctx.geometry.connection.base_dim())
        throw ConfigError(std::string(what) + " dimension does not match the geometry's base_dim");
}

Json run_transport(const Context& ctx, const TransportTask& t) {
    require_chart_dim(ctx, t.path.coords.size(), "path");
    const Path path = make_path(t.path);
    const TransportMatrix h = transport_matrix(ctx.gamma, path, t.from, t.to, ctx.config.integrator);
    Json r{{"H", indexed({"i", "j"}, h.matrix)},
           {"from", t.from},
           {"to", t.to},
           {"est_error", h.est_error},
           {"steps", h.steps},
           {"residual_from_identity", max_abs((h.matrix - Matrix::Identity(h.matrix.rows(), h.matrix.cols())).eval())}};
    if (t.vector) {
        const Vector v = Eigen::Map<const Vector>(t.vector->data(), static_cast<Eigen::Index>(t.vector->size()));
        r["transported"] = indexed({"i"}, apply_transport(h, v));
    }
    return r;
}

Json run_derivation(const Context& ctx, const DerivationTask& t) {
    require_chart_dim(ctx, t.path.coords.size(), "path");
    const Path path = make_path(t.path);
    const SectionAlongPath section = expression_section(t.section);
    const DerivationLimit lim = derivation_limit(ctx.gamma, path, section, t.s, t.eps, ctx.config.integrator);
    Json quotients = Json::array();
    for (std::size_t k = 0; k < lim.eps.size(); ++k)
        quotients.push_back({{"eps", lim.eps[k]}, {"q", indexed({"i"}, lim.quotients[k])}, {"error", lim.errors[k]}});
    Json r{{"s", t.s},
           {"analytic", indexed({"i"}, lim.analytic)},
           {"limit", indexed({"i"}, lim.value)},
           {"quotients", quotients},
           {"fitted_constant", lim.fitted_constant},
           {"fitted_order", lim.fitted_order ? Json(*lim.fitted_order) : Json(nullptr)},
           {"converges_linearly", lim.converges_linearly},
           {"limit_minus_analytic", max_abs((lim.value - lim.analytic).eval())}};
    if (lim.backward_value) r["backward_limit"] = indexed({"i"}, *lim.backward_value);
    return r;
}

Json run_torsion(const Context& ctx, const TorsionTask& t) {
    require_chart_dim(ctx, t.map.coords.size(), "map");
    const TwoParamMap eta = make_map(t.map);
    const ConnectionField& conn = ctx.geometry.connection;
    Json points = Json::array();
    for (const auto& [s, tt] : t.points) {
        const Vector tv = torsion_vector(ctx.gamma, eta, s, tt, ctx.config.fd_step);
        const Vector x = eta.point(s, tt);
        const Tensor3 tensor = torsion_tensor(conn, x);
        const Vector contracted = contract_torsion(tensor, eta.partial_s(s, tt), eta.partial_t(s, tt));
        points.push_back({{"s", s},
                          {"t", tt},
                          {"x", indexed({"alpha"}, x)},
                          {"T", indexed({"i"}, tv)},
                          {"torsion_tensor", indexed({"i", "j", "k"}, tensor)},
                          {"tensor_contraction_gap", max_abs((tv - contracted).eval())}});
    }
    return Json{{"points", points}};
}

Json run_curvature(const Context& ctx, const CurvatureTask& t) {
    require_chart_dim(ctx, t.map.coords.size(), "map");
    const TwoParamMap eta = make_map(t.map);
    const ConnectionField& conn = ctx.geometry.connection;
    Json points = Json::array();
    double worst = 0.0;
    for (const auto& [s, tt] : t.points) {
        const CurvatureMatrix cm = curvature_matrix(ctx.gamma, eta, s, tt, t.h);
        const Vector x = eta.point(s, tt);
        const Tensor4 r = curvature_tensor(conn, x);
        const Matrix contracted = contract_curvature(r, eta.partial_s(s, tt), eta.partial_t(s, tt));
        const double gap = max_abs((cm.matrix - contracted).eval());
        worst = std::max(worst, gap);
        points.push_back({{"s", s},
                          {"t", tt},
                          {"x", indexed({"alpha"}, x)},
                          {"R", indexed({"i", "j"}, cm.matrix)},
                          {"est_error", cm.est_error},
                          {"step", cm.step},
                          {"curvature_tensor", indexed({"i", "j", "a", "b"}, r)},
                          {"tensor_contraction", indexed({"i", "j"}, contracted)},
                          {"tensor_contraction_gap", gap}});
    }
    return Json{{"points", points}, {"max_tensor_contraction_gap", worst}};
}

Json certificate_json(const FlatnessCertificate& c) {
    return Json{{"max_curvature_norm", c.max_curvature_norm},
                {"worst_point", indexed({"alpha"}, c.worst_point)},
                {"threshold", c.threshold},
                {"resolution", c.resolution},
                {"verdict", c.flat ? "flat" : "not-flat"}};
}

Json run_certify(const Context& ctx, const CertifyFlatTask& t) {
    require_chart_dim(ctx, t.region.lo.size(), "region");
    const auto cert = flatness_certificate(ctx.geometry.connection, make_box(t.region), t.region.resolution, t.threshold);
    return certificate_json(cert);
}

Json run_build_frame(const Context& ctx, const BuildFrameTask& t) {
    require_chart_dim(ctx, t.region.lo.size(), "region");
    require_chart_dim(ctx, t.basepoint.size(), "basepoint");
    const ConnectionField& conn = ctx.geometry.connection;
    const Box box = make_box(t.region);
    const Vector base = Eigen::Map<const Vector>(t.basepoint.data(), static_cast<Eigen::Index>(t.basepoint.size()));

    FlatFrameOptions opts;
    for (int a : t.axis_order) opts.axis_order.push_back(a - 1);
    opts.flat_threshold = t.threshold;
    opts.residual_paths = t.residual_paths;
    opts.residual_samples = t.residual_samples;
    opts.seed = ctx.config.seed;
    const FlatFrameResult frame = build_flat_frame(conn, base, box, t.region.resolution, opts);

    Json r{{"certificate", certificate_json(frame.certificate)},
           {"residual", frame.residual},
           {"basepoint", t.basepoint}};

    // Frames at the corners of the grid.
    Json corners = Json::array();
    const Grid& grid = frame.grid();
    const int n = conn.base_dim();
    for (int mask = 0; mask < (1 << n); ++mask) {
        std::vector<int> idx(static_cast<std::size_t>(n));
        for (int a = 0; a < n; ++a)
            idx[static_cast<std::size_t>(a)] = (mask >> a) & 1 ? grid.resolution()[static_cast<std::size_t>(a)] - 1 : 0;
        const std::size_t flat = grid.flat_index(idx);
        corners.push_back({{"x", indexed({"alpha"}, grid.node(flat))}, {"A", indexed({"i", "i'"}, frame.node_frame(flat))}});
    }
    r["corner_frames"] = corners;

    // Sweep in reversed axis order and compare at every node.
    if (n >= 2) {
        FlatFrameOptions rev = opts;
        rev.axis_order.clear();
        for (int a = n - 1; a >= 0; --a) rev.axis_order.push_back(a);
        if (!opts.axis_order.empty()) rev.axis_order.assign(opts.axis_order.rbegin(), opts.axis_order.rend());
        rev.residual_paths = 1;
        rev.residual_samples = 1;
        const FlatFrameResult other = build_flat_frame(conn, base, box, t.region.resolution, rev);
        double gap = 0.0;
        for (std::size_t k = 0; k < grid.size(); ++k)
            gap = std::max(gap, max_abs((frame.node_frame(k) - other.node_frame(k)).eval()));
        r["axis_order_discrepancy"] = gap;
    }

    if (conn.fiber_dim() == n) {
        const FrameField field = frame.frame();
        double worst = 0.0, worst_mismatch = 0.0;
        for (std::size_t k = 0; k < grid.size(); ++k) {
            const auto obs = holonomic_obstruction(conn, field, grid.node(k));
            worst = std::max(worst, obs.max_norm);
            for (std::size_t e = 0; e < obs.commutators.size(); ++e)
                worst_mismatch = std::max(worst_mismatch, std::abs(obs.commutators.data()[e] -
                                                                   obs.torsion_prediction.data()[e]));
        }
        r["max_commutator_norm"] = worst;
        r["commutator_torsion_mismatch"] = worst_mismatch;
    }
    return r;
}

Json run_holonomy(const Context& ctx, const HolonomyTask& t) {
    require_chart_dim(ctx, t.path.coords.size(), "path");
    const Path loop = make_path(t.path);
    const TransportMatrix h = loop_holonomy(ctx.gamma, loop, ctx.config.integrator, t.closure_tol, ctx.geometry.periods);
    const Vector base = loop.point(loop.domain().lo);
    Json r{{"H", indexed({"i", "j"}, h.matrix)},
           {"est_error", h.est_error},
           {"steps", h.steps},
           {"basepoint", indexed({"alpha"}, base)}};
    if (ctx.geometry.metric && h.matrix.rows() == 2) {
        const Matrix g = ctx.geometry.metric(base);
        r["rotation_angle"] = rotation_angle(h.matrix, g);
        r["angle_frame"] = "orthonormal frame from Gram-Schmidt of the coordinate basis against the metric at the base point";
    } else {
        r["rotation_angle"] = nullptr;
        r["angle_frame"] = "none (no metric supplied; raw matrix only)";
    }
    return r;
}

Box default_region(const Context& ctx) {
    const std::string& name = ctx.config.geometry.builtin;
    const auto box = [](double a, double b, double c, double d) {
        return Box{Eigen::Vector2d(a, c), Eigen::Vector2d(b, d)};
    };
    if (name == "euclidean-polar") return box(0.5, 2.0, 0.0, std::numbers::pi);
    if (name == "sphere") return box(0.3, std::numbers::pi - 0.3, 0.0, 2.0 * std::numbers::pi);
    if (!name.empty()) return box(-1.0, 1.0, -1.0, 1.0);
    throw ConfigError("params.region is required for expression-defined geometries");
}

Json property(const std::string& name, double value, double tolerance, bool pass) {
    return Json{{"name", name}, {"value", value}, {"tolerance", tolerance}, {"pass", pass}};
}

Json run_verify(const Context& ctx, const VerifyPropsTask& t) {
    const ConnectionField& conn = ctx.geometry.connection;
    const Box box = t.region ? make_box(*t.region) : default_region(ctx);
    if (box.dim() != conn.base_dim()) throw ConfigError("region dimension does not match the geometry");
    const std::vector<int> res = t.region ? t.region->resolution : std::vector<int>(static_cast<std::size_t>(box.dim()), 9);
    const IntegratorOptions& io = ctx.config.integrator;
    std::mt19937_64 rng(ctx.config.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const auto paths = random_test_paths(box, t.samples, ctx.config.seed);
    const auto maps = random_test_maps(box, t.samples, ctx.config.seed + 1);
    Json props = Json::array();
    bool all_pass = true;
    auto add = [&](Json p) {
        all_pass = all_pass && p["pass"].get<bool>();
        props.push_back(std::move(p));
    };

    // Transport group laws. Values are raw max-abs discrepancies; the
    // tolerance is the smallest per-sample bound 10 (rtol ||H|| + atol).
    const Matrix eye = Matrix::Identity(conn.fiber_dim(), conn.fiber_dim());
    double identity = 0.0, composition = 0.0, inverse = 0.0;
    double composition_tol = std::numeric_limits<double>::infinity(), inverse_tol = composition_tol;
    for (const Path& p : paths) {
        const double s = unit(rng), tt = unit(rng), r = unit(rng);
        identity = std::max(identity, max_abs((transport_matrix(ctx.gamma, p, s, s, io).matrix - eye).eval()));
        const auto hst = transport_matrix(ctx.gamma, p, s, tt, io);
        const auto htr = transport_matrix(ctx.gamma, p, tt, r, io);
        const auto hsr = transport_matrix(ctx.gamma, p, s, r, io);
        const auto hts = transport_matrix(ctx.gamma, p, tt, s, io);
        composition = std::max(composition, max_abs((htr.matrix * hst.matrix - hsr.matrix).eval()));
        composition_tol = std::min(composition_tol, 10.0 * (io.rtol * max_abs(hsr.matrix) + io.atol));
        inverse = std::max(inverse, max_abs((hst.matrix * hts.matrix - eye).eval()));
        inverse_tol = std::min(inverse_tol, 10.0 * (io.rtol * max_abs(hst.matrix) + io.atol));
    }
    add(property("transport_identity", identity, 0.0, identity == 0.0));
    if (io.method == IntegratorOptions::Method::adaptive) {
        add(property("transport_composition", composition, composition_tol, composition <= composition_tol));
        add(property("transport_inverse", inverse, inverse_tol, inverse <= inverse_tol));
    } else {
        // Fixed-step runs are judged against their own error estimates.
        add(property("transport_composition", composition, 1e-6, composition <= 1e-6));
        add(property("transport_inverse", inverse, 1e-6, inverse <= 1e-6));
    }

    // Derivation limit against the analytic form.
    double worst_order = std::numeric_limits<double>::infinity();
    for (const Path& p : paths) {
        const double s0 = 0.2 + 0.6 * unit(rng);
        const double a = unit(rng), b = 1.0 + unit(rng);
        std::vector<std::string> comps;
        for (int i = 0; i < conn.fiber_dim(); ++i) {
            std::ostringstream os;
            os.precision(17);
            os << "sin(" << b * (i + 1) << "*s + " << a << ") + " << 0.5 * (i + 1) << "*s^2";
            comps.push_back(os.str());
        }
        const std::vector<double> eps{1e-2, 1e-3, 1e-4};
        const auto lim = derivation_limit(ctx.gamma, p, expression_section(comps), s0, eps, io);
        worst_order = std::min(worst_order, lim.fitted_order.value_or(std::numeric_limits<double>::infinity()));
    }
    // No fitted order means every quotient error sat at the roundoff floor.
    Json order = property("derivation_limit_min_order", 0.0, 0.9, worst_order >= 0.9);
    order["value"] = std::isfinite(worst_order) ? Json(worst_order) : Json(nullptr);
    add(order);

    // Torsion antisymmetry under transposition of the map.
    if (conn.fiber_dim() == conn.base_dim()) {
        double anti = 0.0;
        for (const auto& eta : maps) {
            const double s = 0.1 + 0.8 * unit(rng), tt = 0.1 + 0.8 * unit(rng);
            const Vector a = torsion_vector(ctx.gamma, eta, s, tt, ctx.config.fd_step);
            const Vector b = torsion_vector(ctx.gamma, eta.transposed(), tt, s, ctx.config.fd_step);
            anti = std::max(anti, max_abs((a + b).eval()));
        }
        add(property("torsion_antisymmetry", anti, 1e-8, anti < 1e-8));
    }

    // Curvature: tensor antisymmetry and the contraction identity.
    double anti_r = 0.0, gap = 0.0;
    for (const auto& eta : maps) {
        const double s = 0.1 + 0.8 * unit(rng), tt = 0.1 + 0.8 * unit(rng);
        const Tensor4 r = curvature_tensor(conn, eta.point(s, tt));
        for (int i = 0; i < r.extent(0); ++i)
            for (int j = 0; j < r.extent(1); ++j)
                for (int al = 0; al < r.extent(2); ++al)
                    for (int be = 0; be < r.extent(3); ++be)
                        anti_r = std::max(anti_r, std::abs(r(i, j, al, be) + r(i, j, be, al)));
        const std::pair<double, double> sample[] = {{s, tt}};
        gap = std::max(gap, curvature_contraction_gap(conn, eta, sample));
    }
    add(property("curvature_tensor_antisymmetry", anti_r, 0.0, anti_r == 0.0));
    add(property("curvature_contraction_gap", gap, 1e-5, gap < 1e-5));

    const auto cert = flatness_certificate(conn, box, res);
    const Json region{{"lo", std::vector<double>(box.lo.data(), box.lo.data() + box.lo.size())},
                      {"hi", std::vector<double>(box.hi.data(), box.hi.data() + box.hi.size())},
                      {"resolution", res}};
    return Json{{"properties", props}, {"all_pass", all_pass}, {"flatness", certificate_json(cert)}, {"region", region}};
}

}  // namespace

int exit_code_for(const Error& e) {
    const std::string kind = e.kind();
    return kind == "config" || kind == "syntax" ? 2 : 3;
}

ScenarioConfig parse_scenario(const Json& doc, const RunOverrides& overrides) {
    Fields f(doc, "scenario");
    ScenarioConfig c;
    c.geometry = read_geometry(f.require("geometry"));
    const Json& task = f.require("task");
    if (!task.is_string()) f.fail("task must be a string");
    c.task_name = task.get<std::string>();
    const Json* params = f.get("params");
    c.task = read_task(c.task_name, params ? *params : Json::object());
    if (const Json* v = f.get("integrator")) c.integrator = read_integrator(*v);
    if (const Json* v = f.get("fd_step")) c.fd_step = read_positive(*v, "scenario.fd_step");
    if (const Json* v = f.get("seed")) {
        if (!v->is_number_unsigned()) f.fail("seed must be a non-negative integer");
        c.seed = v->get<std::uint64_t>();
    }
    if (const Json* v = f.get("output")) {
        Fields out(*v, "output");
        if (const Json* fmt = out.get("format")) {
            if (!fmt->is_string()) out.fail("format must be \"json\" or \"csv\"");
            c.format = fmt->get<std::string>();
        }
        if (const Json* p = out.get("path")) {
            if (!p->is_string()) out.fail("path must be a string");
            c.output_path = p->get<std::string>();
        }
        out.finish();
    }
    f.finish();

    if (overrides.seed) c.seed = *overrides.seed;
    if (overrides.fixed_step) {
        if (!(*overrides.fixed_step > 0.0)) throw ConfigError("--fixed-step must be positive");
        c.integrator = IntegratorOptions::rk4(*overrides.fixed_step);
    }
    if (overrides.format) c.format = *overrides.format;
    if (overrides.output_path) c.output_path = *overrides.output_path;
    if (c.format != "json" && c.format != "csv") throw ConfigError("output.format must be \"json\" or \"csv\"");

    c.canonical = doc;
    c.canonical["seed"] = c.seed;
    if (overrides.fixed_step) c.canonical["integrator"] = Json{{"method", "rk4"}, {"step", *overrides.fixed_step}};
    c.canonical.erase("output");
    return c;
}

Geometry resolve_geometry(const GeometrySpec& spec) {
    if (!spec.builtin.empty()) return builtin_geometry(spec.builtin);
    Geometry g{"expression", "connection defined by expression strings",
               expression_connection(spec.base_dim, spec.fiber_dim, spec.coefficients),
               {},
               spec.coefficients,
               spec.metric,
               spec.periods};
    if (!spec.metric.empty()) g.metric = expression_metric(spec.base_dim, spec.metric);
    return g;
}

ScenarioOutcome run_scenario(const ScenarioConfig& config) {
    const auto started = std::chrono::steady_clock::now();
    ScenarioOutcome out;
    out.report = Json{{"config_hash", config_hash(config.canonical)},
                      {"task", config.task_name},
                      {"geometry", config.geometry.builtin.empty() ? "expression" : config.geometry.builtin},
                      {"seed", config.seed},
                      {"integrator", config.integrator.method == IntegratorOptions::Method::adaptive
                                         ? Json{{"method", "adaptive"}, {"rtol", config.integrator.rtol},
                                                {"atol", config.integrator.atol}}
                                         : Json{{"method", "rk4"}, {"step", config.integrator.fixed_step}}}};
    try {
        Geometry geometry = resolve_geometry(config.geometry);
        const CoefficientFunctional gamma = connection_functional(geometry.connection, config.fd_step);
        const Context ctx{config, std::move(geometry), gamma};
        out.report["result"] = std::visit(
            [&](const auto& task) -> Json {
                using T = std::decay_t<decltype(task)>;
                if constexpr (std::is_same_v<T, TransportTask>) return run_transport(ctx, task);
                if constexpr (std::is_same_v<T, DerivationTask>) return run_derivation(ctx, task);
                if constexpr (std::is_same_v<T, TorsionTask>) return run_torsion(ctx, task);
                if constexpr (std::is_same_v<T, CurvatureTask>) return run_curvature(ctx, task);
                if constexpr (std::is_same_v<T, CertifyFlatTask>) return run_certify(ctx, task);
                if constexpr (std::is_same_v<T, BuildFrameTask>) return run_build_frame(ctx, task);
                if constexpr (std::is_same_v<T, HolonomyTask>) return run_holonomy(ctx, task);
                if constexpr (std::is_same_v<T, VerifyPropsTask>) return run_verify(ctx, task);
            },
            config.task);
        out.report["status"] = "ok";
        if (config.task_name == "verify-props" && !out.report["result"]["all_pass"].get<bool>()) {
            out.report["status"] = "property-failure";
            out.exit_code = 3;
        }
    } catch (const Error& e) {
        out.report["status"] = "error";
        Json err{{"kind", e.kind()}, {"message", e.what()}};
        if (const auto* c = dynamic_cast<const ConvergenceError*>(&e)) err["tau"] = c->tau();
        if (const auto* f = dynamic_cast<const FlatnessError*>(&e)) err["max_curvature"] = f->max_curvature();
        if (const auto* s = dynamic_cast<const SyntaxError*>(&e)) {
            err["position"] = s->position();
            err["expected"] = s->expected();
        }
        out.report["error"] = err;
        out.exit_code = exit_code_for(e);
    }
    // Wall-clock time would break byte-identical reports in fixed-step mode.
    if (config.integrator.method == IntegratorOptions::Method::adaptive) {
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        out.report["timing"] = Json{{"wall_seconds", secs}};
    }
    return out;
}

ScenarioOutcome run_scenario(const Json& doc, const RunOverrides& overrides) {
    try {
        return run_scenario(parse_scenario(doc, overrides));
    } catch (const Error& e) {
        ScenarioOutcome out;
        Json err{{"kind", e.kind()}, {"message", e.what()}};
        if (const auto* s = dynamic_cast<const SyntaxError*>(&e)) {
            err["position"] = s->position();
            err["expected"] = s->expected();
        }
        out.report = Json{{"status", "error"}, {"error", err}};
        out.exit_code = exit_code_for(e);
        return out;
    }
}

}  // namespace pt
