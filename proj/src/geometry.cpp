#include "pathtransport/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pt {

namespace {

// Slack for parameters that land a few ulps outside their interval.
bool within(const Interval& dom, double s) {
    const double slack = 1e-12 * std::max({1.0, std::abs(dom.lo), std::abs(dom.hi)});
    return s >= dom.lo - slack && s <= dom.hi + slack;
}

void require_finite(const Vector& v, const char* what, double at) {
    if (!v.allFinite()) {
        std::ostringstream os;
        os << what << " is not finite at parameter " << at;
        throw EvaluationError(os.str());
    }
}

void require_finite(const Matrix& m, const char* what) {
    if (!m.allFinite()) throw EvaluationError(std::string(what) + " is not finite");
}

// Central/one-sided first derivative of f on `dom` at s.
template <typename F>
auto differentiate(const F& f, const Interval& dom, double s, double h_fd) {
    const double h = scaled_step(h_fd, s);
    if (s - h >= dom.lo && s + h <= dom.hi) return ((f(s + h) - f(s - h)) / (2.0 * h)).eval();
    if (s + 2.0 * h <= dom.hi)
        return ((-3.0 * f(s) + 4.0 * f(s + h) - f(s + 2.0 * h)) / (2.0 * h)).eval();
    if (s - 2.0 * h >= dom.lo)
        return ((3.0 * f(s) - 4.0 * f(s - h) + f(s - 2.0 * h)) / (2.0 * h)).eval();
    throw DomainError("interval too short for a finite-difference stencil");
}

}  // namespace

double scaled_step(double h, double at) { return h * std::max(1.0, std::abs(at)); }

double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }
double max_abs(const Vector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

ChartSpec::ChartSpec(int n, int m) : base_dim(n), fiber_dim(m) {
    if (n < 1 || m < 1) throw ShapeError("chart dimensions must be positive");
}

Interval::Interval(double a, double b) : lo(a), hi(b) {
    if (!std::isfinite(a) || !std::isfinite(b) || !(a < b))
        throw DomainError("interval must be finite with lo < hi");
}

bool Interval::contains(double s) const noexcept { return within(*this, s); }

// ---------------------------------------------------------------------------
// Path

Path::Path(Interval domain, PointFn point, PointFn velocity)
    : domain_(domain), point_(std::move(point)), velocity_(std::move(velocity)) {
    if (!point_) throw ShapeError("path needs a point function");
    dim_ = static_cast<int>(point_(domain_.lo).size());
    if (dim_ < 1) throw ShapeError("path points must have at least one coordinate");
}

Vector Path::point(double s) const {
    if (!within(domain_, s)) {
        std::ostringstream os;
        os << "parameter " << s << " outside path domain [" << domain_.lo << ", " << domain_.hi << "]";
        throw DomainError(os.str());
    }
    Vector x = point_(s);
    require_finite(x, "path point", s);
    if (dim_ != 0 && x.size() != dim_) throw ShapeError("path point changed dimension");
    return x;
}

Vector Path::supplied_velocity(double s) const {
    if (!velocity_) throw ShapeError("path has no velocity function");
    if (!within(domain_, s)) throw DomainError("velocity requested outside path domain");
    Vector v = velocity_(s);
    require_finite(v, "path velocity", s);
    if (v.size() != dim_) throw ShapeError("path velocity has wrong dimension");
    return v;
}

Vector path_velocity(const Path& path, double s, double h_fd) {
    if (path.has_velocity()) return path.supplied_velocity(s);
    if (!path.domain().contains(s)) path.point(s);  // raises the domain error
    const double c = std::clamp(s, path.domain().lo, path.domain().hi);
    return differentiate([&](double u) { return path.point(u); }, path.domain(), c, h_fd);
}

// ---------------------------------------------------------------------------
// TwoParamMap

TwoParamMap::TwoParamMap(Interval s_domain, Interval t_domain, PointFn point, PointFn partial_s,
                         PointFn partial_t)
    : s_domain_(s_domain),
      t_domain_(t_domain),
      point_(std::move(point)),
      partial_s_(std::move(partial_s)),
      partial_t_(std::move(partial_t)) {
    if (!point_) throw ShapeError("two-parameter map needs a point function");
    dim_ = static_cast<int>(point_(s_domain_.lo, t_domain_.lo).size());
    if (dim_ < 1) throw ShapeError("map points must have at least one coordinate");
}

Vector TwoParamMap::point(double s, double t) const {
    if (!within(s_domain_, s) || !within(t_domain_, t)) {
        std::ostringstream os;
        os << "(" << s << ", " << t << ") outside the map rectangle";
        throw DomainError(os.str());
    }
    Vector x = point_(s, t);
    require_finite(x, "map point", s);
    return x;
}

Path TwoParamMap::along_s(double t) const {
    if (!within(t_domain_, t)) throw DomainError("t outside the map rectangle");
    auto pf = point_;
    Path::PointFn vel;
    if (partial_s_) vel = [ps = partial_s_, t](double s) { return ps(s, t); };
    return Path(s_domain_, [pf, t](double s) { return pf(s, t); }, std::move(vel));
}

Path TwoParamMap::along_t(double s) const {
    if (!within(s_domain_, s)) throw DomainError("s outside the map rectangle");
    auto pf = point_;
    Path::PointFn vel;
    if (partial_t_) vel = [pt_ = partial_t_, s](double t) { return pt_(s, t); };
    return Path(t_domain_, [pf, s](double t) { return pf(s, t); }, std::move(vel));
}

Vector TwoParamMap::partial_s(double s, double t, double h_fd) const {
    return path_velocity(along_s(t), s, h_fd);
}

Vector TwoParamMap::partial_t(double s, double t, double h_fd) const {
    return path_velocity(along_t(s), t, h_fd);
}

TwoParamMap TwoParamMap::transposed() const {
    auto pf = point_;
    PointFn ps, pt_;
    if (partial_t_) ps = [f = partial_t_](double s, double t) { return f(t, s); };
    if (partial_s_) pt_ = [f = partial_s_](double s, double t) { return f(t, s); };
    return TwoParamMap(t_domain_, s_domain_, [pf](double s, double t) { return pf(t, s); },
                       std::move(ps), std::move(pt_));
}

// ---------------------------------------------------------------------------
// SectionAlongPath

SectionAlongPath::SectionAlongPath(ComponentsFn components, ComponentsFn derivative)
    : components_(std::move(components)), derivative_(std::move(derivative)) {
    if (!components_) throw ShapeError("section needs a components function");
}

Vector SectionAlongPath::components(double s) const {
    Vector v = components_(s);
    require_finite(v, "section", s);
    return v;
}

Vector SectionAlongPath::derivative(double s, const Interval& domain, double h_fd) const {
    if (derivative_) {
        Vector d = derivative_(s);
        require_finite(d, "section derivative", s);
        return d;
    }
    if (!domain.contains(s)) throw DomainError("section derivative requested outside domain");
    const double c = std::clamp(s, domain.lo, domain.hi);
    return differentiate([&](double u) { return components(u); }, domain, c, h_fd);
}

// ---------------------------------------------------------------------------
// Coefficient functionals and connections

CoefficientFunctional::CoefficientFunctional(int fiber_dim, EvalFn eval)
    : fiber_dim_(fiber_dim), eval_(std::move(eval)) {
    if (fiber_dim_ < 1) throw ShapeError("fiber dimension must be positive");
    if (!eval_) throw ShapeError("coefficient functional needs an evaluator");
}

Matrix CoefficientFunctional::operator()(const Path& path, double s) const {
    Matrix g = eval_(path, s);
    if (g.rows() != fiber_dim_ || g.cols() != fiber_dim_)
        throw ShapeError("coefficient matrix has wrong shape");
    if (!g.allFinite()) {
        std::ostringstream os;
        os << "coefficient matrix is not finite at parameter " << s;
        throw EvaluationError(os.str());
    }
    return g;
}

ConnectionField::ConnectionField(ChartSpec chart, CoeffFn coeff, PartialsFn partials)
    : chart_(chart), coeff_(std::move(coeff)), partials_(std::move(partials)) {
    if (!coeff_) throw ShapeError("connection needs a coefficient function");
}

Tensor3 ConnectionField::coefficients(const Vector& x) const {
    if (x.size() != chart_.base_dim) throw ShapeError("point has wrong number of coordinates");
    Tensor3 c = coeff_(x);
    const auto& sh = c.shape();
    if (sh[0] != chart_.fiber_dim || sh[1] != chart_.fiber_dim || sh[2] != chart_.base_dim)
        throw ShapeError("connection coefficients have wrong shape");
    if (!c.all_finite()) {
        std::ostringstream os;
        os << "connection coefficients are not finite at x = (" << x.transpose() << ")";
        throw EvaluationError(os.str());
    }
    return c;
}

Tensor4 ConnectionField::partials(const Vector& x, double h) const {
    const int m = chart_.fiber_dim, n = chart_.base_dim;
    if (partials_) {
        if (x.size() != n) throw ShapeError("point has wrong number of coordinates");
        Tensor4 p = partials_(x);
        const auto& sh = p.shape();
        if (sh[0] != m || sh[1] != m || sh[2] != n || sh[3] != n)
            throw ShapeError("connection partials have wrong shape");
        if (!p.all_finite()) throw EvaluationError("connection partials are not finite");
        return p;
    }
    Tensor4 p({m, m, n, n});
    for (int beta = 0; beta < n; ++beta) {
        const double step = scaled_step(h, x[beta]);
        Vector xp = x, xm = x;
        xp[beta] += step;
        xm[beta] -= step;
        const Tensor3 cp = coefficients(xp), cm = coefficients(xm);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j)
                for (int a = 0; a < n; ++a)
                    p(i, j, a, beta) = (cp(i, j, a) - cm(i, j, a)) / (2.0 * step);
    }
    return p;
}

Matrix ConnectionField::slice(const Tensor3& coeff, int alpha) {
    const int m = coeff.extent(0);
    Matrix g(m, m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) g(i, j) = coeff(i, j, alpha);
    return g;
}

bool ConnectionField::is_symmetric_at(const Vector& x, double tol) const {
    if (chart_.fiber_dim != chart_.base_dim)
        throw TangentBundleError("symmetry needs fiber_dim == base_dim");
    const Tensor3 c = coefficients(x);
    const int n = chart_.base_dim;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = j + 1; k < n; ++k)
                if (std::abs(c(i, j, k) - c(i, k, j)) > tol) return false;
    return true;
}

CoefficientFunctional connection_functional(const ConnectionField& conn, double h_fd) {
    auto shared = std::make_shared<const ConnectionField>(conn);
    CoefficientFunctional f(conn.fiber_dim(), [shared, h_fd](const Path& path, double s) {
        const int m = shared->fiber_dim(), n = shared->base_dim();
        if (path.dim() != n) throw ShapeError("path dimension does not match the connection chart");
        const Tensor3 c = shared->coefficients(path.point(s));
        const Vector v = path_velocity(path, s, h_fd);
        Matrix g = Matrix::Zero(m, m);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j) {
                double acc = 0.0;
                for (int a = 0; a < n; ++a) acc += c(i, j, a) * v[a];
                g(i, j) = acc;
            }
        return g;
    });
    f.connection_ = std::move(shared);
    return f;
}

CoefficientFunctional zero_functional(int fiber_dim) {
    return CoefficientFunctional(fiber_dim,
                                 [fiber_dim](const Path&, double) { return Matrix::Zero(fiber_dim, fiber_dim).eval(); });
}

// ---------------------------------------------------------------------------
// FrameField

FrameField FrameField::along_path(int fiber_dim, PathFn frame, PathFn derivative, FrameBounds bounds) {
    if (fiber_dim < 1 || !frame) throw ShapeError("frame field needs a positive dimension and a function");
    FrameField f;
    f.fiber_dim_ = fiber_dim;
    f.bounds_ = bounds;
    f.path_fn_ = std::move(frame);
    f.path_derivative_ = std::move(derivative);
    return f;
}

FrameField FrameField::on_chart(int fiber_dim, ChartFn frame, ChartPartialsFn partials, FrameBounds bounds) {
    if (fiber_dim < 1 || !frame) throw ShapeError("frame field needs a positive dimension and a function");
    FrameField f;
    f.fiber_dim_ = fiber_dim;
    f.bounds_ = bounds;
    f.chart_fn_ = std::move(frame);
    f.chart_partials_ = std::move(partials);
    return f;
}

Matrix FrameField::checked(Matrix a) const {
    if (a.rows() != fiber_dim_ || a.cols() != fiber_dim_) throw ShapeError("frame matrix has wrong shape");
    require_finite(a, "frame matrix");
    return a;
}

Matrix FrameField::at(const Path& path, double s) const {
    if (chart_fn_) return checked(chart_fn_(path.point(s)));
    if (!path.domain().contains(s)) throw DomainError("frame requested outside path domain");
    return checked(path_fn_(s));
}

Matrix FrameField::at_point(const Vector& x) const {
    if (!chart_fn_) throw ShapeError("frame field is defined along a path only");
    return checked(chart_fn_(x));
}

std::vector<Matrix> FrameField::partials(const Vector& x, double h_fd) const {
    if (!chart_fn_) throw ShapeError("frame field is defined along a path only");
    if (chart_partials_) {
        auto p = chart_partials_(x);
        if (static_cast<Eigen::Index>(p.size()) != x.size()) throw ShapeError("frame partials have wrong count");
        for (auto& d : p) d = checked(std::move(d));
        return p;
    }
    std::vector<Matrix> out;
    out.reserve(static_cast<std::size_t>(x.size()));
    for (Eigen::Index b = 0; b < x.size(); ++b) {
        const double step = scaled_step(h_fd, x[b]);
        Vector xp = x, xm = x;
        xp[b] += step;
        xm[b] -= step;
        out.push_back((at_point(xp) - at_point(xm)) / (2.0 * step));
    }
    return out;
}

Matrix FrameField::derivative(const Path& path, double s, double h_fd) const {
    if (chart_fn_) {
        if (chart_partials_) {
            const Vector x = path.point(s);
            const Vector v = path_velocity(path, s, h_fd);
            const auto p = partials(x, h_fd);
            Matrix d = Matrix::Zero(fiber_dim_, fiber_dim_);
            for (std::size_t b = 0; b < p.size(); ++b) d += p[b] * v[static_cast<Eigen::Index>(b)];
            return d;
        }
        return differentiate([&](double u) { return at(path, u); }, path.domain(),
                             std::clamp(s, path.domain().lo, path.domain().hi), h_fd);
    }
    if (path_derivative_) return checked(path_derivative_(s));
    return differentiate([&](double u) { return at(path, u); }, path.domain(),
                         std::clamp(s, path.domain().lo, path.domain().hi), h_fd);
}

Matrix FrameField::checked_inverse(const Matrix& a) const {
    const Eigen::PartialPivLU<Matrix> lu(a);
    const double det = std::abs(lu.determinant());
    if (!(det >= bounds_.det_min && det <= bounds_.det_max)) {
        std::ostringstream os;
        os << "frame determinant " << det << " outside [" << bounds_.det_min << ", " << bounds_.det_max << "]";
        throw InvertibilityError(os.str());
    }
    Matrix inv = lu.inverse();
    const double resid = max_abs((a * inv - Matrix::Identity(a.rows(), a.cols())).eval());
    if (!(resid < bounds_.inverse_residual)) {
        std::ostringstream os;
        os << "frame inverse residual " << resid << " exceeds " << bounds_.inverse_residual;
        throw InvertibilityError(os.str());
    }
    return inv;
}

FrameField FrameField::times(const FrameField& other) const {
    if (other.fiber_dim_ != fiber_dim_) throw ShapeError("frame dimensions differ");
    const FrameField a = *this, b = other;
    if (a.is_chart_field() && b.is_chart_field()) {
        return on_chart(
            fiber_dim_, [a, b](const Vector& x) { return (a.at_point(x) * b.at_point(x)).eval(); },
            [a, b](const Vector& x) {
                const auto pa = a.partials(x), pb = b.partials(x);
                const Matrix ma = a.at_point(x), mb = b.at_point(x);
                std::vector<Matrix> out;
                for (std::size_t k = 0; k < pa.size(); ++k) out.push_back(pa[k] * mb + ma * pb[k]);
                return out;
            },
            bounds_);
    }
    // Path-parameterised product; the owning path is supplied at evaluation
    // time, so both factors must be path fields.
    if (a.is_chart_field() || b.is_chart_field())
        throw ShapeError("cannot multiply a chart frame field by a path frame field");
    return along_path(
        fiber_dim_, [a, b](double s) { return (a.path_fn_(s) * b.path_fn_(s)).eval(); }, {}, bounds_);
}

FrameField FrameField::inverse() const {
    const FrameField a = *this;
    if (a.is_chart_field()) {
        return on_chart(
            fiber_dim_, [a](const Vector& x) { return a.checked_inverse(a.at_point(x)); },
            [a](const Vector& x) {
                const Matrix inv = a.checked_inverse(a.at_point(x));
                std::vector<Matrix> out;
                for (const auto& d : a.partials(x)) out.push_back(-inv * d * inv);
                return out;
            },
            bounds_);
    }
    return along_path(fiber_dim_, [a](double s) { return a.checked_inverse(a.path_fn_(s)); }, {}, bounds_);
}

Matrix frame_transform_coefficients(const CoefficientFunctional& gamma, const FrameField& frame,
                                    const Path& path, double s, double h_fd) {
    if (frame.fiber_dim() != gamma.fiber_dim()) throw ShapeError("frame and coefficient dimensions differ");
    const Matrix a = frame.at(path, s);
    const Matrix inv = frame.checked_inverse(a);
    const Matrix g = gamma(path, s);
    const Matrix da = frame.derivative(path, s, h_fd);
    return inv * g * a + inv * da;
}

CoefficientFunctional transformed_functional(const CoefficientFunctional& gamma, const FrameField& frame,
                                             double h_fd) {
    return CoefficientFunctional(gamma.fiber_dim(), [gamma, frame, h_fd](const Path& path, double s) {
        return frame_transform_coefficients(gamma, frame, path, s, h_fd);
    });
}

}  // namespace pt
