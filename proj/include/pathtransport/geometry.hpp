#pragma once

// Domain types shared by every module: chart data, paths, two-parameter maps,
// sections, coefficient functionals, connections and frame fields.
//
// Storage convention used throughout the library:
//   Gamma[i][j]  = Gamma^i_{.j}      (row = upper index)
//   A[i][i']     = A^i_{i'}          (row = unprimed, column = primed)
// A frame field A maps primed components to unprimed ones; its inverse holds
// A^{i'}_i.

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "pathtransport/errors.hpp"
#include "pathtransport/tensor.hpp"

namespace pt {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Relative finite-difference step; the absolute step at argument x is
// kDefaultFdStep * max(1, |x|).
inline constexpr double kDefaultFdStep = 1e-5;

double scaled_step(double h, double at);

// Max-abs entry norm used for every "||.||_inf" on matrices and vectors.
double max_abs(const Matrix& m);
double max_abs(const Vector& v);

struct ChartSpec {
    int base_dim = 1;
    int fiber_dim = 1;

    ChartSpec() = default;
    ChartSpec(int n, int m);
};

// Closed bounded interval [lo, hi].
struct Interval {
    double lo = 0.0;
    double hi = 1.0;

    Interval() = default;
    Interval(double a, double b);

    bool contains(double s) const noexcept;
    double length() const noexcept { return hi - lo; }
};

class Path {
public:
    using PointFn = std::function<Vector(double)>;

    Path(Interval domain, PointFn point, PointFn velocity = {});

    const Interval& domain() const noexcept { return domain_; }
    int dim() const noexcept { return dim_; }
    bool has_velocity() const noexcept { return static_cast<bool>(velocity_); }

    // Checked evaluation: throws DomainError outside the domain and
    // EvaluationError on non-finite coordinates.
    Vector point(double s) const;
    Vector supplied_velocity(double s) const;

private:
    Interval domain_;
    PointFn point_;
    PointFn velocity_;
    int dim_ = 0;
};

// Tangent components at s: the supplied velocity when present, otherwise a
// central difference with step h_fd * max(1, |s|) (second-order one-sided
// near the ends of the domain).
Vector path_velocity(const Path& path, double s, double h_fd = kDefaultFdStep);

// eta : [a,b] x [c,d] -> chart.
class TwoParamMap {
public:
    using PointFn = std::function<Vector(double, double)>;

    TwoParamMap(Interval s_domain, Interval t_domain, PointFn point, PointFn partial_s = {},
                PointFn partial_t = {});

    const Interval& s_domain() const noexcept { return s_domain_; }
    const Interval& t_domain() const noexcept { return t_domain_; }
    int dim() const noexcept { return dim_; }

    Vector point(double s, double t) const;

    // eta(., t) and eta(s, .)
    Path along_s(double t) const;
    Path along_t(double s) const;

    // eta' = d eta / ds and eta'' = d eta / dt.
    Vector partial_s(double s, double t, double h_fd = kDefaultFdStep) const;
    Vector partial_t(double s, double t, double h_fd = kDefaultFdStep) const;

    // (s, t) -> eta(t, s)
    TwoParamMap transposed() const;

private:
    Interval s_domain_;
    Interval t_domain_;
    PointFn point_;
    PointFn partial_s_;
    PointFn partial_t_;
    int dim_ = 0;
};

class SectionAlongPath {
public:
    using ComponentsFn = std::function<Vector(double)>;

    explicit SectionAlongPath(ComponentsFn components, ComponentsFn derivative = {});

    Vector components(double s) const;
    // d sigma / ds, analytic when supplied, otherwise central differences
    // restricted to `domain`.
    Vector derivative(double s, const Interval& domain, double h_fd = kDefaultFdStep) const;

private:
    ComponentsFn components_;
    ComponentsFn derivative_;
};

class ConnectionField;

// (path, s) -> Gamma(s; path), an m x m matrix.
class CoefficientFunctional {
public:
    using EvalFn = std::function<Matrix(const Path&, double)>;

    CoefficientFunctional(int fiber_dim, EvalFn eval);

    int fiber_dim() const noexcept { return fiber_dim_; }
    Matrix operator()(const Path& path, double s) const;

    // Non-null when produced by connection_functional.
    const std::shared_ptr<const ConnectionField>& connection() const noexcept { return connection_; }

private:
    friend CoefficientFunctional connection_functional(const ConnectionField&, double);

    int fiber_dim_;
    EvalFn eval_;
    std::shared_ptr<const ConnectionField> connection_;
};

// Point-dependent coefficients Gamma^i_{.j alpha}(x), stored (i, j, alpha),
// and optionally their partials d Gamma^i_{.j alpha} / d x^beta stored
// (i, j, alpha, beta).
class ConnectionField {
public:
    using CoeffFn = std::function<Tensor3(const Vector&)>;
    using PartialsFn = std::function<Tensor4(const Vector&)>;

    ConnectionField(ChartSpec chart, CoeffFn coeff, PartialsFn partials = {});

    const ChartSpec& chart() const noexcept { return chart_; }
    int base_dim() const noexcept { return chart_.base_dim; }
    int fiber_dim() const noexcept { return chart_.fiber_dim; }
    bool has_analytic_partials() const noexcept { return static_cast<bool>(partials_); }

    Tensor3 coefficients(const Vector& x) const;
    // Analytic partials when supplied, else central differences with step
    // h * max(1, |x^beta|).
    Tensor4 partials(const Vector& x, double h) const;

    // Gamma_alpha as an m x m matrix: [Gamma^i_{.j alpha}]_{ij}.
    static Matrix slice(const Tensor3& coeff, int alpha);

    // Gamma^i_{.j k} == Gamma^i_{.k j} at x within tol. Requires m == n.
    bool is_symmetric_at(const Vector& x, double tol = 0.0) const;

private:
    ChartSpec chart_;
    CoeffFn coeff_;
    PartialsFn partials_;
};

// Gamma(s; gamma) = sum_alpha Gamma_alpha(gamma(s)) * gammadot^alpha(s).
CoefficientFunctional connection_functional(const ConnectionField& conn, double h_fd = kDefaultFdStep);

// The zero functional on an m-dimensional fiber.
CoefficientFunctional zero_functional(int fiber_dim);

struct FrameBounds {
    double det_min = 1e-12;
    double det_max = 1e12;
    double inverse_residual = 1e-12;
};

// Invertible matrix field A = [A^i_{i'}], given either along a path
// (s -> A(s)) or on the chart (x -> A(x)).
class FrameField {
public:
    using PathFn = std::function<Matrix(double)>;
    using ChartFn = std::function<Matrix(const Vector&)>;
    using ChartPartialsFn = std::function<std::vector<Matrix>(const Vector&)>;

    static FrameField along_path(int fiber_dim, PathFn frame, PathFn derivative = {},
                                 FrameBounds bounds = {});
    static FrameField on_chart(int fiber_dim, ChartFn frame, ChartPartialsFn partials = {},
                               FrameBounds bounds = {});

    int fiber_dim() const noexcept { return fiber_dim_; }
    bool is_chart_field() const noexcept { return static_cast<bool>(chart_fn_); }
    const FrameBounds& bounds() const noexcept { return bounds_; }

    Matrix at(const Path& path, double s) const;
    // dA/ds along the path. Chart fields contract their partials with the
    // path velocity; otherwise central differences in s.
    Matrix derivative(const Path& path, double s, double h_fd = kDefaultFdStep) const;

    // Chart fields only.
    Matrix at_point(const Vector& x) const;
    std::vector<Matrix> partials(const Vector& x, double h_fd = kDefaultFdStep) const;

    // Inverse after checking |det| in [det_min, det_max] and the residual
    // ||A A^-1 - I||_inf.
    Matrix checked_inverse(const Matrix& a) const;

    // Pointwise product (this * other).
    FrameField times(const FrameField& other) const;
    FrameField inverse() const;

private:
    FrameField() = default;
    Matrix checked(Matrix a) const;

    int fiber_dim_ = 0;
    FrameBounds bounds_;
    PathFn path_fn_;
    PathFn path_derivative_;
    ChartFn chart_fn_;
    ChartPartialsFn chart_partials_;
};

// Coefficients in the frame {e_{i'} = A^i_{i'} e_i}:
//   Gamma' = A^-1 Gamma A + A^-1 dA/ds.
Matrix frame_transform_coefficients(const CoefficientFunctional& gamma, const FrameField& frame,
                                    const Path& path, double s, double h_fd = kDefaultFdStep);

// The functional (path, s) -> frame_transform_coefficients(gamma, frame, path, s).
CoefficientFunctional transformed_functional(const CoefficientFunctional& gamma,
                                             const FrameField& frame, double h_fd = kDefaultFdStep);

}  // namespace pt
