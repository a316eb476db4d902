#pragma once

#include <optional>
#include <span>
#include <vector>

#include "pathtransport/geometry.hpp"

namespace pt {

struct IntegratorOptions {
    enum class Method { adaptive, fixed_rk4 };

    Method method = Method::adaptive;
    double rtol = 1e-9;
    double atol = 1e-12;
    // Step for fixed_rk4; the interval is split into ceil(|t - s| / step)
    // equal steps.
    double fixed_step = 1e-2;
    std::size_t max_steps = 2'000'000;

    static IntegratorOptions rk4(double step) {
        IntegratorOptions o;
        o.method = Method::fixed_rk4;
        o.fixed_step = step;
        return o;
    }
};

// Matrix H of L_{from -> to}: transported components are H * v.
struct TransportMatrix {
    Matrix matrix;
    double from = 0.0;
    double to = 0.0;
    double est_error = 0.0;
    std::size_t steps = 0;
};

// Solves dH/dtau = -Gamma(tau; path) H with H(s) = I and returns H(t).
// Adaptive mode uses an embedded Dormand-Prince 5(4) pair; fixed_rk4 uses
// classical RK4 and estimates its error against a half-resolution run.
TransportMatrix transport_matrix(const CoefficientFunctional& gamma, const Path& path, double s, double t,
                                 const IntegratorOptions& opts = {});

Vector apply_transport(const TransportMatrix& h, const Vector& v);

struct DerivationValue {
    Vector components;
};

// d sigma/ds + Gamma(s; path) sigma(s).
DerivationValue derivation_analytic(const CoefficientFunctional& gamma, const Path& path,
                                    const SectionAlongPath& section, double s,
                                    double h_fd = kDefaultFdStep);

// The derivation as the limit of transported difference quotients
//   q(eps) = (H(s+eps -> s) sigma(s+eps) - sigma(s)) / eps.
struct DerivationLimit {
    Vector value;                     // one-level Richardson value from the two smallest eps
    std::vector<double> eps;
    std::vector<Vector> quotients;    // q(eps_k)
    std::vector<Vector> extrapolated; // Richardson values of consecutive pairs
    Vector analytic;                  // derivation_analytic at s
    std::vector<double> errors;       // ||q(eps_k) - analytic||_inf
    std::optional<double> fitted_order;  // least-squares slope of log error vs log eps
    double fitted_constant = 0.0;        // max_k errors_k / eps_k
    bool converges_linearly = true;      // false raises the diagnostic flag
    // Same quantities probed with -eps, when s - eps stays in the domain.
    std::optional<Vector> backward_value;
    std::vector<Vector> backward_quotients;
};

DerivationLimit derivation_limit(const CoefficientFunctional& gamma, const Path& path,
                                 const SectionAlongPath& section, double s, std::span<const double> eps,
                                 const IntegratorOptions& opts = {});

// Transport around a closed path over its whole domain. `periods` marks
// angular coordinates (entry > 0): their endpoint gap is taken modulo the
// period, so a loop may wind once around phi in [0, 2 pi].
TransportMatrix loop_holonomy(const CoefficientFunctional& gamma, const Path& loop,
                              const IntegratorOptions& opts = {}, double closure_tol = 1e-10,
                              std::span<const double> periods = {});

// Rotation angle of a 2x2 holonomy measured in the frame obtained by
// Gram-Schmidt orthonormalisation of the coordinate basis against `metric`
// (the metric at the loop's base point): atan2(R10, R00) of R = E^-1 H E.
double rotation_angle(const Matrix& holonomy, const Matrix& metric);

// Orthonormal frame (columns) from Gram-Schmidt of the coordinate basis.
Matrix orthonormal_frame(const Matrix& metric);

}  // namespace pt
