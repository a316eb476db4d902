#include "pathtransport/curvature.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pt {

namespace {

void require_tangent(int m, int n) {
    if (m != n) {
        std::ostringstream os;
        os << "torsion needs the tangent bundle (fiber_dim " << m << " != base_dim " << n << ")";
        throw TangentBundleError(os.str());
    }
}

bool inside_by(const Interval& dom, double s, double h) { return s - h >= dom.lo && s + h <= dom.hi; }

Matrix family_curvature(const CoefficientFunctional& gamma, const TwoParamMap& eta, double s, double t,
                        double h) {
    // d/ds Gamma(t; eta(s,.)) across the family of t-paths.
    const Matrix ds = (gamma(eta.along_t(s + h), t) - gamma(eta.along_t(s - h), t)) / (2.0 * h);
    // d/dt Gamma(s; eta(.,t)) across the family of s-paths.
    const Matrix dt = (gamma(eta.along_s(t + h), s) - gamma(eta.along_s(t - h), s)) / (2.0 * h);
    const Matrix gs = gamma(eta.along_s(t), s);
    const Matrix gt = gamma(eta.along_t(s), t);
    return ds - dt + gs * gt - gt * gs;
}

}  // namespace

Vector torsion_vector(const CoefficientFunctional& gamma, const TwoParamMap& eta, double s, double t,
                      double h_fd) {
    require_tangent(gamma.fiber_dim(), eta.dim());
    const Vector d_s = eta.partial_s(s, t, h_fd);
    const Vector d_t = eta.partial_t(s, t, h_fd);
    return gamma(eta.along_s(t), s) * d_t - gamma(eta.along_t(s), t) * d_s;
}

Tensor3 torsion_tensor(const ConnectionField& conn, const Vector& x) {
    require_tangent(conn.fiber_dim(), conn.base_dim());
    const int n = conn.base_dim();
    const Tensor3 c = conn.coefficients(x);
    Tensor3 t({n, n, n});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) t(i, j, k) = c(i, k, j) - c(i, j, k);
    return t;
}

Vector contract_torsion(const Tensor3& torsion, const Vector& a, const Vector& b) {
    const int n = torsion.extent(0);
    if (a.size() != n || b.size() != n) throw ShapeError("torsion contraction vectors have wrong length");
    Vector out = Vector::Zero(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) out[i] += torsion(i, j, k) * a[j] * b[k];
    return out;
}

double default_family_step(double s, double t) { return 1e-4 * std::max({1.0, std::abs(s), std::abs(t)}); }

CurvatureMatrix curvature_matrix(const CoefficientFunctional& gamma, const TwoParamMap& eta, double s, double t,
                                 std::optional<double> h) {
    const double step = h.value_or(default_family_step(s, t));
    if (!(step > 0.0)) throw DomainError("curvature step must be positive");
    if (!inside_by(eta.s_domain(), s, step) || !inside_by(eta.t_domain(), t, step)) {
        std::ostringstream os;
        os << "curvature stencil of width " << step << " at (" << s << ", " << t << ") exits the map rectangle";
        throw DomainError(os.str());
    }
    CurvatureMatrix out;
    out.step = step;
    out.matrix = family_curvature(gamma, eta, s, t, step);
    out.est_error = max_abs((out.matrix - family_curvature(gamma, eta, s, t, 0.5 * step)).eval());
    return out;
}

Tensor4 curvature_tensor(const ConnectionField& conn, const Vector& x, std::optional<double> h) {
    const int m = conn.fiber_dim(), n = conn.base_dim();
    const Tensor3 c = conn.coefficients(x);
    const Tensor4 d = conn.partials(x, h.value_or(1e-4));

    std::vector<Matrix> slices, dslices;  // Gamma_a and d_a Gamma_b at index a * n + b
    for (int a = 0; a < n; ++a) slices.push_back(ConnectionField::slice(c, a));
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
            Matrix g(m, m);
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < m; ++j) g(i, j) = d(i, j, b, a);
            dslices.push_back(std::move(g));
        }

    Tensor4 r({m, m, n, n});
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
            const std::size_t ab = static_cast<std::size_t>(a * n + b), ba = static_cast<std::size_t>(b * n + a);
            const Matrix diff = dslices[ab] - dslices[ba];
            const Matrix comm = slices[a] * slices[b] - slices[b] * slices[a];
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < m; ++j) r(i, j, a, b) = diff(i, j) + comm(i, j);
        }
    return r;
}

Matrix contract_curvature(const Tensor4& r, const Vector& a, const Vector& b) {
    const int m = r.extent(0), n = r.extent(2);
    if (a.size() != n || b.size() != n) throw ShapeError("curvature contraction vectors have wrong length");
    Matrix out = Matrix::Zero(m, m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j)
            for (int al = 0; al < n; ++al)
                for (int be = 0; be < n; ++be) out(i, j) += r(i, j, al, be) * a[al] * b[be];
    return out;
}

double curvature_contraction_gap(const ConnectionField& conn, const TwoParamMap& eta,
                                 std::span<const std::pair<double, double>> samples, std::optional<double> h) {
    const CoefficientFunctional gamma = connection_functional(conn);
    double worst = 0.0;
    for (const auto& [s, t] : samples) {
        const Matrix lhs = curvature_matrix(gamma, eta, s, t, h).matrix;
        const Tensor4 r = curvature_tensor(conn, eta.point(s, t));
        const Matrix rhs = contract_curvature(r, eta.partial_s(s, t), eta.partial_t(s, t));
        worst = std::max(worst, max_abs((lhs - rhs).eval()));
    }
    return worst;
}

}  // namespace pt
