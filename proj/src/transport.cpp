#include "pathtransport/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace pt {

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
// b - b* (fifth minus fourth order weights)
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;

struct Rhs {
    const CoefficientFunctional& gamma;
    const Path& path;
    Matrix operator()(double tau, const Matrix& h) const { return -gamma(path, tau) * h; }
};

TransportMatrix integrate_adaptive(const Rhs& f, int m, double s, double t, const IntegratorOptions& o) {
    TransportMatrix out{Matrix::Identity(m, m), s, t, 0.0, 0};
    if (s == t) return out;
    if (!(o.rtol > 0.0) || !(o.atol > 0.0)) throw DomainError("integrator tolerances must be positive");

    const double dir = t > s ? 1.0 : -1.0;
    const double span = std::abs(t - s);
    Matrix y = out.matrix;
    double tau = s;
    Matrix k1 = f(tau, y);

    // Initial step from the size of the right-hand side.
    const double f0 = max_abs(k1);
    double h = f0 > 0.0 ? std::min(span, 0.01 / f0) : span;
    h = std::max(h, 1e-6 * span);

    std::size_t steps = 0;
    while (dir * (t - tau) > 0.0) {
        if (++steps > o.max_steps) throw ConvergenceError("transport exceeded the maximum number of steps", tau);
        const double remaining = std::abs(t - tau);
        bool last = false;
        if (h >= remaining) {
            h = remaining;
            last = true;
        }
        const double min_step = 1e-14 * std::max(1.0, std::abs(tau));
        if (h < min_step && !last) {
            std::ostringstream os;
            os << "transport step size underflow at tau = " << tau;
            throw ConvergenceError(os.str(), tau);
        }
        const double hs = dir * h;

        const Matrix k2 = f(tau + c2 * hs, y + hs * (a21 * k1));
        const Matrix k3 = f(tau + c3 * hs, y + hs * (a31 * k1 + a32 * k2));
        const Matrix k4 = f(tau + c4 * hs, y + hs * (a41 * k1 + a42 * k2 + a43 * k3));
        const Matrix k5 = f(tau + c5 * hs, y + hs * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
        const double tnext = last ? t : tau + hs;
        const Matrix k6 = f(tnext, y + hs * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
        const Matrix ynew = y + hs * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
        const Matrix k7 = f(tnext, ynew);
        const Matrix err = hs * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

        // A non-finite trial step counts as a rejection; if the solution
        // really blows up the step size underflows below.
        double ratio = ynew.allFinite() && err.allFinite() ? 0.0 : std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < err.size() && std::isfinite(ratio); ++i) {
            const double sc = o.atol + o.rtol * std::max(std::abs(y(i)), std::abs(ynew(i)));
            ratio = std::max(ratio, std::abs(err(i)) / sc);
        }

        if (ratio <= 1.0) {
            tau = tnext;
            y = ynew;
            k1 = k7;
            out.est_error += max_abs(err);
            ++out.steps;
        }
        const double factor = ratio == 0.0       ? 5.0
                              : std::isinf(ratio) ? 0.2
                                                  : std::clamp(0.9 * std::pow(ratio, -0.2), 0.2, 5.0);
        h *= ratio <= 1.0 ? factor : std::min(factor, 1.0);
    }
    out.matrix = y;
    return out;
}

Matrix rk4_run(const Rhs& f, int m, double s, double t, std::size_t n) {
    Matrix y = Matrix::Identity(m, m);
    const double h = (t - s) / static_cast<double>(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double tau = s + static_cast<double>(k) * h;
        const double tnext = k + 1 == n ? t : tau + h;
        const Matrix k1 = f(tau, y);
        const Matrix k2 = f(tau + 0.5 * h, y + 0.5 * h * k1);
        const Matrix k3 = f(tau + 0.5 * h, y + 0.5 * h * k2);
        const Matrix k4 = f(tnext, y + h * k3);
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    if (!y.allFinite()) throw EvaluationError("non-finite value during transport integration");
    return y;
}

TransportMatrix integrate_rk4(const Rhs& f, int m, double s, double t, const IntegratorOptions& o) {
    TransportMatrix out{Matrix::Identity(m, m), s, t, 0.0, 0};
    if (s == t) return out;
    if (!(o.fixed_step > 0.0)) throw DomainError("fixed step must be positive");
    const double span = std::abs(t - s);
    const auto n = static_cast<std::size_t>(std::max(1.0, std::ceil(span / o.fixed_step - 1e-9)));
    if (n > o.max_steps) throw ConvergenceError("fixed step too small for the interval", s);
    out.matrix = rk4_run(f, m, s, t, n);
    out.steps = n;
    // Step-halving error estimate (RK4 error ratio 2^4).
    if (n >= 2) {
        out.est_error = max_abs((out.matrix - rk4_run(f, m, s, t, (n + 1) / 2)).eval()) / 15.0;
    } else {
        out.est_error = max_abs((out.matrix - rk4_run(f, m, s, t, 2)).eval()) * 16.0 / 15.0;
    }
    return out;
}

}  // namespace

TransportMatrix transport_matrix(const CoefficientFunctional& gamma, const Path& path, double s, double t,
                                 const IntegratorOptions& opts) {
    if (!path.domain().contains(s) || !path.domain().contains(t)) {
        std::ostringstream os;
        os << "transport endpoints (" << s << ", " << t << ") outside path domain";
        throw DomainError(os.str());
    }
    const Rhs f{gamma, path};
    const int m = gamma.fiber_dim();
    return opts.method == IntegratorOptions::Method::adaptive ? integrate_adaptive(f, m, s, t, opts)
                                                              : integrate_rk4(f, m, s, t, opts);
}

Vector apply_transport(const TransportMatrix& h, const Vector& v) {
    if (v.size() != h.matrix.cols()) throw ShapeError("vector length does not match the fiber dimension");
    return h.matrix * v;
}

DerivationValue derivation_analytic(const CoefficientFunctional& gamma, const Path& path,
                                    const SectionAlongPath& section, double s, double h_fd) {
    const Vector sigma = section.components(s);
    if (sigma.size() != gamma.fiber_dim()) throw ShapeError("section length does not match the fiber dimension");
    const Vector ds = section.derivative(s, path.domain(), h_fd);
    return {ds + gamma(path, s) * sigma};
}

DerivationLimit derivation_limit(const CoefficientFunctional& gamma, const Path& path,
                                 const SectionAlongPath& section, double s, std::span<const double> eps,
                                 const IntegratorOptions& opts) {
    if (eps.empty()) throw DomainError("eps sequence is empty");
    for (std::size_t k = 0; k < eps.size(); ++k) {
        if (!(eps[k] > 0.0)) throw DomainError("eps values must be positive");
        if (k > 0 && !(eps[k] < eps[k - 1])) throw DomainError("eps sequence must be strictly decreasing");
    }
    const Interval& dom = path.domain();
    if (!dom.contains(s) || s >= dom.hi) throw DomainError("derivation limit needs an interior parameter");

    const Vector sigma = section.components(s);
    auto quotient = [&](double e) -> Vector {
        if (!dom.contains(s + e)) {
            std::ostringstream os;
            os << "s + eps = " << s + e << " outside path domain";
            throw DomainError(os.str());
        }
        const TransportMatrix h = transport_matrix(gamma, path, s + e, s, opts);
        return (h.matrix * section.components(s + e) - sigma) / e;
    };
    auto richardson = [&](const std::vector<Vector>& q, std::vector<Vector>* all) -> Vector {
        Vector best = q.back();
        for (std::size_t k = 0; k + 1 < q.size(); ++k) {
            const double r = eps[k] / eps[k + 1];
            best = (r * q[k + 1] - q[k]) / (r - 1.0);
            if (all) all->push_back(best);
        }
        return best;
    };

    DerivationLimit out;
    out.eps.assign(eps.begin(), eps.end());
    for (double e : eps) out.quotients.push_back(quotient(e));
    out.value = richardson(out.quotients, &out.extrapolated);
    out.analytic = derivation_analytic(gamma, path, section, s).components;

    // Errors below the roundoff floor of the difference quotient carry no
    // order information.
    const double scale = 1.0 + max_abs(sigma);
    std::vector<double> lx, ly;
    bool all_below = true;
    for (std::size_t k = 0; k < eps.size(); ++k) {
        const double err = max_abs((out.quotients[k] - out.analytic).eval());
        out.errors.push_back(err);
        out.fitted_constant = std::max(out.fitted_constant, err / eps[k]);
        if (err > 1e-12 * scale / eps[k]) {
            all_below = false;
            lx.push_back(std::log(eps[k]));
            ly.push_back(std::log(err));
        }
    }
    if (lx.size() >= 2) {
        double mx = 0, my = 0;
        for (std::size_t k = 0; k < lx.size(); ++k) mx += lx[k], my += ly[k];
        mx /= static_cast<double>(lx.size());
        my /= static_cast<double>(lx.size());
        double sxy = 0, sxx = 0;
        for (std::size_t k = 0; k < lx.size(); ++k) {
            sxy += (lx[k] - mx) * (ly[k] - my);
            sxx += (lx[k] - mx) * (lx[k] - mx);
        }
        out.fitted_order = sxy / sxx;
        out.converges_linearly = *out.fitted_order >= 0.9;
    } else {
        out.converges_linearly = all_below || lx.size() <= 1;
    }

    if (dom.contains(s - eps.front()) && s - eps.front() >= dom.lo) {
        for (double e : eps) out.backward_quotients.push_back(quotient(-e));
        out.backward_value = richardson(out.backward_quotients, nullptr);
    }
    return out;
}

TransportMatrix loop_holonomy(const CoefficientFunctional& gamma, const Path& loop, const IntegratorOptions& opts,
                              double closure_tol, std::span<const double> periods) {
    const Vector start = loop.point(loop.domain().lo);
    const Vector end = loop.point(loop.domain().hi);
    double gap = 0.0;
    for (Eigen::Index a = 0; a < start.size(); ++a) {
        double d = std::abs(end[a] - start[a]);
        const double period = static_cast<std::size_t>(a) < periods.size() ? periods[static_cast<std::size_t>(a)] : 0.0;
        if (period > 0.0) {
            d = std::fmod(d, period);
            d = std::min(d, period - d);
        }
        gap = std::max(gap, d);
    }
    if (!(gap <= closure_tol)) {
        std::ostringstream os;
        os << "path is not closed: endpoint gap " << gap << " exceeds " << closure_tol;
        throw NotALoopError(os.str());
    }
    return transport_matrix(gamma, loop, loop.domain().lo, loop.domain().hi, opts);
}

Matrix orthonormal_frame(const Matrix& metric) {
    const Eigen::Index n = metric.rows();
    if (metric.cols() != n) throw ShapeError("metric must be square");
    Matrix e = Matrix::Identity(n, n);
    for (Eigen::Index k = 0; k < n; ++k) {
        for (Eigen::Index j = 0; j < k; ++j) {
            const double proj = e.col(j).dot(metric * e.col(k));
            e.col(k) -= proj * e.col(j);
        }
        const double norm2 = e.col(k).dot(metric * e.col(k));
        if (!(norm2 > 0.0)) throw InvertibilityError("metric is not positive definite");
        e.col(k) /= std::sqrt(norm2);
    }
    return e;
}

double rotation_angle(const Matrix& holonomy, const Matrix& metric) {
    if (holonomy.rows() != 2 || holonomy.cols() != 2 || metric.rows() != 2)
        throw ShapeError("rotation angle is defined for 2x2 holonomies");
    const Matrix e = orthonormal_frame(metric);
    const Matrix r = e.inverse() * holonomy * e;
    return std::atan2(r(1, 0), r(0, 0));
}

}  // namespace pt
