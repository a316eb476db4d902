#include <atomic>
#include <cmath>
#include <cstdlib>

#include "doctest.h"
#include "oracles.hpp"
#include "pathtransport/geometries.hpp"
#include "pathtransport/parallel.hpp"

using namespace pt;

namespace {

Path circle_path() {
    return Path(
        Interval(0.0, 1.0), [](double s) { return Vector(Eigen::Vector2d(1.0 + 0.3 * s, 2.0 * s)); },
        [](double) { return Vector(Eigen::Vector2d(0.3, 2.0)); });
}

}  // namespace

TEST_CASE("interval and path domains") {
    CHECK_THROWS_AS(Interval(1.0, 1.0), DomainError);
    CHECK_THROWS_AS(Interval(2.0, 1.0), DomainError);
    const Path p = circle_path();
    CHECK(p.dim() == 2);
    CHECK_THROWS_AS(p.point(1.5), DomainError);
    CHECK_NOTHROW(p.point(1.0));

    const Path bad(Interval(0.0, 1.0), [](double s) { return Vector(Eigen::Vector2d(std::log(s), 0.0)); });
    CHECK_THROWS_AS(bad.point(0.0), EvaluationError);
}

TEST_CASE("path velocity by finite differences matches the analytic derivative, including the ends") {
    const Path p(Interval(0.0, 2.0), [](double s) { return Vector(Eigen::Vector2d(std::sin(3 * s), s * s)); });
    for (double s : {0.0, 1e-7, 0.7, 2.0 - 1e-7, 2.0}) {
        const Vector v = path_velocity(p, s);
        CHECK(v[0] == doctest::Approx(3 * std::cos(3 * s)).epsilon(1e-7));
        CHECK(v[1] == doctest::Approx(2 * s).epsilon(1e-7));
    }
}

TEST_CASE("two-parameter map partials and transposition") {
    const TwoParamMap eta(Interval(0, 1), Interval(0, 2),
                          [](double s, double t) { return Vector(Eigen::Vector2d(s * t, std::sin(s) + t)); });
    const Vector ds = eta.partial_s(0.3, 1.1), dt = eta.partial_t(0.3, 1.1);
    CHECK(ds[0] == doctest::Approx(1.1));
    CHECK(ds[1] == doctest::Approx(std::cos(0.3)));
    CHECK(dt[0] == doctest::Approx(0.3));
    CHECK(dt[1] == doctest::Approx(1.0));
    const TwoParamMap tr = eta.transposed();
    CHECK(tr.s_domain().hi == 2.0);
    CHECK(max_abs((tr.point(1.1, 0.3) - eta.point(0.3, 1.1)).eval()) == 0.0);
    CHECK(max_abs((tr.partial_s(1.1, 0.3) - dt).eval()) < 1e-9);
}

TEST_CASE("connection functional reproduces the hand-written polar and sphere coefficients") {
    const Path p = circle_path();
    for (const char* name : {"euclidean-polar", "sphere"}) {
        const Geometry g = builtin_geometry(name);
        const CoefficientFunctional gamma = connection_functional(g.connection);
        REQUIRE(gamma.connection());
        for (double s : {0.0, 0.25, 0.8}) {
            const Vector x = p.point(s), v = p.supplied_velocity(s);
            const oracle::M2 ref = std::string(name) == "sphere" ? oracle::sphere_gamma({x[0], x[1]}, {v[0], v[1]})
                                                                 : oracle::polar_gamma({x[0], x[1]}, {v[0], v[1]});
            const Matrix got = gamma(p, s);
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j) CHECK(got(i, j) == doctest::Approx(ref[i][j]).epsilon(1e-13));
        }
    }
}

TEST_CASE("coefficient functional shape and finiteness checks") {
    const CoefficientFunctional wrong(2, [](const Path&, double) { return Matrix::Zero(3, 3).eval(); });
    CHECK_THROWS_AS(wrong(circle_path(), 0.5), ShapeError);
    const CoefficientFunctional nan(
        2, [](const Path&, double) { return Matrix::Constant(2, 2, std::numeric_limits<double>::quiet_NaN()).eval(); });
    CHECK_THROWS_AS(nan(circle_path(), 0.5), EvaluationError);
    CHECK(!zero_functional(2).connection());
}

TEST_CASE("finite-difference partials agree with the analytic ones") {
    const Geometry g = builtin_geometry("sphere");
    const ConnectionField fd(g.connection.chart(), [&](const Vector& x) { return g.connection.coefficients(x); });
    CHECK(!fd.has_analytic_partials());
    const Vector x = Eigen::Vector2d(0.9, 0.4);
    const Tensor4 a = g.connection.partials(x, 1e-4), b = fd.partials(x, 1e-5);
    for (std::size_t k = 0; k < a.data().size(); ++k) CHECK(a.data()[k] == doctest::Approx(b.data()[k]).epsilon(1e-8));
}

TEST_CASE("symmetry detection") {
    const Vector x = Eigen::Vector2d(0.7, 0.1);
    CHECK(builtin_geometry("sphere").connection.is_symmetric_at(x));
    CHECK(builtin_geometry("euclidean-polar").connection.is_symmetric_at(x));
    CHECK(!builtin_geometry("torsion-constant").connection.is_symmetric_at(x));
    CHECK(!builtin_geometry("gauge-rotation").connection.is_symmetric_at(x));
}

TEST_CASE("frame inverse checks reject singular and ill-scaled frames") {
    const FrameField f = FrameField::on_chart(2, [](const Vector& x) {
        Matrix a(2, 2);
        a << 1.0, x[0], x[0], 1.0;
        return a;
    });
    CHECK_NOTHROW(f.checked_inverse(f.at_point(Eigen::Vector2d(0.5, 0))));
    CHECK_THROWS_AS(f.checked_inverse(f.at_point(Eigen::Vector2d(1.0, 0))), InvertibilityError);
    CHECK_THROWS_AS(f.checked_inverse(Matrix::Identity(2, 2) * 1e7), InvertibilityError);
}

TEST_CASE("frame change: a rotating frame in the flat Cartesian chart gives A^-1 dA/ds") {
    // A(x) = rotation by x1; along x = (s, 0) we get A^-1 A' = [[0, -1], [1, 0]].
    const FrameField rot = FrameField::on_chart(2, [](const Vector& x) {
        Matrix a(2, 2);
        a << std::cos(x[0]), -std::sin(x[0]), std::sin(x[0]), std::cos(x[0]);
        return a;
    });
    const Path line(Interval(0, 1), [](double s) { return Vector(Eigen::Vector2d(s, 0.0)); });
    const Matrix g = frame_transform_coefficients(zero_functional(2), rot, line, 0.4);
    CHECK(g(0, 0) == doctest::Approx(0.0).epsilon(1e-8));
    CHECK(g(0, 1) == doctest::Approx(-1.0).epsilon(1e-8));
    CHECK(g(1, 0) == doctest::Approx(1.0).epsilon(1e-8));

    // The transformation is a group action: changing by A then by A^-1
    // gives back the original coefficients.
    const Geometry polar = builtin_geometry("euclidean-polar");
    const auto gamma = connection_functional(polar.connection);
    const auto there = transformed_functional(gamma, rot);
    const auto back = transformed_functional(there, rot.inverse());
    const Path p = circle_path();
    CHECK(max_abs((back(p, 0.3) - gamma(p, 0.3)).eval()) < 1e-8);
    const auto composed = transformed_functional(gamma, rot.times(rot.inverse()));
    CHECK(max_abs((composed(p, 0.3) - gamma(p, 0.3)).eval()) < 1e-8);
}

TEST_CASE("tensor storage") {
    Tensor3 t({2, 3, 4});
    CHECK(t.data().size() == 24);
    t(1, 2, 3) = 5.0;
    CHECK(t.data().back() == 5.0);
    CHECK(t.max_abs() == 5.0);
    CHECK(t.all_finite());
}

TEST_CASE("parallel_for covers every index and reports the lowest failure") {
    std::vector<int> hit(1000, 0);
    parallel_for(hit.size(), [&](std::size_t k) { hit[k] += 1; });
    CHECK(std::count(hit.begin(), hit.end(), 1) == 1000);

    std::atomic<int> calls{0};
    try {
        parallel_for(64, [&](std::size_t k) {
            ++calls;
            if (k == 17 || k == 40) throw DomainError("boom " + std::to_string(k));
        });
        FAIL("expected an exception");
    } catch (const DomainError& e) {
        CHECK(std::string(e.what()) == "boom 17");
    }
    CHECK(calls.load() == 64);

    ::setenv("PATH_TRANSPORT_THREADS", "3", 1);
    CHECK(worker_count() == 3);
    ::setenv("PATH_TRANSPORT_THREADS", "0", 1);
    CHECK(worker_count() >= 1);
    ::unsetenv("PATH_TRANSPORT_THREADS");
}

TEST_CASE("frame changes compose: A then B equals A*B") {
    auto frame = [](double k1, double k2) {
        return FrameField::on_chart(
            2,
            [=](const Vector& x) {
                Matrix a(2, 2);
                a << 2.0 + k1 * std::sin(x[0]), k2 * x[1], k1 * x[0] * x[1], 1.5 + k2 * std::cos(x[1]);
                return a;
            },
            [=](const Vector& x) {
                Matrix d0(2, 2), d1(2, 2);
                d0 << k1 * std::cos(x[0]), 0, k1 * x[1], 0;
                d1 << 0, k2, k1 * x[0], -k2 * std::sin(x[1]);
                return std::vector<Matrix>{d0, d1};
            });
    };
    const FrameField a = frame(0.4, -0.3), b = frame(-0.2, 0.5);
    const Path p = circle_path();
    for (const char* name : {"euclidean-polar", "sphere", "gauge-rotation"}) {
        CAPTURE(name);
        const auto gamma = connection_functional(builtin_geometry(name).connection);
        const auto two_steps = transformed_functional(transformed_functional(gamma, a), b);
        const auto one_step = transformed_functional(gamma, a.times(b));
        const auto round_trip = transformed_functional(transformed_functional(gamma, a), a.inverse());
        for (double s : {0.0, 0.35, 0.9}) {
            CHECK(max_abs((two_steps(p, s) - one_step(p, s)).eval()) < 1e-10);
            CHECK(max_abs((round_trip(p, s) - gamma(p, s)).eval()) < 1e-10);
        }
    }
}

TEST_CASE("connection coefficients rescale under reparametrization") {
    // gamma(phi(u)) with phi(u) = u^2 on [0.5, 1]: Gamma(u) = Gamma(phi(u)) * phi'(u).
    const Path p = circle_path();
    const Path q(
        Interval(0.5, 1.0), [&](double u) { return p.point(u * u); },
        [&](double u) { return (p.supplied_velocity(u * u) * 2 * u).eval(); });
    for (const char* name : {"euclidean-polar", "sphere", "torsion-constant"}) {
        CAPTURE(name);
        const auto gamma = connection_functional(builtin_geometry(name).connection);
        for (double u : {0.5, 0.7, 1.0})
            CHECK(max_abs((gamma(q, u) - gamma(p, u * u) * (2 * u)).eval()) < 1e-12);
    }
}

TEST_CASE("central-difference velocity is second order") {
    const Path p(Interval(0.0, 2.0), [](double s) { return Vector(Eigen::Vector2d(std::sin(3 * s), std::exp(s))); });
    for (double s : {0.6, 1.3}) {
        const Eigen::Vector2d exact(3 * std::cos(3 * s), std::exp(s));
        const double e1 = (path_velocity(p, s, 1e-2) - exact).norm();
        const double e2 = (path_velocity(p, s, 5e-3) - exact).norm();
        CHECK(e1 / e2 >= 3.5);
        CHECK(e1 / e2 <= 4.5);
    }
}
