#include "pathtransport/flat_frame.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "pathtransport/curvature.hpp"
#include "pathtransport/parallel.hpp"

namespace pt {

bool Box::contains(const Vector& x) const {
    if (x.size() != lo.size()) return false;
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        const double slack = 1e-12 * std::max({1.0, std::abs(lo[k]), std::abs(hi[k])});
        if (x[k] < lo[k] - slack || x[k] > hi[k] + slack) return false;
    }
    return true;
}

Grid::Grid(Box region, std::vector<int> resolution) : region_(std::move(region)), resolution_(std::move(resolution)) {
    const int n = region_.dim();
    if (n < 1 || region_.hi.size() != n) throw ShapeError("grid region bounds have mismatched dimensions");
    if (static_cast<int>(resolution_.size()) != n) throw ShapeError("grid resolution needs one count per axis");
    size_ = 1;
    for (int k = 0; k < n; ++k) {
        if (!(region_.lo[k] < region_.hi[k])) throw DomainError("grid region must have lo < hi on every axis");
        if (resolution_[static_cast<std::size_t>(k)] < 1) throw DomainError("grid resolution must be positive");
        size_ *= static_cast<std::size_t>(resolution_[static_cast<std::size_t>(k)]);
    }
}

double Grid::coordinate(int axis, int index) const {
    const int count = resolution_[static_cast<std::size_t>(axis)];
    if (count == 1) return region_.lo[axis];
    if (index == count - 1) return region_.hi[axis];
    return region_.lo[axis] + (region_.hi[axis] - region_.lo[axis]) * index / (count - 1);
}

std::vector<int> Grid::multi_index(std::size_t flat) const {
    std::vector<int> idx(resolution_.size());
    for (std::size_t k = resolution_.size(); k-- > 0;) {
        const auto r = static_cast<std::size_t>(resolution_[k]);
        idx[k] = static_cast<int>(flat % r);
        flat /= r;
    }
    return idx;
}

std::size_t Grid::flat_index(std::span<const int> idx) const {
    std::size_t flat = 0;
    for (std::size_t k = 0; k < resolution_.size(); ++k)
        flat = flat * static_cast<std::size_t>(resolution_[k]) + static_cast<std::size_t>(idx[k]);
    return flat;
}

Vector Grid::node(std::size_t flat) const {
    const auto idx = multi_index(flat);
    Vector x(region_.dim());
    for (int k = 0; k < region_.dim(); ++k) x[k] = coordinate(k, idx[static_cast<std::size_t>(k)]);
    return x;
}

std::size_t Grid::nearest(const Vector& x) const {
    std::vector<int> idx(resolution_.size());
    for (std::size_t k = 0; k < resolution_.size(); ++k) {
        const int count = resolution_[k];
        const auto a = static_cast<Eigen::Index>(k);
        if (count == 1) continue;
        const double u = (x[a] - region_.lo[a]) / (region_.hi[a] - region_.lo[a]) * (count - 1);
        idx[k] = std::clamp(static_cast<int>(std::lround(u)), 0, count - 1);
    }
    return flat_index(idx);
}

// ---------------------------------------------------------------------------

double default_flat_threshold(const ConnectionField& conn) { return conn.has_analytic_partials() ? 1e-8 : 1e-6; }

FlatnessCertificate flatness_certificate(const ConnectionField& conn, const Box& region,
                                         const std::vector<int>& resolution, std::optional<double> threshold,
                                         std::optional<double> h) {
    if (region.dim() != conn.base_dim()) throw ShapeError("region dimension does not match the connection chart");
    const Grid grid(region, resolution);
    std::vector<double> norms(grid.size());
    parallel_for(grid.size(), [&](std::size_t k) {
        const Vector x = grid.node(k);
        try {
            norms[k] = curvature_tensor(conn, x, h).max_abs();
        } catch (const EvaluationError& e) {
            std::ostringstream os;
            os << e.what() << " (grid node " << x.transpose() << ")";
            throw EvaluationError(os.str());
        }
    });
    FlatnessCertificate cert;
    cert.region = region;
    cert.resolution = resolution;
    cert.threshold = threshold.value_or(default_flat_threshold(conn));
    if (!(cert.threshold > 0.0)) throw DomainError("flatness threshold must be positive");
    const auto worst = std::max_element(norms.begin(), norms.end());
    cert.max_curvature_norm = *worst;
    cert.worst_point = grid.node(static_cast<std::size_t>(worst - norms.begin()));
    cert.flat = cert.max_curvature_norm < cert.threshold;
    return cert;
}

// ---------------------------------------------------------------------------

FlatFrameResult::FlatFrameResult(ConnectionField conn, Grid grid, Vector basepoint, std::vector<Matrix> node_primed,
                                 IntegratorOptions integrator, double frame_fd_step) {
    CoefficientFunctional gamma = connection_functional(conn);
    state_ = std::make_shared<const State>(State{std::move(conn), std::move(gamma), std::move(grid),
                                                 std::move(basepoint), std::move(node_primed), integrator,
                                                 frame_fd_step});
}

Matrix FlatFrameResult::primed_from(const State& st, std::size_t node, const Vector& x) {
    const Vector origin = st.grid.node(node);
    const Vector delta = x - origin;
    if (max_abs(delta) == 0.0) return st.node_primed[node];
    const Path segment(
        Interval(0.0, 1.0), [origin, delta](double u) { return (origin + u * delta).eval(); },
        [delta](double) { return delta; });
    // P(x) = P(node) H(x -> node) along the segment.
    return st.node_primed[node] * transport_matrix(st.gamma, segment, 1.0, 0.0, st.integrator).matrix;
}

Matrix FlatFrameResult::primed_at(const Vector& x) const {
    if (x.size() != state_->grid.region().dim()) throw ShapeError("point has wrong number of coordinates");
    return primed_from(*state_, state_->grid.nearest(x), x);
}

Matrix FlatFrameResult::frame_at(const Vector& x) const { return primed_at(x).inverse(); }

Matrix FlatFrameResult::node_frame(std::size_t flat) const { return node_primed(flat).inverse(); }

FrameField FlatFrameResult::frame() const {
    auto st = state_;
    const int m = st->conn.fiber_dim();
    return FrameField::on_chart(
        m,
        [st](const Vector& x) { return primed_from(*st, st->grid.nearest(x), x).inverse().eval(); },
        [st](const Vector& x) {
            // One node for the whole stencil keeps the differences smooth.
            const std::size_t node = st->grid.nearest(x);
            std::vector<Matrix> out;
            for (Eigen::Index b = 0; b < x.size(); ++b) {
                const double step = scaled_step(st->frame_fd_step, x[b]);
                Vector xp = x, xm = x;
                xp[b] += step;
                xm[b] -= step;
                out.push_back((primed_from(*st, node, xp).inverse() - primed_from(*st, node, xm).inverse()) /
                              (2.0 * step));
            }
            return out;
        });
}

namespace {

struct SweepPoint {
    Vector x;
    std::vector<int> index;  // -1 until the axis has been swept
    Matrix primed;
};

}  // namespace

FlatFrameResult build_flat_frame(const ConnectionField& conn, const Vector& basepoint, const Box& region,
                                 const std::vector<int>& resolution, const FlatFrameOptions& opts) {
    const int n = conn.base_dim(), m = conn.fiber_dim();
    if (basepoint.size() != n || region.dim() != n) throw ShapeError("base point or region dimension mismatch");
    Grid grid(region, resolution);
    if (!region.contains(basepoint)) throw DomainError("base point lies outside the region");

    FlatnessCertificate cert = flatness_certificate(conn, region, resolution, opts.flat_threshold);
    if (!cert.flat) {
        std::ostringstream os;
        os << "connection is not flat on the region: max |R| = " << cert.max_curvature_norm << " at ("
           << cert.worst_point.transpose() << "), threshold " << cert.threshold;
        throw FlatnessError(os.str(), cert.max_curvature_norm);
    }

    std::vector<int> order = opts.axis_order;
    if (order.empty())
        for (int k = 0; k < n; ++k) order.push_back(k);
    {
        std::vector<int> sorted = order;
        std::sort(sorted.begin(), sorted.end());
        for (int k = 0; k < n; ++k)
            if (static_cast<int>(sorted.size()) != n || sorted[static_cast<std::size_t>(k)] != k)
                throw DomainError("axis order must be a permutation of the chart axes");
    }

    const CoefficientFunctional gamma = connection_functional(conn);
    std::vector<SweepPoint> points{{basepoint, std::vector<int>(static_cast<std::size_t>(n), -1),
                                    Matrix::Identity(m, m)}};

    for (int axis : order) {
        const int count = resolution[static_cast<std::size_t>(axis)];
        std::vector<std::vector<SweepPoint>> lines(points.size());
        parallel_for(points.size(), [&](std::size_t p) {
            const SweepPoint& from = points[p];
            const Vector origin = from.x;
            Vector dir = Vector::Zero(n);
            dir[axis] = 1.0;
            const Path line(
                Interval(region.lo[axis], region.hi[axis]),
                [origin, axis](double u) {
                    Vector x = origin;
                    x[axis] = u;
                    return x;
                },
                [dir](double) { return dir; });
            const double start = std::clamp(origin[axis], region.lo[axis], region.hi[axis]);

            std::vector<SweepPoint> out(static_cast<std::size_t>(count));
            auto march = [&](int first, int last, int stepdir) {
                double prev = start;
                Matrix primed = from.primed;
                for (int k = first; k != last; k += stepdir) {
                    const double u = grid.coordinate(axis, k);
                    // dP/du = P Gamma  =>  P(u) = P(prev) H(u -> prev).
                    primed = primed * transport_matrix(gamma, line, u, prev, opts.integrator).matrix;
                    prev = u;
                    SweepPoint& sp = out[static_cast<std::size_t>(k)];
                    sp.x = origin;
                    sp.x[axis] = u;
                    sp.index = from.index;
                    sp.index[static_cast<std::size_t>(axis)] = k;
                    sp.primed = primed;
                }
            };
            int split = 0;
            while (split < count && grid.coordinate(axis, split) < start) ++split;
            march(split, count, +1);
            march(split - 1, -1, -1);
            lines[p] = std::move(out);
        });
        std::vector<SweepPoint> next;
        next.reserve(points.size() * static_cast<std::size_t>(count));
        for (auto& line : lines)
            for (auto& sp : line) next.push_back(std::move(sp));
        points = std::move(next);
    }

    std::vector<Matrix> node_primed(grid.size());
    for (const auto& sp : points) node_primed[grid.flat_index(sp.index)] = sp.primed;

    FlatFrameResult result(conn, std::move(grid), basepoint, std::move(node_primed), opts.integrator,
                           opts.frame_fd_step);
    result.certificate = std::move(cert);
    const auto paths = random_test_paths(region, opts.residual_paths, opts.seed);
    result.residual = residual_coefficients(conn, result.frame(), paths, opts.residual_samples);
    return result;
}

FlatFrameResult build_flat_frame(const CoefficientFunctional& gamma, const Vector& basepoint, const Box& region,
                                 const std::vector<int>& resolution, const FlatFrameOptions& opts) {
    if (!gamma.connection())
        throw DomainError(
            "flat frame construction needs point-dependent (connection-induced) coefficients; "
            "this functional is not connection-induced");
    return build_flat_frame(*gamma.connection(), basepoint, region, resolution, opts);
}

std::vector<Path> random_test_paths(const Box& region, int count, std::uint64_t seed) {
    const int n = region.dim();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<Path> paths;
    for (int p = 0; p < count; ++p) {
        Vector centre(n), amp(n), freq(n), phase(n), drift(n);
        for (int a = 0; a < n; ++a) {
            const double w = region.hi[a] - region.lo[a];
            centre[a] = region.lo[a] + w * (0.25 + 0.5 * unit(rng));
            amp[a] = 0.2 * w * unit(rng);
            freq[a] = 0.5 + 2.5 * unit(rng);
            phase[a] = 2.0 * std::numbers::pi * unit(rng);
            drift[a] = 0.05 * w * (2.0 * unit(rng) - 1.0);
        }
        paths.emplace_back(
            Interval(0.0, 1.0),
            [=](double s) {
                Vector x(n);
                for (int a = 0; a < n; ++a)
                    x[a] = centre[a] + amp[a] * std::sin(freq[a] * s + phase[a]) + drift[a] * (s - 0.5);
                return x;
            },
            [=](double s) {
                Vector v(n);
                for (int a = 0; a < n; ++a) v[a] = amp[a] * freq[a] * std::cos(freq[a] * s + phase[a]) + drift[a];
                return v;
            });
    }
    return paths;
}

std::vector<TwoParamMap> random_test_maps(const Box& region, int count, std::uint64_t seed) {
    const int n = region.dim();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<TwoParamMap> maps;
    for (int p = 0; p < count; ++p) {
        // eta^a = c^a + u^a sin(fs^a s + ps^a) + v^a sin(ft^a t + pt^a) + w^a sin(s + t + pm^a)
        Vector c(n), u(n), fs(n), ps(n), v(n), ft(n), pt_(n), w(n), pm(n);
        for (int a = 0; a < n; ++a) {
            const double width = region.hi[a] - region.lo[a];
            c[a] = region.lo[a] + width * (0.3 + 0.4 * unit(rng));
            u[a] = 0.1 * width * (2.0 * unit(rng) - 1.0);
            v[a] = 0.1 * width * (2.0 * unit(rng) - 1.0);
            w[a] = 0.05 * width * (2.0 * unit(rng) - 1.0);
            fs[a] = 0.5 + 2.0 * unit(rng);
            ft[a] = 0.5 + 2.0 * unit(rng);
            ps[a] = 2.0 * std::numbers::pi * unit(rng);
            pt_[a] = 2.0 * std::numbers::pi * unit(rng);
            pm[a] = 2.0 * std::numbers::pi * unit(rng);
        }
        maps.emplace_back(
            Interval(0.0, 1.0), Interval(0.0, 1.0),
            [=](double s, double t) {
                Vector x(n);
                for (int a = 0; a < n; ++a)
                    x[a] = c[a] + u[a] * std::sin(fs[a] * s + ps[a]) + v[a] * std::sin(ft[a] * t + pt_[a]) +
                           w[a] * std::sin(s + t + pm[a]);
                return x;
            },
            [=](double s, double t) {
                Vector x(n);
                for (int a = 0; a < n; ++a)
                    x[a] = u[a] * fs[a] * std::cos(fs[a] * s + ps[a]) + w[a] * std::cos(s + t + pm[a]);
                return x;
            },
            [=](double s, double t) {
                Vector x(n);
                for (int a = 0; a < n; ++a)
                    x[a] = v[a] * ft[a] * std::cos(ft[a] * t + pt_[a]) + w[a] * std::cos(s + t + pm[a]);
                return x;
            });
    }
    return maps;
}

double residual_coefficients(const ConnectionField& conn, const FrameField& frame, std::span<const Path> test_paths,
                             int samples_per_path, double h_fd) {
    if (samples_per_path < 1) throw DomainError("samples per path must be positive");
    const CoefficientFunctional gamma = connection_functional(conn, h_fd);
    std::vector<double> worst(test_paths.size(), 0.0);
    parallel_for(test_paths.size(), [&](std::size_t p) {
        const Path& path = test_paths[p];
        const Interval& dom = path.domain();
        for (int k = 0; k < samples_per_path; ++k) {
            const double s = samples_per_path == 1 ? dom.lo : dom.lo + dom.length() * k / (samples_per_path - 1);
            worst[p] = std::max(worst[p], max_abs(frame_transform_coefficients(gamma, frame, path, s, h_fd)));
        }
    });
    return worst.empty() ? 0.0 : *std::max_element(worst.begin(), worst.end());
}

ConnectionField coefficients_from_zero_frame(const FrameField& frame, int base_dim, double h_fd) {
    if (!frame.is_chart_field()) throw ShapeError("pure-gauge coefficients need a frame field on the chart");
    const int m = frame.fiber_dim(), n = base_dim;
    return ConnectionField(ChartSpec(n, m), [frame, m, n, h_fd](const Vector& x) {
        const Matrix inv = frame.checked_inverse(frame.at_point(x));
        const auto d = frame.partials(x, h_fd);
        Tensor3 c({m, m, n});
        for (int a = 0; a < n; ++a) {
            const Matrix g = -d[static_cast<std::size_t>(a)] * inv;
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < m; ++j) c(i, j, a) = g(i, j);
        }
        return c;
    });
}

HolonomicObstruction holonomic_obstruction(const ConnectionField& conn, const FrameField& frame, const Vector& x,
                                           double h) {
    const int n = conn.base_dim();
    if (conn.fiber_dim() != n || frame.fiber_dim() != n)
        throw TangentBundleError("holonomicity needs frames of the tangent bundle (fiber_dim == base_dim)");
    const Matrix a = frame.at_point(x);
    frame.checked_inverse(a);
    const auto d = frame.partials(x, h);
    const Tensor3 torsion = torsion_tensor(conn, x);

    HolonomicObstruction out{Tensor3({n, n, n}), Tensor3({n, n, n}), 0.0};
    for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) {
            const Vector pred = -contract_torsion(torsion, a.col(j), a.col(k));
            double pair_norm = 0.0;
            for (int i = 0; i < n; ++i) {
                double c = 0.0;
                for (int l = 0; l < n; ++l)
                    c += a(l, j) * d[static_cast<std::size_t>(l)](i, k) - a(l, k) * d[static_cast<std::size_t>(l)](i, j);
                out.commutators(i, j, k) = c;
                out.torsion_prediction(i, j, k) = pred[i];
                pair_norm = std::max(pair_norm, std::abs(c));
            }
            out.max_norm = std::max(out.max_norm, pair_norm);
        }
    return out;
}

}  // namespace pt
