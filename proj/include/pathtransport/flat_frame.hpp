#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "pathtransport/geometry.hpp"
#include "pathtransport/transport.hpp"

namespace pt {

// Axis-aligned box in the chart.
struct Box {
    Vector lo;
    Vector hi;

    int dim() const noexcept { return static_cast<int>(lo.size()); }
    bool contains(const Vector& x) const;
};

// Tensor-product grid: resolution[k] equally spaced nodes on [lo_k, hi_k]
// (a single node sits at lo_k).
class Grid {
public:
    Grid(Box region, std::vector<int> resolution);

    const Box& region() const noexcept { return region_; }
    const std::vector<int>& resolution() const noexcept { return resolution_; }
    std::size_t size() const noexcept { return size_; }

    double coordinate(int axis, int index) const;
    Vector node(std::size_t flat) const;
    std::vector<int> multi_index(std::size_t flat) const;
    std::size_t flat_index(std::span<const int> idx) const;
    // Nearest node (per-axis rounding, clamped to the grid).
    std::size_t nearest(const Vector& x) const;

private:
    Box region_;
    std::vector<int> resolution_;
    std::size_t size_ = 0;
};

// Default flatness threshold: 1e-8 with analytic partials, 1e-6 otherwise.
double default_flat_threshold(const ConnectionField& conn);

struct FlatnessCertificate {
    double max_curvature_norm = 0.0;  // max over nodes and indices of |R^i_{.j alpha beta}|
    Vector worst_point;
    Box region;
    std::vector<int> resolution;
    double threshold = 0.0;
    bool flat = false;
};

FlatnessCertificate flatness_certificate(const ConnectionField& conn, const Box& region,
                                         const std::vector<int>& resolution,
                                         std::optional<double> threshold = {}, std::optional<double> h = {});

struct FlatFrameOptions {
    // Order in which coordinate axes are swept from the base point; empty
    // means ascending.
    std::vector<int> axis_order;
    IntegratorOptions integrator = [] {
        IntegratorOptions o;
        o.rtol = 1e-12;
        o.atol = 1e-14;
        return o;
    }();
    std::optional<double> flat_threshold;
    int residual_paths = 20;
    int residual_samples = 16;
    std::uint64_t seed = 1;
    // Relative step of the central differences that give the frame's partials.
    double frame_fd_step = 1e-4;
};

// Flat frame built by integrating dP/ds = P Gamma(s; gamma) along coordinate
// lines from P(base point) = I, where P = [A^{i'}_i]. The frame field itself
// is A = P^-1 = [A^i_{i'}]. Off-grid points are reached by re-integrating
// along the straight segment from the nearest node.
class FlatFrameResult {
public:
    FlatFrameResult(ConnectionField conn, Grid grid, Vector basepoint, std::vector<Matrix> node_primed,
                    IntegratorOptions integrator, double frame_fd_step);

    const Grid& grid() const noexcept { return state_->grid; }
    const Vector& basepoint() const noexcept { return state_->basepoint; }

    // P = [A^{i'}_i] and A = P^-1 at a grid node.
    const Matrix& node_primed(std::size_t flat) const { return state_->node_primed.at(flat); }
    Matrix node_frame(std::size_t flat) const;

    Matrix primed_at(const Vector& x) const;
    Matrix frame_at(const Vector& x) const;
    FrameField frame() const;

    double residual = 0.0;
    FlatnessCertificate certificate;

private:
    struct State {
        ConnectionField conn;
        CoefficientFunctional gamma;
        Grid grid;
        Vector basepoint;
        std::vector<Matrix> node_primed;
        IntegratorOptions integrator;
        double frame_fd_step;
    };
    static Matrix primed_from(const State& st, std::size_t node, const Vector& x);
    std::shared_ptr<const State> state_;
};

FlatFrameResult build_flat_frame(const ConnectionField& conn, const Vector& basepoint, const Box& region,
                                 const std::vector<int>& resolution, const FlatFrameOptions& opts = {});

// Functionals that are not connection-induced are rejected (DomainError):
// the construction needs coefficients that depend on the point only.
FlatFrameResult build_flat_frame(const CoefficientFunctional& gamma, const Vector& basepoint, const Box& region,
                                 const std::vector<int>& resolution, const FlatFrameOptions& opts = {});

// Smooth random paths on [0, 1] that stay inside `region`, with analytic
// velocities. Deterministic in `seed`.
std::vector<Path> random_test_paths(const Box& region, int count, std::uint64_t seed);

// Smooth random two-parameter maps on [0, 1] x [0, 1] inside `region`, with
// analytic partials.
std::vector<TwoParamMap> random_test_maps(const Box& region, int count, std::uint64_t seed);

// max over paths, samples and indices of |frame_transform_coefficients| for
// the connection-induced functional. Samples are equally spaced in each
// path's domain, endpoints included.
double residual_coefficients(const ConnectionField& conn, const FrameField& frame,
                             std::span<const Path> test_paths, int samples_per_path,
                             double h_fd = kDefaultFdStep);

// Connection whose coefficients vanish in the frame A:
//   Gamma^i_{.j alpha}(x) = -(d A / d x^alpha) A^-1.
// The frame must be a chart field on a base of dimension base_dim.
ConnectionField coefficients_from_zero_frame(const FrameField& frame, int base_dim,
                                             double h_fd = kDefaultFdStep);

struct HolonomicObstruction {
    // [e_{j'}, e_{k'}]^i stored (i, j', k'), for e_{j'} = A^i_{j'} d/dx^i.
    Tensor3 commutators;
    // -T(e_{j'}, e_{k'})^i from the connection's torsion at x; equals the
    // commutators when the frame has vanishing coefficients.
    Tensor3 torsion_prediction;
    // max over pairs (j', k') of the max-abs component of the commutator.
    double max_norm = 0.0;
};

HolonomicObstruction holonomic_obstruction(const ConnectionField& conn, const FrameField& frame, const Vector& x,
                                           double h = 1e-4);

}  // namespace pt
