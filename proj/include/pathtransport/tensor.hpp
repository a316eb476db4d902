#pragma once

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <vector>

namespace pt {

// Dense row-major array of fixed rank. Indices are zero-based; index order
// follows the component notation, upper index first (e.g. Gamma^i_{.j alpha}
// is stored as (i, j, alpha)).
template <std::size_t Rank>
class Tensor {
public:
    using Shape = std::array<int, Rank>;

    Tensor() { shape_.fill(0); }
    explicit Tensor(Shape shape, double fill = 0.0) : shape_(shape) {
        std::size_t n = 1;
        for (int d : shape_) n *= static_cast<std::size_t>(d);
        data_.assign(n, fill);
    }

    const Shape& shape() const noexcept { return shape_; }
    int extent(std::size_t axis) const noexcept { return shape_[axis]; }
    std::size_t size() const noexcept { return data_.size(); }

    template <typename... I>
    double& operator()(I... idx) noexcept {
        static_assert(sizeof...(I) == Rank);
        return data_[offset({static_cast<int>(idx)...})];
    }
    template <typename... I>
    double operator()(I... idx) const noexcept {
        static_assert(sizeof...(I) == Rank);
        return data_[offset({static_cast<int>(idx)...})];
    }

    const std::vector<double>& data() const noexcept { return data_; }
    std::vector<double>& data() noexcept { return data_; }

    bool all_finite() const noexcept {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    double max_abs() const noexcept {
        double m = 0.0;
        for (double v : data_) m = std::max(m, std::abs(v));
        return m;
    }

private:
    std::size_t offset(const std::array<int, Rank>& idx) const noexcept {
        std::size_t off = 0;
        for (std::size_t k = 0; k < Rank; ++k) {
            assert(idx[k] >= 0 && idx[k] < shape_[k]);
            off = off * static_cast<std::size_t>(shape_[k]) + static_cast<std::size_t>(idx[k]);
        }
        return off;
    }

    Shape shape_;
    std::vector<double> data_;
};

using Tensor3 = Tensor<3>;
using Tensor4 = Tensor<4>;

}  // namespace pt
