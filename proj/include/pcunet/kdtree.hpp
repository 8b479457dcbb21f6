#pragma once

// Static 3D k-d tree for exact nearest-neighbour queries.
//
// Ties between equidistant points resolve to the lowest input index, so a
// query returns exactly what a brute-force scan in index order returns.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "pcunet/types.hpp"

namespace pcunet {

[[nodiscard]] inline double squared_distance(const Vec3& a, const Vec3& b) noexcept {
    const double dx = a[0] - b[0];
    const double dy = a[1] - b[1];
    const double dz = a[2] - b[2];
    return dx * dx + dy * dy + dz * dz;
}

struct Neighbor {
    std::size_t index = 0;
    double squared_distance = std::numeric_limits<double>::infinity();
};

class KdTree {
public:
    explicit KdTree(std::span<const Vec3> points) : points_(points.begin(), points.end()) {
        order_.resize(points_.size());
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        axis_.assign(points_.size(), 0);
        build(0, order_.size());
    }

    [[nodiscard]] std::size_t size() const noexcept { return points_.size(); }

    /// Nearest stored point to `q`. Requires a nonempty tree.
    [[nodiscard]] Neighbor nearest(const Vec3& q) const noexcept {
        Neighbor best;
        best.index = std::numeric_limits<std::size_t>::max();
        search(q, 0, order_.size(), best);
        return best;
    }

private:
    static constexpr std::size_t kLeafSize = 8;

    void build(std::size_t lo, std::size_t hi) {
        if (hi - lo <= kLeafSize) return;
        Vec3 mn{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
                std::numeric_limits<double>::infinity()};
        Vec3 mx{-mn[0], -mn[1], -mn[2]};
        for (std::size_t i = lo; i < hi; ++i) {
            const auto& p = points_[order_[i]];
            for (int a = 0; a < 3; ++a) {
                mn[a] = std::min(mn[a], p[a]);
                mx[a] = std::max(mx[a], p[a]);
            }
        }
        int axis = 0;
        for (int a = 1; a < 3; ++a) {
            if (mx[a] - mn[a] > mx[axis] - mn[axis]) axis = a;
        }
        const std::size_t mid = lo + (hi - lo) / 2;
        std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(lo),
                         order_.begin() + static_cast<std::ptrdiff_t>(mid),
                         order_.begin() + static_cast<std::ptrdiff_t>(hi),
                         [&](std::size_t a, std::size_t b) { return points_[a][axis] < points_[b][axis]; });
        axis_[mid] = static_cast<std::uint8_t>(axis);
        build(lo, mid);
        build(mid + 1, hi);
    }

    void consider(const Vec3& q, std::size_t idx, Neighbor& best) const noexcept {
        const double d2 = squared_distance(q, points_[idx]);
        if (d2 < best.squared_distance || (d2 == best.squared_distance && idx < best.index)) {
            best.squared_distance = d2;
            best.index = idx;
        }
    }

    void search(const Vec3& q, std::size_t lo, std::size_t hi, Neighbor& best) const noexcept {
        if (hi - lo <= kLeafSize) {
            for (std::size_t i = lo; i < hi; ++i) consider(q, order_[i], best);
            return;
        }
        const std::size_t mid = lo + (hi - lo) / 2;
        const int axis = axis_[mid];
        const double split = points_[order_[mid]][axis];
        const double diff = q[axis] - split;
        consider(q, order_[mid], best);
        // Left holds coordinates <= split, right holds >= split.
        const bool left_first = diff <= 0.0;
        if (left_first) {
            search(q, lo, mid, best);
            if (diff * diff <= best.squared_distance) search(q, mid + 1, hi, best);
        } else {
            search(q, mid + 1, hi, best);
            if (diff * diff <= best.squared_distance) search(q, lo, mid, best);
        }
    }

    std::vector<Vec3> points_;
    std::vector<std::size_t> order_;
    std::vector<std::uint8_t> axis_;
};

}  // namespace pcunet
