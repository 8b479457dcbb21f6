#pragma once

// Shared data model: image/mask grids, point clouds and triangle meshes.
//
// Grids are indexed (x, y, z) with x varying fastest in memory, i.e. the
// linear offset of voxel (x, y, z) is x + nx * (y + ny * z). World
// coordinates are axis-aligned: world = origin + index * spacing (mm).

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pcunet/error.hpp"

namespace pcunet {

using Vec3 = std::array<double, 3>;
using Index3 = std::array<std::int64_t, 3>;

/// Shape, spacing (mm/voxel) and origin (mm) of a voxel grid.
struct GridGeometry {
    Index3 shape{1, 1, 1};
    Vec3 spacing{1.0, 1.0, 1.0};
    Vec3 origin{0.0, 0.0, 0.0};

    [[nodiscard]] std::size_t voxel_count() const noexcept {
        return static_cast<std::size_t>(shape[0] * shape[1] * shape[2]);
    }
    [[nodiscard]] bool contains(const Index3& idx) const noexcept {
        return idx[0] >= 0 && idx[1] >= 0 && idx[2] >= 0 && idx[0] < shape[0] &&
               idx[1] < shape[1] && idx[2] < shape[2];
    }
    [[nodiscard]] std::size_t offset(std::int64_t x, std::int64_t y, std::int64_t z) const noexcept {
        return static_cast<std::size_t>(x + shape[0] * (y + shape[1] * z));
    }

    /// Throws InvariantError unless every shape component >= 1 and every
    /// spacing component is finite and > 0.
    void validate() const;

    /// Exact equality of shape and equality of spacing/origin within `tol`.
    [[nodiscard]] bool matches(const GridGeometry& other, double tol = 1e-6) const noexcept;

    bool operator==(const GridGeometry&) const = default;
};

/// origin + index * spacing, componentwise. Throws BoundsError when `idx`
/// lies outside the grid.
Vec3 voxel_to_world(const Index3& idx, const GridGeometry& geometry);

namespace detail {

template <typename T>
class GridBase {
public:
    using value_type = T;

    [[nodiscard]] const GridGeometry& geometry() const noexcept { return geometry_; }
    [[nodiscard]] const Index3& shape() const noexcept { return geometry_.shape; }
    [[nodiscard]] const Vec3& spacing() const noexcept { return geometry_.spacing; }
    [[nodiscard]] const Vec3& origin() const noexcept { return geometry_.origin; }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
    [[nodiscard]] std::span<const T> data() const noexcept { return data_; }

    [[nodiscard]] T at(std::int64_t x, std::int64_t y, std::int64_t z) const noexcept {
        return data_[geometry_.offset(x, y, z)];
    }
    [[nodiscard]] T operator[](std::size_t i) const noexcept { return data_[i]; }

protected:
    GridBase(GridGeometry geometry, std::vector<T> data)
        : geometry_(geometry), data_(std::move(data)) {
        geometry_.validate();
        if (data_.size() != geometry_.voxel_count()) {
            throw InvariantError("grid data size " + std::to_string(data_.size()) +
                                 " does not match shape voxel count " +
                                 std::to_string(geometry_.voxel_count()));
        }
    }

    GridGeometry geometry_;
    std::vector<T> data_;
};

}  // namespace detail

/// Real-valued intensity grid. All values are finite.
class VoxelVolume : public detail::GridBase<float> {
public:
    VoxelVolume(GridGeometry geometry, std::vector<float> data);
    /// Constant-filled volume.
    static VoxelVolume filled(GridGeometry geometry, float value);
};

/// Binary grid; every voxel is 0 or 1.
class MaskVolume : public detail::GridBase<std::uint8_t> {
public:
    MaskVolume(GridGeometry geometry, std::vector<std::uint8_t> data);
    static MaskVolume filled(GridGeometry geometry, std::uint8_t value);

    [[nodiscard]] std::size_t foreground_count() const noexcept;
};

/// Throws InvariantError unless image and mask share grid metadata.
void require_aligned(const VoxelVolume& image, const MaskVolume& mask);

/// Ordered list of 3D points in mm. When `centered` is set the centroid is
/// the origin (within 1e-6 mm per axis).
class PointCloud {
public:
    PointCloud() = default;
    explicit PointCloud(std::vector<Vec3> points, bool centered = false);

    [[nodiscard]] const std::vector<Vec3>& points() const noexcept { return points_; }
    [[nodiscard]] std::size_t size() const noexcept { return points_.size(); }
    [[nodiscard]] bool empty() const noexcept { return points_.empty(); }
    [[nodiscard]] bool centered() const noexcept { return centered_; }
    [[nodiscard]] const Vec3& operator[](std::size_t i) const noexcept { return points_[i]; }

    [[nodiscard]] Vec3 centroid() const;

private:
    std::vector<Vec3> points_;
    bool centered_ = false;
};

using Face = std::array<std::uint32_t, 3>;

/// Vertices in mm plus triangles referencing them. Faces are validated:
/// indices in range and pairwise distinct.
class TriangleMesh {
public:
    TriangleMesh() = default;
    TriangleMesh(std::vector<Vec3> vertices, std::vector<Face> faces);

    [[nodiscard]] const std::vector<Vec3>& vertices() const noexcept { return vertices_; }
    [[nodiscard]] const std::vector<Face>& faces() const noexcept { return faces_; }
    [[nodiscard]] bool empty() const noexcept { return vertices_.empty(); }

    /// Number of distinct undirected edges implied by the faces.
    [[nodiscard]] std::size_t edge_count() const;
    /// V - E + F.
    [[nodiscard]] std::int64_t euler_characteristic() const;
    /// True when every undirected edge is shared by exactly two faces.
    [[nodiscard]] bool is_closed() const;

private:
    std::vector<Vec3> vertices_;
    std::vector<Face> faces_;
};

}  // namespace pcunet
