#include "pcunet/types.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <utility>

namespace pcunet {

void GridGeometry::validate() const {
    for (int a = 0; a < 3; ++a) {
        if (shape[a] < 1) {
            throw InvariantError("grid shape components must be >= 1");
        }
        if (!std::isfinite(spacing[a]) || spacing[a] <= 0.0) {
            throw InvariantError("grid spacing components must be finite and > 0");
        }
        if (!std::isfinite(origin[a])) {
            throw InvariantError("grid origin must be finite");
        }
    }
}

bool GridGeometry::matches(const GridGeometry& other, double tol) const noexcept {
    if (shape != other.shape) return false;
    for (int a = 0; a < 3; ++a) {
        if (std::abs(spacing[a] - other.spacing[a]) > tol) return false;
        if (std::abs(origin[a] - other.origin[a]) > tol) return false;
    }
    return true;
}

Vec3 voxel_to_world(const Index3& idx, const GridGeometry& geometry) {
    if (!geometry.contains(idx)) {
        throw BoundsError("voxel index (" + std::to_string(idx[0]) + "," + std::to_string(idx[1]) +
                          "," + std::to_string(idx[2]) + ") outside grid");
    }
    return {geometry.origin[0] + static_cast<double>(idx[0]) * geometry.spacing[0],
            geometry.origin[1] + static_cast<double>(idx[1]) * geometry.spacing[1],
            geometry.origin[2] + static_cast<double>(idx[2]) * geometry.spacing[2]};
}

VoxelVolume::VoxelVolume(GridGeometry geometry, std::vector<float> data)
    : GridBase(geometry, std::move(data)) {
    if (!std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); })) {
        throw InvariantError("volume contains non-finite values");
    }
}

VoxelVolume VoxelVolume::filled(GridGeometry geometry, float value) {
    geometry.validate();
    return VoxelVolume(geometry, std::vector<float>(geometry.voxel_count(), value));
}

MaskVolume::MaskVolume(GridGeometry geometry, std::vector<std::uint8_t> data)
    : GridBase(geometry, std::move(data)) {
    if (!std::all_of(data_.begin(), data_.end(), [](std::uint8_t v) { return v <= 1; })) {
        throw InvariantError("mask values must be 0 or 1");
    }
}

MaskVolume MaskVolume::filled(GridGeometry geometry, std::uint8_t value) {
    geometry.validate();
    return MaskVolume(geometry, std::vector<std::uint8_t>(geometry.voxel_count(), value));
}

std::size_t MaskVolume::foreground_count() const noexcept {
    return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), std::uint8_t{1}));
}

void require_aligned(const VoxelVolume& image, const MaskVolume& mask) {
    if (!image.geometry().matches(mask.geometry())) {
        throw InvariantError("mask grid (shape/spacing/origin) does not match image grid");
    }
}

PointCloud::PointCloud(std::vector<Vec3> points, bool centered)
    : points_(std::move(points)), centered_(centered) {
    for (const auto& p : points_) {
        if (!std::isfinite(p[0]) || !std::isfinite(p[1]) || !std::isfinite(p[2])) {
            throw InvariantError("point cloud contains non-finite coordinates");
        }
    }
    if (centered_) {
        if (points_.empty()) throw InvariantError("centered cloud must be nonempty");
        const Vec3 c = centroid();
        for (double v : c) {
            if (std::abs(v) > 1e-6) {
                throw InvariantError("cloud flagged centered but centroid is not the origin");
            }
        }
    }
}

Vec3 PointCloud::centroid() const {
    if (points_.empty()) throw InvariantError("centroid of empty cloud");
    Vec3 sum{0.0, 0.0, 0.0};
    for (const auto& p : points_) {
        sum[0] += p[0];
        sum[1] += p[1];
        sum[2] += p[2];
    }
    const double n = static_cast<double>(points_.size());
    return {sum[0] / n, sum[1] / n, sum[2] / n};
}

TriangleMesh::TriangleMesh(std::vector<Vec3> vertices, std::vector<Face> faces)
    : vertices_(std::move(vertices)), faces_(std::move(faces)) {
    const auto n = vertices_.size();
    for (const auto& f : faces_) {
        if (f[0] >= n || f[1] >= n || f[2] >= n) {
            throw InvariantError("face index out of range");
        }
        if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) {
            throw InvariantError("degenerate face (repeated vertex index)");
        }
    }
}

namespace {

std::map<std::pair<std::uint32_t, std::uint32_t>, int> edge_usage(const std::vector<Face>& faces) {
    std::map<std::pair<std::uint32_t, std::uint32_t>, int> edges;
    for (const auto& f : faces) {
        for (int k = 0; k < 3; ++k) {
            auto a = f[k];
            auto b = f[(k + 1) % 3];
            if (a > b) std::swap(a, b);
            ++edges[{a, b}];
        }
    }
    return edges;
}

}  // namespace

std::size_t TriangleMesh::edge_count() const { return edge_usage(faces_).size(); }

std::int64_t TriangleMesh::euler_characteristic() const {
    return static_cast<std::int64_t>(vertices_.size()) - static_cast<std::int64_t>(edge_count()) +
           static_cast<std::int64_t>(faces_.size());
}

bool TriangleMesh::is_closed() const {
    const auto edges = edge_usage(faces_);
    return !edges.empty() &&
           std::all_of(edges.begin(), edges.end(), [](const auto& e) { return e.second == 2; });
}

}  // namespace pcunet
