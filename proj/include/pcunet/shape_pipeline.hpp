#pragma once

// Mask -> isosurface mesh -> dense vertex cloud -> sparse cloud -> centred cloud.

#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

#include "pcunet/types.hpp"

namespace pcunet::shape {

inline constexpr std::size_t kDefaultCloudSize = 4096;

enum class DownsampleMethod { FarthestPoint, Random };

DownsampleMethod parse_downsample_method(std::string_view name);
std::string_view to_string(DownsampleMethod method);

/// Isosurface of the mask at `iso_level`, extracted by marching tetrahedra
/// over a six-tetrahedron split of every lattice cube (voxel centres are the
/// lattice). The grid is padded with background so the surface is closed.
/// Vertices lie on lattice edges, linearly interpolated, in world mm.
/// Throws InvariantError("no isosurface") for all-zero or all-one masks.
TriangleMesh mask_to_mesh(const MaskVolume& mask, double iso_level = 0.5);

/// The mesh vertex list as a cloud, order preserved.
PointCloud mesh_to_dense_cloud(const TriangleMesh& mesh);

/// Greedy farthest-point selection order starting from `start`. Ties go to
/// the lowest index; already selected points are never re-selected.
std::vector<std::size_t> farthest_point_order(const std::vector<Vec3>& points, std::size_t n,
                                              std::size_t start);

/// Indices of the n selected points, ascending. Farthest-point sampling
/// starts from a seed-chosen point; random sampling draws without
/// replacement.
std::vector<std::size_t> downsample_indices(const PointCloud& cloud, std::size_t n,
                                            DownsampleMethod method, std::uint64_t seed);

/// Subset of exactly n input points, kept in input order.
PointCloud downsample_cloud(const PointCloud& cloud, std::size_t n = kDefaultCloudSize,
                            DownsampleMethod method = DownsampleMethod::FarthestPoint,
                            std::uint64_t seed = 0);

/// Subtracts the centroid; returns the centred cloud and the removed centroid.
std::pair<PointCloud, Vec3> center_cloud(const PointCloud& cloud);

/// Translates every point by `offset`.
PointCloud translate(const PointCloud& cloud, const Vec3& offset);

/// Marks the voxel nearest to each point (points outside the grid are dropped).
MaskVolume rasterize_cloud(const PointCloud& cloud, const GridGeometry& geometry);

/// True when the 2x2x2 voxel neighbourhood enclosing `world_point` contains
/// both foreground and background (outside the grid counts as background),
/// i.e. the point lies in the one-voxel band around the mask surface.
bool in_surface_band(const MaskVolume& mask, const Vec3& world_point);

struct GroundTruthCloud {
    PointCloud cloud;  // centred
    Vec3 centroid;     // world mm, add back to recover positions
    std::size_t dense_size = 0;
};

/// mask -> mesh -> dense cloud -> downsample(n) -> centre.
GroundTruthCloud cloud_from_mask(const MaskVolume& mask, std::size_t n, DownsampleMethod method,
                                 std::uint64_t seed);

}  // namespace pcunet::shape
