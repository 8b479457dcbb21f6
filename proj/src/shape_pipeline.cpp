#include "pcunet/shape_pipeline.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <string>
#include <unordered_map>

#include "pcunet/kdtree.hpp"
#include "pcunet/rng.hpp"

namespace pcunet::shape {

DownsampleMethod parse_downsample_method(std::string_view name) {
    if (name == "fps" || name == "farthest_point") return DownsampleMethod::FarthestPoint;
    if (name == "random") return DownsampleMethod::Random;
    throw ConfigError("unknown downsampling method '" + std::string(name) + "' (fps | random)");
}

std::string_view to_string(DownsampleMethod method) {
    return method == DownsampleMethod::FarthestPoint ? "fps" : "random";
}

namespace {

// Kuhn split of the unit cube: one tetrahedron per axis permutation, each a
// monotone path (0,0,0) -> (1,1,1). Corner c encodes offset (c&1, c>>1&1, c>>2&1).
constexpr std::array<std::array<int, 4>, 6> kTetrahedra{{
    {0, 1, 3, 7},
    {0, 1, 5, 7},
    {0, 2, 3, 7},
    {0, 2, 6, 7},
    {0, 4, 5, 7},
    {0, 4, 6, 7},
}};

class SurfaceBuilder {
public:
    SurfaceBuilder(const MaskVolume& mask, double iso) : mask_(mask), iso_(iso) {
        const auto& s = mask.shape();
        // Padded lattice runs from -1 to n along each axis.
        for (int a = 0; a < 3; ++a) padded_[a] = static_cast<std::uint64_t>(s[a] + 2);
    }

    TriangleMesh build() {
        const auto& s = mask_.shape();
        for (std::int64_t z = -1; z < s[2]; ++z)
            for (std::int64_t y = -1; y < s[1]; ++y)
                for (std::int64_t x = -1; x < s[0]; ++x) march_cube({x, y, z});
        return TriangleMesh(std::move(vertices_), std::move(faces_));
    }

private:
    double value(const Index3& p) const {
        return mask_.geometry().contains(p) ? static_cast<double>(mask_.at(p[0], p[1], p[2])) : 0.0;
    }

    std::uint64_t lattice_id(const Index3& p) const {
        return static_cast<std::uint64_t>(p[0] + 1) +
               padded_[0] * (static_cast<std::uint64_t>(p[1] + 1) +
                             padded_[1] * static_cast<std::uint64_t>(p[2] + 1));
    }

    Vec3 world(const Index3& p) const {
        const auto& g = mask_.geometry();
        return {g.origin[0] + static_cast<double>(p[0]) * g.spacing[0],
                g.origin[1] + static_cast<double>(p[1]) * g.spacing[1],
                g.origin[2] + static_cast<double>(p[2]) * g.spacing[2]};
    }

    std::uint32_t edge_vertex(const Index3& a, double fa, const Index3& b, double fb) {
        auto ia = lattice_id(a);
        auto ib = lattice_id(b);
        const std::uint64_t total = padded_[0] * padded_[1] * padded_[2];
        const std::uint64_t key = std::min(ia, ib) * total + std::max(ia, ib);
        if (auto it = edge_vertices_.find(key); it != edge_vertices_.end()) return it->second;
        const double t = (iso_ - fa) / (fb - fa);
        const Vec3 pa = world(a);
        const Vec3 pb = world(b);
        const auto idx = static_cast<std::uint32_t>(vertices_.size());
        vertices_.push_back({pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1]),
                             pa[2] + t * (pb[2] - pa[2])});
        edge_vertices_.emplace(key, idx);
        return idx;
    }

    // Emits (a, b, c) oriented so its normal points from `inside` to `outside`.
    void emit(std::uint32_t a, std::uint32_t b, std::uint32_t c, const Vec3& inside, const Vec3& outside) {
        const auto& pa = vertices_[a];
        const auto& pb = vertices_[b];
        const auto& pc = vertices_[c];
        const Vec3 u{pb[0] - pa[0], pb[1] - pa[1], pb[2] - pa[2]};
        const Vec3 v{pc[0] - pa[0], pc[1] - pa[1], pc[2] - pa[2]};
        const Vec3 n{u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]};
        const double dir = n[0] * (outside[0] - inside[0]) + n[1] * (outside[1] - inside[1]) +
                           n[2] * (outside[2] - inside[2]);
        if (dir < 0.0) {
            faces_.push_back({a, c, b});
        } else {
            faces_.push_back({a, b, c});
        }
    }

    void march_cube(const Index3& base) {
        std::array<Index3, 8> corner{};
        std::array<double, 8> f{};
        int inside_count = 0;
        for (int c = 0; c < 8; ++c) {
            corner[c] = {base[0] + (c & 1), base[1] + ((c >> 1) & 1), base[2] + ((c >> 2) & 1)};
            f[c] = value(corner[c]);
            if (f[c] > iso_) ++inside_count;
        }
        if (inside_count == 0 || inside_count == 8) return;
        for (const auto& tet : kTetrahedra) march_tetrahedron(tet, corner, f);
    }

    void march_tetrahedron(const std::array<int, 4>& tet, const std::array<Index3, 8>& corner,
                           const std::array<double, 8>& f) {
        std::array<int, 4> in{};
        std::array<int, 4> out{};
        int n_in = 0;
        int n_out = 0;
        for (int c : tet) {
            if (f[c] > iso_) {
                in[n_in++] = c;
            } else {
                out[n_out++] = c;
            }
        }
        if (n_in == 0 || n_out == 0) return;

        auto centroid = [&](const std::array<int, 4>& ids, int count) {
            Vec3 m{0, 0, 0};
            for (int i = 0; i < count; ++i) {
                const auto w = world(corner[ids[i]]);
                for (int a = 0; a < 3; ++a) m[a] += w[a] / count;
            }
            return m;
        };
        const Vec3 cin = centroid(in, n_in);
        const Vec3 cout = centroid(out, n_out);
        auto vert = [&](int i, int o) { return edge_vertex(corner[i], f[i], corner[o], f[o]); };

        if (n_in == 1 || n_out == 1) {
            // One vertex separated from the other three: a single triangle.
            const bool lone_inside = n_in == 1;
            const int lone = lone_inside ? in[0] : out[0];
            const auto& others = lone_inside ? out : in;
            std::array<std::uint32_t, 3> v{};
            for (int k = 0; k < 3; ++k) {
                v[k] = lone_inside ? vert(lone, others[k]) : vert(others[k], lone);
            }
            emit(v[0], v[1], v[2], cin, cout);
            return;
        }
        // Two inside, two outside: a quad split into two triangles.
        const auto v00 = vert(in[0], out[0]);
        const auto v01 = vert(in[0], out[1]);
        const auto v11 = vert(in[1], out[1]);
        const auto v10 = vert(in[1], out[0]);
        emit(v00, v01, v11, cin, cout);
        emit(v00, v11, v10, cin, cout);
    }

    const MaskVolume& mask_;
    double iso_;
    std::array<std::uint64_t, 3> padded_{};
    std::vector<Vec3> vertices_;
    std::vector<Face> faces_;
    std::unordered_map<std::uint64_t, std::uint32_t> edge_vertices_;
};

}  // namespace

TriangleMesh mask_to_mesh(const MaskVolume& mask, double iso_level) {
    if (!(iso_level > 0.0 && iso_level < 1.0)) throw InvariantError("iso_level must lie in (0, 1)");
    const auto fg = mask.foreground_count();
    if (fg == 0 || fg == mask.size()) throw InvariantError("no isosurface");
    return SurfaceBuilder(mask, iso_level).build();
}

PointCloud mesh_to_dense_cloud(const TriangleMesh& mesh) {
    if (mesh.empty()) throw InvariantError("mesh has no vertices");
    return PointCloud(mesh.vertices());
}

std::vector<std::size_t> farthest_point_order(const std::vector<Vec3>& points, std::size_t n,
                                              std::size_t start) {
    if (n > points.size()) throw InvariantError("cannot select more points than available");
    if (n == 0) return {};
    if (start >= points.size()) throw BoundsError("farthest-point start index out of range");
    std::vector<double> nearest(points.size(), std::numeric_limits<double>::infinity());
    std::vector<char> taken(points.size(), 0);
    std::vector<std::size_t> order;
    order.reserve(n);
    std::size_t current = start;
    for (std::size_t k = 0; k < n; ++k) {
        order.push_back(current);
        taken[current] = 1;
        if (k + 1 == n) break;
        std::size_t best = points.size();
        double best_d = -1.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (taken[i]) continue;
            nearest[i] = std::min(nearest[i], squared_distance(points[i], points[current]));
            if (nearest[i] > best_d) {
                best_d = nearest[i];
                best = i;
            }
        }
        current = best;
    }
    return order;
}

std::vector<std::size_t> downsample_indices(const PointCloud& cloud, std::size_t n,
                                            DownsampleMethod method, std::uint64_t seed) {
    if (n == 0) throw InvariantError("downsample target must be >= 1");
    if (cloud.size() < n) {
        throw InvariantError("cloud has " + std::to_string(cloud.size()) + " points, fewer than the " +
                             std::to_string(n) +
                             " requested; refine the mesh (finer grid) or request fewer points");
    }
    Rng rng(seed);
    std::vector<std::size_t> idx;
    if (method == DownsampleMethod::FarthestPoint) {
        idx = farthest_point_order(cloud.points(), n, static_cast<std::size_t>(rng.below(cloud.size())));
    } else {
        std::vector<std::size_t> all(cloud.size());
        std::iota(all.begin(), all.end(), std::size_t{0});
        for (std::size_t k = 0; k < n; ++k) {
            const auto j = k + static_cast<std::size_t>(rng.below(all.size() - k));
            std::swap(all[k], all[j]);
        }
        idx.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n));
    }
    std::sort(idx.begin(), idx.end());
    return idx;
}

PointCloud downsample_cloud(const PointCloud& cloud, std::size_t n, DownsampleMethod method,
                            std::uint64_t seed) {
    const auto idx = downsample_indices(cloud, n, method, seed);
    std::vector<Vec3> pts;
    pts.reserve(idx.size());
    for (auto i : idx) pts.push_back(cloud[i]);
    return PointCloud(std::move(pts));
}

std::pair<PointCloud, Vec3> center_cloud(const PointCloud& cloud) {
    const Vec3 c = cloud.centroid();
    std::vector<Vec3> pts(cloud.points());
    for (auto& p : pts) {
        for (int a = 0; a < 3; ++a) p[a] -= c[a];
    }
    return {PointCloud(std::move(pts), true), c};
}

PointCloud translate(const PointCloud& cloud, const Vec3& offset) {
    std::vector<Vec3> pts(cloud.points());
    for (auto& p : pts) {
        for (int a = 0; a < 3; ++a) p[a] += offset[a];
    }
    return PointCloud(std::move(pts));
}

MaskVolume rasterize_cloud(const PointCloud& cloud, const GridGeometry& geometry) {
    std::vector<std::uint8_t> data(geometry.voxel_count(), 0);
    for (const auto& p : cloud.points()) {
        Index3 idx{};
        for (int a = 0; a < 3; ++a) {
            idx[a] = static_cast<std::int64_t>(std::floor((p[a] - geometry.origin[a]) / geometry.spacing[a] + 0.5));
        }
        if (geometry.contains(idx)) data[geometry.offset(idx[0], idx[1], idx[2])] = 1;
    }
    return MaskVolume(geometry, std::move(data));
}

bool in_surface_band(const MaskVolume& mask, const Vec3& world_point) {
    const auto& g = mask.geometry();
    Vec3 c{};
    for (int a = 0; a < 3; ++a) c[a] = (world_point[a] - g.origin[a]) / g.spacing[a];
    bool fg = false;
    bool bg = false;
    for (int corner = 0; corner < 8; ++corner) {
        Index3 idx{};
        for (int a = 0; a < 3; ++a) {
            // Tolerate round-off so exact lattice coordinates are not split.
            const double lo = std::floor(c[a] + 1e-9);
            idx[a] = static_cast<std::int64_t>(((corner >> a) & 1) ? std::ceil(c[a] - 1e-9) : lo);
        }
        const bool v = g.contains(idx) && mask.at(idx[0], idx[1], idx[2]);
        (v ? fg : bg) = true;
    }
    return fg && bg;
}

GroundTruthCloud cloud_from_mask(const MaskVolume& mask, std::size_t n, DownsampleMethod method,
                                 std::uint64_t seed) {
    const auto mesh = mask_to_mesh(mask);
    const auto dense = mesh_to_dense_cloud(mesh);
    const auto sparse = downsample_cloud(dense, n, method, seed);
    auto [centred, centroid] = center_cloud(sparse);
    return {std::move(centred), centroid, dense.size()};
}

}  // namespace pcunet::shape
