#include "pcunet/preprocess.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "pcunet/mask_ops.hpp"
#include "pcunet/rng.hpp"

namespace pcunet::preprocess {

namespace {

double round_half_up(double v) { return std::floor(v + 0.5); }

std::int64_t clamp_index(std::int64_t i, std::int64_t n) { return std::clamp<std::int64_t>(i, 0, n - 1); }

/// Trilinear sample at a continuous voxel index, clamped to the grid edge.
float sample_linear(const VoxelVolume& v, double fx, double fy, double fz) {
    const auto& s = v.shape();
    const double f[3] = {std::clamp(fx, 0.0, static_cast<double>(s[0] - 1)),
                         std::clamp(fy, 0.0, static_cast<double>(s[1] - 1)),
                         std::clamp(fz, 0.0, static_cast<double>(s[2] - 1))};
    std::int64_t i0[3];
    std::int64_t i1[3];
    double t[3];
    for (int a = 0; a < 3; ++a) {
        i0[a] = static_cast<std::int64_t>(std::floor(f[a]));
        i1[a] = std::min(i0[a] + 1, s[a] - 1);
        t[a] = f[a] - static_cast<double>(i0[a]);
    }
    double acc = 0.0;
    for (int c = 0; c < 8; ++c) {
        const bool bx = c & 1;
        const bool by = c & 2;
        const bool bz = c & 4;
        const double w = (bx ? t[0] : 1.0 - t[0]) * (by ? t[1] : 1.0 - t[1]) * (bz ? t[2] : 1.0 - t[2]);
        if (w == 0.0) continue;
        acc += w * v.at(bx ? i1[0] : i0[0], by ? i1[1] : i0[1], bz ? i1[2] : i0[2]);
    }
    return static_cast<float>(acc);
}

std::uint8_t sample_nearest(const MaskVolume& m, double fx, double fy, double fz) {
    const auto& s = m.shape();
    return m.at(clamp_index(static_cast<std::int64_t>(round_half_up(fx)), s[0]),
                clamp_index(static_cast<std::int64_t>(round_half_up(fy)), s[1]),
                clamp_index(static_cast<std::int64_t>(round_half_up(fz)), s[2]));
}

// Output grid whose voxel j samples input continuous index (j + 0.5) * ratio - 0.5,
// i.e. both grids span the same physical extent.
struct Rescale {
    GridGeometry out;
    Vec3 ratio;  // input voxels per output voxel
};

Rescale make_rescale(const GridGeometry& in, const Index3& out_shape, const Vec3& out_spacing) {
    Rescale r;
    r.out.shape = out_shape;
    r.out.spacing = out_spacing;
    for (int a = 0; a < 3; ++a) {
        r.ratio[a] = out_spacing[a] / in.spacing[a];
        r.out.origin[a] = in.origin[a] - 0.5 * in.spacing[a] + 0.5 * out_spacing[a];
    }
    r.out.validate();
    return r;
}

template <typename Grid, typename Sampler>
auto apply_rescale(const Grid& in, const Rescale& r, Sampler sample) {
    using T = typename Grid::value_type;
    const auto& s = r.out.shape;
    std::vector<T> out(r.out.voxel_count());
    for (std::int64_t z = 0; z < s[2]; ++z) {
        const double fz = (static_cast<double>(z) + 0.5) * r.ratio[2] - 0.5;
        for (std::int64_t y = 0; y < s[1]; ++y) {
            const double fy = (static_cast<double>(y) + 0.5) * r.ratio[1] - 0.5;
            for (std::int64_t x = 0; x < s[0]; ++x) {
                const double fx = (static_cast<double>(x) + 0.5) * r.ratio[0] - 0.5;
                out[r.out.offset(x, y, z)] = sample(in, fx, fy, fz);
            }
        }
    }
    return Grid(r.out, std::move(out));
}

Rescale isotropic_rescale(const GridGeometry& in, double t) {
    if (!(t > 0.0)) throw InvariantError("target spacing must be > 0");
    Index3 shape{};
    for (int a = 0; a < 3; ++a) {
        shape[a] = std::max<std::int64_t>(
            1, static_cast<std::int64_t>(round_half_up(static_cast<double>(in.shape[a]) * in.spacing[a] / t)));
    }
    return make_rescale(in, shape, {t, t, t});
}

Rescale resize_rescale(const GridGeometry& in, const Index3& target) {
    Vec3 spacing{};
    for (int a = 0; a < 3; ++a) {
        if (target[a] < 1) throw InvariantError("target shape components must be >= 1");
        spacing[a] = in.spacing[a] * static_cast<double>(in.shape[a]) / static_cast<double>(target[a]);
    }
    return make_rescale(in, target, spacing);
}

template <typename Grid>
Grid crop_grid(const Grid& in, const Index3& lo, const Index3& hi) {
    using T = typename Grid::value_type;
    GridGeometry g;
    for (int a = 0; a < 3; ++a) g.shape[a] = hi[a] - lo[a] + 1;
    g.spacing = in.spacing();
    g.origin = voxel_to_world(lo, in.geometry());
    std::vector<T> out(g.voxel_count());
    for (std::int64_t z = 0; z < g.shape[2]; ++z)
        for (std::int64_t y = 0; y < g.shape[1]; ++y)
            for (std::int64_t x = 0; x < g.shape[0]; ++x)
                out[g.offset(x, y, z)] = in.at(x + lo[0], y + lo[1], z + lo[2]);
    return Grid(g, std::move(out));
}

// Uniform cubic B-spline basis at parameter t in [0, 1).
std::array<double, 4> bspline_basis(double t) {
    const double t2 = t * t;
    const double t3 = t2 * t;
    const double u = 1.0 - t;
    return {u * u * u / 6.0, (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0,
            (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0, t3 / 6.0};
}

}  // namespace

void ElasticParams::validate() const {
    if (!(control_grid_spacing > 0.0)) throw InvariantError("control_grid_spacing must be > 0");
    if (!(max_displacement >= 0.0)) throw InvariantError("max_displacement must be >= 0");
}

std::pair<VoxelVolume, MaskVolume> crop_roi(const VoxelVolume& image, const MaskVolume& mask,
                                            double margin_mm) {
    require_aligned(image, mask);
    if (!(margin_mm >= 0.0)) throw InvariantError("crop margin must be >= 0");
    const auto box = foreground_bounds(mask);
    if (!box) throw InvariantError("cannot crop empty mask");
    Index3 lo{};
    Index3 hi{};
    for (int a = 0; a < 3; ++a) {
        const auto margin = static_cast<std::int64_t>(std::ceil(margin_mm / mask.spacing()[a] - 1e-9));
        lo[a] = std::max<std::int64_t>(0, box->lo[a] - margin);
        hi[a] = std::min<std::int64_t>(mask.shape()[a] - 1, box->hi[a] + margin);
    }
    return {crop_grid(image, lo, hi), crop_grid(mask, lo, hi)};
}

VoxelVolume resample_isotropic(const VoxelVolume& volume, double target_spacing_mm) {
    return apply_rescale(volume, isotropic_rescale(volume.geometry(), target_spacing_mm), sample_linear);
}

MaskVolume resample_isotropic(const MaskVolume& mask, double target_spacing_mm) {
    return apply_rescale(mask, isotropic_rescale(mask.geometry(), target_spacing_mm), sample_nearest);
}

VoxelVolume resize_to(const VoxelVolume& volume, const Index3& target_shape) {
    return apply_rescale(volume, resize_rescale(volume.geometry(), target_shape), sample_linear);
}

MaskVolume resize_to(const MaskVolume& mask, const Index3& target_shape) {
    return apply_rescale(mask, resize_rescale(mask.geometry(), target_shape), sample_nearest);
}

VoxelVolume normalize_intensity(const VoxelVolume& volume) {
    std::vector<float> out(volume.data().begin(), volume.data().end());
    std::transform(out.begin(), out.end(), out.begin(), normalize_value);
    return VoxelVolume(volume.geometry(), std::move(out));
}

std::pair<VoxelVolume, MaskVolume> elastic_deform(const VoxelVolume& image, const MaskVolume& mask,
                                                  const ElasticParams& params) {
    require_aligned(image, mask);
    params.validate();
    const auto& g = image.geometry();
    const auto& s = g.shape;

    // Control lattice: K intervals per axis spanning the voxel-centre extent,
    // plus one extra node on each side for the cubic support.
    std::array<std::int64_t, 3> intervals{};
    Vec3 node_spacing{};
    for (int a = 0; a < 3; ++a) {
        const double extent = static_cast<double>(s[a] - 1) * g.spacing[a];
        intervals[a] = std::max<std::int64_t>(
            1, static_cast<std::int64_t>(std::ceil(extent / params.control_grid_spacing - 1e-9)));
        node_spacing[a] = extent > 0.0 ? extent / static_cast<double>(intervals[a]) : params.control_grid_spacing;
    }
    const std::array<std::int64_t, 3> nodes{intervals[0] + 3, intervals[1] + 3, intervals[2] + 3};
    const std::size_t node_count = static_cast<std::size_t>(nodes[0] * nodes[1] * nodes[2]);
    std::vector<Vec3> control(node_count);
    Rng rng(params.seed);
    for (auto& c : control) {
        for (int a = 0; a < 3; ++a) c[a] = params.max_displacement * (2.0 * rng.uniform() - 1.0);
    }
    auto node = [&](std::int64_t i, std::int64_t j, std::int64_t k) -> const Vec3& {
        return control[static_cast<std::size_t>(i + nodes[0] * (j + nodes[1] * k))];
    };

    auto lattice_coord = [&](int axis, std::int64_t voxel) {
        const double u = static_cast<double>(voxel) * g.spacing[axis] / node_spacing[axis];
        auto cell = std::min<std::int64_t>(static_cast<std::int64_t>(std::floor(u)), intervals[axis] - 1);
        return std::pair{cell, bspline_basis(u - static_cast<double>(cell))};
    };

    std::vector<float> out_img(image.size());
    std::vector<std::uint8_t> out_mask(mask.size());
    for (std::int64_t z = 0; z < s[2]; ++z) {
        const auto [cz, bz] = lattice_coord(2, z);
        for (std::int64_t y = 0; y < s[1]; ++y) {
            const auto [cy, by] = lattice_coord(1, y);
            for (std::int64_t x = 0; x < s[0]; ++x) {
                const auto [cx, bx] = lattice_coord(0, x);
                Vec3 d{0.0, 0.0, 0.0};
                for (int k = 0; k < 4; ++k)
                    for (int j = 0; j < 4; ++j) {
                        const double wjk = by[j] * bz[k];
                        for (int i = 0; i < 4; ++i) {
                            const double w = bx[i] * wjk;
                            const auto& c = node(cx + i, cy + j, cz + k);
                            d[0] += w * c[0];
                            d[1] += w * c[1];
                            d[2] += w * c[2];
                        }
                    }
                const double fx = static_cast<double>(x) + d[0] / g.spacing[0];
                const double fy = static_cast<double>(y) + d[1] / g.spacing[1];
                const double fz = static_cast<double>(z) + d[2] / g.spacing[2];
                const auto off = g.offset(x, y, z);
                out_img[off] = sample_linear(image, fx, fy, fz);
                out_mask[off] = sample_nearest(mask, fx, fy, fz);
            }
        }
    }
    return {VoxelVolume(g, std::move(out_img)), MaskVolume(g, std::move(out_mask))};
}

std::pair<VoxelVolume, MaskVolume> run_chain(const VoxelVolume& image, const MaskVolume& mask,
                                             const PreprocessOptions& options) {
    auto [img, msk] = crop_roi(image, mask, options.margin_mm);
    auto img_iso = resample_isotropic(img, options.target_spacing_mm);
    auto msk_iso = resample_isotropic(msk, options.target_spacing_mm);
    auto img_sized = resize_to(img_iso, options.target_shape);
    auto msk_sized = resize_to(msk_iso, options.target_shape);
    return {normalize_intensity(img_sized), std::move(msk_sized)};
}

}  // namespace pcunet::preprocess
