#pragma once

// Preprocessing chain applied to every (image, mask) pair, in this order:
// crop_roi -> resample_isotropic -> resize_to -> normalize_intensity.
// elastic_deform is the training-set augmentation.

#include <cstdint>
#include <utility>

#include "pcunet/types.hpp"

namespace pcunet::preprocess {

inline constexpr double kDefaultRoiMarginMm = 10.0;
inline constexpr double kDefaultTargetSpacingMm = 1.0;
inline constexpr Index3 kDefaultTargetShape{128, 128, 64};
/// Raw intensities are divided by this before clamping to [-1, 1].
inline constexpr double kIntensityScale = 2048.0;

struct ElasticParams {
    double control_grid_spacing = 32.0;  // mm
    double max_displacement = 4.0;       // mm
    std::uint64_t seed = 0;

    void validate() const;
};

/// Crops both volumes to the mask's tight bounding box dilated by
/// `margin_mm` on every side (rounded up to whole voxels) and clipped to
/// the image. Throws InvariantError("cannot crop empty mask").
std::pair<VoxelVolume, MaskVolume> crop_roi(const VoxelVolume& image, const MaskVolume& mask,
                                            double margin_mm = kDefaultRoiMarginMm);

/// Resamples to isotropic spacing. Output shape is
/// round(shape * spacing / target) per axis; the first output voxel starts at
/// the same physical edge as the first input voxel. Images use trilinear
/// interpolation, masks nearest neighbour.
VoxelVolume resample_isotropic(const VoxelVolume& volume,
                               double target_spacing_mm = kDefaultTargetSpacingMm);
MaskVolume resample_isotropic(const MaskVolume& mask,
                              double target_spacing_mm = kDefaultTargetSpacingMm);

/// Resizes to a fixed shape; spacing is rescaled so the physical extent is
/// unchanged.
VoxelVolume resize_to(const VoxelVolume& volume, const Index3& target_shape = kDefaultTargetShape);
MaskVolume resize_to(const MaskVolume& mask, const Index3& target_shape = kDefaultTargetShape);

/// clamp(v / 2048, -1, 1) voxel-wise.
VoxelVolume normalize_intensity(const VoxelVolume& volume);
[[nodiscard]] inline float normalize_value(float v) noexcept {
    const double s = static_cast<double>(v) / kIntensityScale;
    return static_cast<float>(s < -1.0 ? -1.0 : (s > 1.0 ? 1.0 : s));
}

/// Smooth random warp: i.i.d. uniform displacements in
/// [-max_displacement, max_displacement] on a coarse control lattice,
/// interpolated to every voxel with cubic B-splines and applied to the
/// image (trilinear) and mask (nearest). Deterministic in `params.seed`.
std::pair<VoxelVolume, MaskVolume> elastic_deform(const VoxelVolume& image, const MaskVolume& mask,
                                                  const ElasticParams& params);

struct PreprocessOptions {
    double margin_mm = kDefaultRoiMarginMm;
    double target_spacing_mm = kDefaultTargetSpacingMm;
    Index3 target_shape = kDefaultTargetShape;
};

/// The full crop -> resample -> resize -> normalize chain.
std::pair<VoxelVolume, MaskVolume> run_chain(const VoxelVolume& image, const MaskVolume& mask,
                                             const PreprocessOptions& options = {});

}  // namespace pcunet::preprocess
