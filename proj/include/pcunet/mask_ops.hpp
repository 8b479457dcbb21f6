#pragma once

#include <optional>
#include <vector>

#include "pcunet/types.hpp"

namespace pcunet {

struct BoundingBox {
    Index3 lo;  // inclusive
    Index3 hi;  // inclusive
};

/// Tight bounding box of the foreground, or nullopt for an empty mask.
std::optional<BoundingBox> foreground_bounds(const MaskVolume& mask);

/// Foreground voxels with at least one 6-neighbour that is background.
/// Neighbours outside the grid count as background.
std::vector<Index3> boundary_voxels(const MaskVolume& mask);

/// Binary dilation / erosion with the 3x3x3 cube structuring element.
/// Outside the grid is background.
MaskVolume dilate(const MaskVolume& mask);
MaskVolume erode(const MaskVolume& mask);

/// Number of 26-connected foreground components.
std::size_t connected_components(const MaskVolume& mask);

}  // namespace pcunet
