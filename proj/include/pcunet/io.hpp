#pragma once

// File formats.
//
// Volumes are selected by extension:
//   .mha         MetaImage, header and data in one file
//   .mhd         MetaImage header plus a sibling .raw data file
//   .raw         raw little-endian array with a .json sidecar
//                {"shape":[nx,ny,nz],"spacing":[..],"origin":[..],"dtype":"float32"|"uint8"}
// Point clouds:
//   .xyz / .txt  one "x y z" triple per line, mm
//   .pcu         "PCU1", uint32 N, two reserved uint32, then N*3 float32 (LE)
// Meshes are written as OBJ (v lines, 1-based f lines).

#include <filesystem>
#include <variant>

#include "pcunet/types.hpp"

namespace pcunet::io {

using AnyVolume = std::variant<VoxelVolume, MaskVolume>;

/// Loads a volume. uint8 data whose values are all in {0,1} becomes a
/// MaskVolume; everything else becomes a VoxelVolume.
AnyVolume load_volume(const std::filesystem::path& path);
/// Loads any supported volume and converts it to float intensities.
VoxelVolume load_image(const std::filesystem::path& path);
/// Loads a volume and requires binary contents.
MaskVolume load_mask(const std::filesystem::path& path);

void save_volume(const VoxelVolume& volume, const std::filesystem::path& path);
void save_volume(const MaskVolume& mask, const std::filesystem::path& path);

PointCloud load_cloud(const std::filesystem::path& path);
void save_cloud(const PointCloud& cloud, const std::filesystem::path& path);

void save_mesh_obj(const TriangleMesh& mesh, const std::filesystem::path& path);
TriangleMesh load_mesh_obj(const std::filesystem::path& path);

}  // namespace pcunet::io
