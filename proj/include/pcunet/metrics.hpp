#pragma once

// Evaluation metrics: Chamfer distance, Dice coefficient and the exact
// (100th percentile) Hausdorff distance between mask boundaries.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "pcunet/losses.hpp"
#include "pcunet/types.hpp"

namespace pcunet::metrics {

inline constexpr double kDefaultThreshold = 0.5;

/// Same value as the Chamfer loss, without gradients. mm.
double chamfer_distance(const PointCloud& a, const PointCloud& b,
                        losses::NeighborSearch search = losses::NeighborSearch::KdTree);

/// 2|P n G| / (|P| + |G|); two empty masks score 1.
double dice_coefficient(const MaskVolume& pred, const MaskVolume& gt);

/// Maximum of the two directed Hausdorff distances between the boundary
/// voxel sets, in mm. Throws InvariantError when either mask is empty.
double hausdorff_distance(const MaskVolume& pred, const MaskVolume& gt,
                          losses::NeighborSearch search = losses::NeighborSearch::KdTree);

/// World positions (mm) of the boundary voxels.
std::vector<Vec3> boundary_points(const MaskVolume& mask);

/// Voxel = 1 iff prob >= threshold.
MaskVolume binarize(const VoxelVolume& probs, double threshold = kDefaultThreshold);
/// (Dz, Dy, Dx) or (1, Dz, Dy, Dx) tensor on `geometry`.
MaskVolume binarize(const torch::Tensor& probs, const GridGeometry& geometry,
                    double threshold = kDefaultThreshold);

/// One evaluated sample. Absent heads leave the metric empty; a failed HD
/// (empty predicted mask) leaves `hd` empty and sets `hd_failed`.
struct SampleMetrics {
    std::string variant;
    int fold = -1;
    std::string sample_id;
    std::optional<double> cd;
    std::optional<double> dice;
    std::optional<double> hd;
    bool hd_failed = false;
};

struct Summary {
    std::size_t count = 0;
    double mean = 0.0;
    double sd = 0.0;  // sample standard deviation (n - 1)
};

/// Mean and SD of the present values; nullopt when none are present.
std::optional<Summary> summarize(const std::vector<std::optional<double>>& values);

/// "variant,fold,sample,cd,dice,hd" rows; absent values are written as "—".
std::string metrics_csv(const std::vector<SampleMetrics>& rows);
void write_metrics_csv(const std::vector<SampleMetrics>& rows, const std::filesystem::path& path);

/// Fixed-precision rendering used in CSVs and tables.
std::string format_value(const std::optional<double>& v, int precision = 6);
/// "mean±sd" or "—".
std::string format_summary(const std::optional<Summary>& s, int precision = 3);

nlohmann::json to_json(const std::optional<Summary>& s);

}  // namespace pcunet::metrics
