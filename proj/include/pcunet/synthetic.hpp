#pragma once

// Procedural myocardium-wall phantoms: a thick half-ellipsoidal shell, closed
// at the apex (low z) and open at the basal plane (high z), with a blood
// pool inside, optional background clutter blobs and Gaussian noise.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pcunet/preprocess.hpp"
#include "pcunet/shape_pipeline.hpp"
#include "pcunet/types.hpp"

namespace pcunet::synthetic {

struct Intensity {
    double wall_mean = 150.0;
    double blood_mean = 450.0;
    double background_mean = -150.0;
    double noise_sd = 50.0;
};

struct PhantomParams {
    Vec3 outer_radii{17.0, 17.0, 23.0};  // mm; c (z) is the long axis
    double wall_thickness = 4.5;         // mm, lateral wall
    double apex_taper = 0.8;             // apex thickness = taper * wall_thickness
    Vec3 translation{0.0, 0.0, 0.0};     // mm, relative to the grid centre
    Vec3 scale{1.0, 1.0, 1.0};           // axis-aligned jitter applied to the radii
    Intensity intensity;
    int clutter_blobs = 3;
    std::uint64_t seed = 0;

    /// Throws InvariantError unless 0 < wall_thickness < min(outer radii),
    /// apex_taper in (0, 1], noise_sd >= 0 and scales > 0.
    void validate() const;
    /// Radii after scale jitter.
    [[nodiscard]] Vec3 effective_radii() const;
    /// Half of (4/3) pi (a b c - a' b' c'), mm^3.
    [[nodiscard]] double analytic_wall_volume() const;
};

void to_json(nlohmann::json& j, const PhantomParams& p);
void from_json(const nlohmann::json& j, PhantomParams& p);

struct Phantom {
    VoxelVolume image;  // raw CT-like intensities
    MaskVolume mask;    // wall
    std::vector<std::string> warnings;
};

/// Renders one phantom. Deterministic in params.seed.
Phantom generate_phantom(const PhantomParams& params, const Index3& grid_shape, const Vec3& spacing);

struct Range {
    double lo = 0.0;
    double hi = 0.0;
};

/// Sampling ranges for make_dataset. Lengths are in mm.
struct ParamRanges {
    Range radius_xy{14.0, 19.0};
    Range radius_z{19.0, 24.0};
    Range wall_thickness{3.5, 6.0};
    Range apex_taper{0.5, 1.0};
    Range translation_xy{-3.0, 3.0};
    Range translation_z{-1.5, 1.5};
    Range scale{0.95, 1.05};
    Intensity intensity;
    int clutter_blobs = 3;

    /// Ranges scaled to a grid's physical extent (the defaults above suit a
    /// 64 x 64 x 32 mm field of view).
    static ParamRanges for_grid(const Index3& shape, const Vec3& spacing);
};

PhantomParams sample_params(const ParamRanges& ranges, std::uint64_t seed);

struct DatasetSpec {
    std::size_t n_samples = 50;
    Index3 grid_shape{64, 64, 32};
    Vec3 spacing{1.0, 1.0, 1.0};
    std::size_t n_points = 1024;
    shape::DownsampleMethod downsample = shape::DownsampleMethod::FarthestPoint;
    int folds = 4;
    std::uint64_t seed = 0;
    std::optional<ParamRanges> ranges;  // defaults to ParamRanges::for_grid
    std::size_t augment_factor = 0;     // elastic copies per generated subject
    preprocess::ElasticParams elastic;  // seed overridden per copy
};

void to_json(nlohmann::json& j, const DatasetSpec& s);
void from_json(const nlohmann::json& j, DatasetSpec& s);

struct SampleEntry {
    std::string id;
    std::string image;  // paths relative to the manifest directory
    std::string mask;
    std::string cloud;  // centred ground-truth cloud
    Vec3 centroid{};    // world position of the cloud centre
    std::uint64_t seed = 0;
    int fold = 0;
    std::string source;      // id of the subject this sample derives from
    bool augmented = false;  // elastic copy of `source`
    double foreground_fraction = 0.0;
    nlohmann::json params;
    std::vector<std::string> warnings;
};

struct Manifest {
    int version = 1;
    DatasetSpec spec;
    std::vector<SampleEntry> samples;
    std::filesystem::path directory;  // where relative paths resolve

    [[nodiscard]] std::filesystem::path resolve(const std::string& rel) const { return directory / rel; }
    /// Subjects (non-augmented entries) in fold k.
    [[nodiscard]] std::vector<std::size_t> fold_subjects(int fold) const;
    /// Every entry (including elastic copies) outside fold k.
    [[nodiscard]] std::vector<std::size_t> training_entries(int fold) const;

    void save(const std::filesystem::path& path) const;
    static Manifest load(const std::filesystem::path& path);
};

/// Balanced fold labels for n subjects: a seeded permutation dealt round-robin.
std::vector<int> assign_folds(std::size_t n, int folds, std::uint64_t seed);

/// Generates phantoms (image, mask, ground-truth cloud) plus elastic copies
/// into `out_dir` and writes out_dir/manifest.json. Phantoms whose
/// foreground fraction falls outside [1%, 30%] are redrawn.
Manifest make_dataset(const DatasetSpec& spec, const std::filesystem::path& out_dir);

}  // namespace pcunet::synthetic
