#include "pcunet/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "pcunet/io.hpp"
#include "pcunet/kdtree.hpp"
#include "pcunet/rng.hpp"

namespace pcunet::synthetic {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json vec_json(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }

Vec3 vec_from(const json& j) {
    if (!j.is_array() || j.size() != 3) throw ConfigError("expected a 3-component array");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json intensity_json(const Intensity& i) {
    return {{"wall_mean", i.wall_mean},
            {"blood_mean", i.blood_mean},
            {"background_mean", i.background_mean},
            {"noise_sd", i.noise_sd}};
}

Intensity intensity_from(const json& j) {
    Intensity i;
    i.wall_mean = j.value("wall_mean", i.wall_mean);
    i.blood_mean = j.value("blood_mean", i.blood_mean);
    i.background_mean = j.value("background_mean", i.background_mean);
    i.noise_sd = j.value("noise_sd", i.noise_sd);
    return i;
}

json range_json(const Range& r) { return json::array({r.lo, r.hi}); }

Range range_from(const json& j, const Range& fallback) {
    if (j.is_null()) return fallback;
    if (!j.is_array() || j.size() != 2) throw ConfigError("expected a [lo, hi] range");
    return {j[0].get<double>(), j[1].get<double>()};
}

json ranges_json(const ParamRanges& r) {
    return {{"radius_xy", range_json(r.radius_xy)},       {"radius_z", range_json(r.radius_z)},
            {"wall_thickness", range_json(r.wall_thickness)}, {"apex_taper", range_json(r.apex_taper)},
            {"translation_xy", range_json(r.translation_xy)}, {"translation_z", range_json(r.translation_z)},
            {"scale", range_json(r.scale)},               {"intensity", intensity_json(r.intensity)},
            {"clutter_blobs", r.clutter_blobs}};
}

ParamRanges ranges_from(const json& j) {
    ParamRanges r;
    auto get = [&](const char* key, const Range& fb) { return range_from(j.contains(key) ? j[key] : json(), fb); };
    r.radius_xy = get("radius_xy", r.radius_xy);
    r.radius_z = get("radius_z", r.radius_z);
    r.wall_thickness = get("wall_thickness", r.wall_thickness);
    r.apex_taper = get("apex_taper", r.apex_taper);
    r.translation_xy = get("translation_xy", r.translation_xy);
    r.translation_z = get("translation_z", r.translation_z);
    r.scale = get("scale", r.scale);
    if (j.contains("intensity")) r.intensity = intensity_from(j["intensity"]);
    r.clutter_blobs = j.value("clutter_blobs", r.clutter_blobs);
    return r;
}

double draw(Rng& rng, const Range& r) { return r.lo == r.hi ? r.lo : rng.uniform(r.lo, r.hi); }

std::string case_id(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "case_%04zu", i);
    return buf;
}

}  // namespace

void PhantomParams::validate() const {
    const auto r = effective_radii();
    const double min_r = std::min({r[0], r[1], r[2]});
    if (!(wall_thickness > 0.0) || !(wall_thickness < min_r)) {
        throw InvariantError("wall_thickness must be > 0 and < min(outer_radii)");
    }
    if (!(apex_taper > 0.0 && apex_taper <= 1.0)) throw InvariantError("apex_taper must lie in (0, 1]");
    if (!(intensity.noise_sd >= 0.0)) throw InvariantError("noise_sd must be >= 0");
    for (double s : scale) {
        if (!(s > 0.0)) throw InvariantError("scale jitter must be > 0");
    }
    if (clutter_blobs < 0) throw InvariantError("clutter_blobs must be >= 0");
}

Vec3 PhantomParams::effective_radii() const {
    return {outer_radii[0] * scale[0], outer_radii[1] * scale[1], outer_radii[2] * scale[2]};
}

double PhantomParams::analytic_wall_volume() const {
    const auto r = effective_radii();
    const double inner = (r[0] - wall_thickness) * (r[1] - wall_thickness) * (r[2] - wall_thickness * apex_taper);
    return 0.5 * (4.0 / 3.0) * std::numbers::pi * (r[0] * r[1] * r[2] - inner);
}

void to_json(json& j, const PhantomParams& p) {
    j = {{"outer_radii", vec_json(p.outer_radii)},
         {"wall_thickness", p.wall_thickness},
         {"apex_taper", p.apex_taper},
         {"translation", vec_json(p.translation)},
         {"scale", vec_json(p.scale)},
         {"intensity", intensity_json(p.intensity)},
         {"clutter_blobs", p.clutter_blobs},
         {"seed", p.seed}};
}

void from_json(const json& j, PhantomParams& p) {
    p = PhantomParams{};
    if (j.contains("outer_radii")) p.outer_radii = vec_from(j["outer_radii"]);
    p.wall_thickness = j.value("wall_thickness", p.wall_thickness);
    p.apex_taper = j.value("apex_taper", p.apex_taper);
    if (j.contains("translation")) p.translation = vec_from(j["translation"]);
    if (j.contains("scale")) p.scale = vec_from(j["scale"]);
    if (j.contains("intensity")) p.intensity = intensity_from(j["intensity"]);
    p.clutter_blobs = j.value("clutter_blobs", p.clutter_blobs);
    p.seed = j.value("seed", p.seed);
}

Phantom generate_phantom(const PhantomParams& params, const Index3& grid_shape, const Vec3& spacing) {
    params.validate();
    GridGeometry g;
    g.shape = grid_shape;
    g.spacing = spacing;
    g.validate();

    const auto r = params.effective_radii();
    const Vec3 inner{r[0] - params.wall_thickness, r[1] - params.wall_thickness,
                     r[2] - params.wall_thickness * params.apex_taper};
    // Ellipsoid centre sits on the basal plane; the shell hangs below it and
    // is centred in z on the grid.
    Vec3 centre{};
    for (int a = 0; a < 3; ++a) {
        centre[a] = g.origin[a] + 0.5 * static_cast<double>(grid_shape[a] - 1) * spacing[a] + params.translation[a];
    }
    centre[2] += 0.5 * r[2];

    Rng rng(params.seed);
    struct Blob {
        Vec3 c;
        double radius;
        double value;
    };
    std::vector<Blob> blobs;
    for (int b = 0; b < params.clutter_blobs; ++b) {
        Blob blob;
        for (int a = 0; a < 3; ++a) {
            blob.c[a] = g.origin[a] + rng.uniform(0.0, static_cast<double>(grid_shape[a] - 1) * spacing[a]);
        }
        blob.radius = rng.uniform(2.5, 5.0) * std::min({spacing[0], spacing[1], spacing[2]});
        blob.value = rng.uniform(params.intensity.wall_mean, params.intensity.blood_mean);
        blobs.push_back(blob);
    }

    std::vector<float> image(g.voxel_count());
    std::vector<std::uint8_t> mask(g.voxel_count());
    for (std::int64_t z = 0; z < grid_shape[2]; ++z)
        for (std::int64_t y = 0; y < grid_shape[1]; ++y)
            for (std::int64_t x = 0; x < grid_shape[0]; ++x) {
                const Vec3 p = voxel_to_world({x, y, z}, g);
                const Vec3 q{p[0] - centre[0], p[1] - centre[1], p[2] - centre[2]};
                const bool below_base = q[2] <= 0.0;
                const double outer_e = q[0] * q[0] / (r[0] * r[0]) + q[1] * q[1] / (r[1] * r[1]) + q[2] * q[2] / (r[2] * r[2]);
                const double inner_e = q[0] * q[0] / (inner[0] * inner[0]) + q[1] * q[1] / (inner[1] * inner[1]) +
                                       q[2] * q[2] / (inner[2] * inner[2]);
                const bool wall = below_base && outer_e <= 1.0 && inner_e > 1.0;
                const bool blood = below_base && inner_e <= 1.0;
                double value = params.intensity.background_mean;
                if (wall) {
                    value = params.intensity.wall_mean;
                } else if (blood) {
                    value = params.intensity.blood_mean;
                } else {
                    for (const auto& blob : blobs) {
                        if (squared_distance(p, blob.c) <= blob.radius * blob.radius) value = blob.value;
                    }
                }
                const auto off = g.offset(x, y, z);
                mask[off] = wall ? 1 : 0;
                image[off] = static_cast<float>(value);
            }
    if (params.intensity.noise_sd > 0.0) {
        for (auto& v : image) v += static_cast<float>(rng.normal(0.0, params.intensity.noise_sd));
    }

    Phantom out{VoxelVolume(g, std::move(image)), MaskVolume(g, std::move(mask)), {}};
    const double min_spacing = std::min({spacing[0], spacing[1], spacing[2]});
    // A wall of one voxel or less has no interior voxels after rasterization.
    if (params.wall_thickness * params.apex_taper <= min_spacing) {
        out.warnings.push_back("wall no thicker than one voxel near the apex");
    }
    return out;
}

ParamRanges ParamRanges::for_grid(const Index3& shape, const Vec3& spacing) {
    constexpr double kReference[3] = {64.0, 64.0, 32.0};
    double f = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) f = std::min(f, static_cast<double>(shape[a]) * spacing[a] / kReference[a]);
    ParamRanges r;
    for (Range* range : {&r.radius_xy, &r.radius_z, &r.wall_thickness, &r.translation_xy, &r.translation_z}) {
        range->lo *= f;
        range->hi *= f;
    }
    return r;
}

PhantomParams sample_params(const ParamRanges& ranges, std::uint64_t seed) {
    Rng rng(seed);
    PhantomParams p;
    p.outer_radii = {draw(rng, ranges.radius_xy), draw(rng, ranges.radius_xy), draw(rng, ranges.radius_z)};
    p.wall_thickness = draw(rng, ranges.wall_thickness);
    p.apex_taper = draw(rng, ranges.apex_taper);
    p.translation = {draw(rng, ranges.translation_xy), draw(rng, ranges.translation_xy),
                     draw(rng, ranges.translation_z)};
    p.scale = {draw(rng, ranges.scale), draw(rng, ranges.scale), draw(rng, ranges.scale)};
    p.intensity = ranges.intensity;
    p.clutter_blobs = ranges.clutter_blobs;
    p.seed = derive_seed(seed, 1);
    return p;
}

void to_json(json& j, const DatasetSpec& s) {
    j = {{"n_samples", s.n_samples},
         {"grid_shape", {s.grid_shape[0], s.grid_shape[1], s.grid_shape[2]}},
         {"spacing", vec_json(s.spacing)},
         {"n_points", s.n_points},
         {"downsample", std::string(shape::to_string(s.downsample))},
         {"folds", s.folds},
         {"seed", s.seed},
         {"augment_factor", s.augment_factor},
         {"elastic",
          {{"control_grid_spacing", s.elastic.control_grid_spacing},
           {"max_displacement", s.elastic.max_displacement}}}};
    if (s.ranges) j["ranges"] = ranges_json(*s.ranges);
}

void from_json(const json& j, DatasetSpec& s) {
    s = DatasetSpec{};
    s.n_samples = j.value("n_samples", s.n_samples);
    if (j.contains("grid_shape")) {
        const auto v = j["grid_shape"].get<std::vector<std::int64_t>>();
        if (v.size() != 3) throw ConfigError("grid_shape needs 3 components");
        s.grid_shape = {v[0], v[1], v[2]};
    }
    if (j.contains("spacing")) s.spacing = vec_from(j["spacing"]);
    s.n_points = j.value("n_points", s.n_points);
    if (j.contains("downsample")) s.downsample = shape::parse_downsample_method(j["downsample"].get<std::string>());
    s.folds = j.value("folds", s.folds);
    s.seed = j.value("seed", s.seed);
    s.augment_factor = j.value("augment_factor", s.augment_factor);
    if (j.contains("elastic")) {
        s.elastic.control_grid_spacing = j["elastic"].value("control_grid_spacing", s.elastic.control_grid_spacing);
        s.elastic.max_displacement = j["elastic"].value("max_displacement", s.elastic.max_displacement);
    }
    if (j.contains("ranges")) s.ranges = ranges_from(j["ranges"]);
}

std::vector<std::size_t> Manifest::fold_subjects(int fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].fold == fold && !samples[i].augmented) out.push_back(i);
    }
    return out;
}

std::vector<std::size_t> Manifest::training_entries(int fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].fold != fold) out.push_back(i);
    }
    return out;
}

void Manifest::save(const fs::path& path) const {
    json j;
    j["version"] = version;
    j["spec"] = spec;
    j["samples"] = json::array();
    for (const auto& s : samples) {
        j["samples"].push_back({{"id", s.id},
                                {"image", s.image},
                                {"mask", s.mask},
                                {"cloud", s.cloud},
                                {"centroid", vec_json(s.centroid)},
                                {"seed", s.seed},
                                {"fold", s.fold},
                                {"source", s.source},
                                {"augmented", s.augmented},
                                {"foreground_fraction", s.foreground_fraction},
                                {"params", s.params},
                                {"warnings", s.warnings}});
    }
    std::ofstream out(path);
    if (!out) throw Error("cannot open for writing: " + path.string());
    out << j.dump(2) << "\n";
}

Manifest Manifest::load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open manifest " + path.string());
    Manifest m;
    try {
        json j;
        in >> j;
        m.version = j.value("version", 1);
        m.spec = j.at("spec").get<DatasetSpec>();
        for (const auto& s : j.at("samples")) {
            SampleEntry e;
            e.id = s.at("id").get<std::string>();
            e.image = s.at("image").get<std::string>();
            e.mask = s.at("mask").get<std::string>();
            e.cloud = s.at("cloud").get<std::string>();
            e.centroid = vec_from(s.at("centroid"));
            e.seed = s.value("seed", std::uint64_t{0});
            e.fold = s.at("fold").get<int>();
            e.source = s.value("source", e.id);
            e.augmented = s.value("augmented", false);
            e.foreground_fraction = s.value("foreground_fraction", 0.0);
            e.params = s.value("params", json::object());
            e.warnings = s.value("warnings", std::vector<std::string>{});
            m.samples.push_back(std::move(e));
        }
    } catch (const json::exception& e) {
        throw ParseError("manifest " + path.string() + ": " + e.what());
    }
    m.directory = path.parent_path();
    return m;
}

std::vector<int> assign_folds(std::size_t n, int folds, std::uint64_t seed) {
    if (folds < 2) throw ConfigError("folds must be >= 2");
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    Rng rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng.engine());
    std::vector<int> out(n);
    for (std::size_t k = 0; k < n; ++k) out[perm[k]] = static_cast<int>(k % static_cast<std::size_t>(folds));
    return out;
}

Manifest make_dataset(const DatasetSpec& spec, const fs::path& out_dir) {
    if (spec.n_samples < 1) throw ConfigError("n_samples must be >= 1");
    if (spec.n_points < 1) throw ConfigError("n_points must be >= 1");
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec || !fs::is_directory(out_dir)) throw Error("cannot create output directory " + out_dir.string());
    {
        const auto probe = out_dir / ".write_probe";
        std::ofstream test(probe);
        if (!test) throw Error("output directory is not writable: " + out_dir.string());
        test.close();
        fs::remove(probe, ec);
    }

    const auto ranges = spec.ranges.value_or(ParamRanges::for_grid(spec.grid_shape, spec.spacing));
    const auto folds = assign_folds(spec.n_samples, spec.folds, derive_seed(spec.seed, 0xF01D));
    const double voxels = static_cast<double>(spec.grid_shape[0] * spec.grid_shape[1] * spec.grid_shape[2]);

    Manifest manifest;
    manifest.spec = spec;
    manifest.directory = out_dir;

    auto emit = [&](SampleEntry entry, const VoxelVolume& image, const MaskVolume& mask) {
        const auto gt = shape::cloud_from_mask(mask, spec.n_points, spec.downsample, derive_seed(entry.seed, 77));
        entry.image = entry.id + "_image.mha";
        entry.mask = entry.id + "_mask.mha";
        entry.cloud = entry.id + "_cloud.xyz";
        entry.centroid = gt.centroid;
        entry.foreground_fraction = static_cast<double>(mask.foreground_count()) / voxels;
        io::save_volume(image, out_dir / entry.image);
        io::save_volume(mask, out_dir / entry.mask);
        io::save_cloud(gt.cloud, out_dir / entry.cloud);
        manifest.samples.push_back(std::move(entry));
    };

    for (std::size_t i = 0; i < spec.n_samples; ++i) {
        const auto subject_seed = derive_seed(spec.seed, i);
        std::optional<Phantom> phantom;
        PhantomParams params;
        for (int attempt = 0; attempt < 32 && !phantom; ++attempt) {
            params = sample_params(ranges, derive_seed(subject_seed, 100 + static_cast<std::uint64_t>(attempt)));
            auto candidate = generate_phantom(params, spec.grid_shape, spec.spacing);
            const double frac = static_cast<double>(candidate.mask.foreground_count()) / voxels;
            if (frac >= 0.01 && frac <= 0.30) phantom = std::move(candidate);
        }
        if (!phantom) throw Error("could not draw a phantom with foreground fraction in [1%, 30%]");

        SampleEntry entry;
        entry.id = case_id(i);
        entry.seed = subject_seed;
        entry.fold = folds[i];
        entry.source = entry.id;
        entry.params = params;
        entry.warnings = phantom->warnings;
        emit(entry, phantom->image, phantom->mask);

        for (std::size_t c = 1; c <= spec.augment_factor; ++c) {
            auto elastic = spec.elastic;
            elastic.seed = derive_seed(subject_seed, 2000 + c);
            auto [img, msk] = preprocess::elastic_deform(phantom->image, phantom->mask, elastic);
            SampleEntry copy;
            char suffix[16];
            std::snprintf(suffix, sizeof(suffix), "_aug%03zu", c);
            copy.id = entry.id + suffix;
            copy.seed = elastic.seed;
            copy.fold = entry.fold;
            copy.source = entry.id;
            copy.augmented = true;
            copy.params = params;
            emit(copy, img, msk);
        }
    }
    manifest.save(out_dir / "manifest.json");
    return manifest;
}

}  // namespace pcunet::synthetic
