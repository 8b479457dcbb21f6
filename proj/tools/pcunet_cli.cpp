#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "pcunet/harness.hpp"
#include "pcunet/io.hpp"
#include "pcunet/metrics.hpp"
#include "pcunet/model.hpp"
#include "pcunet/preprocess.hpp"
#include "pcunet/shape_pipeline.hpp"
#include "pcunet/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pcunet;

namespace {

Index3 to_index3(const std::vector<std::int64_t>& v, const char* what) {
    if (v.size() != 3) throw ConfigError(std::string(what) + " needs 3 values");
    return {v[0], v[1], v[2]};
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open for writing: " + path.string());
    out << text;
}

std::vector<std::size_t> resolve_split(const synthetic::Manifest& manifest, const std::string& split, int& fold) {
    std::vector<std::size_t> out;
    if (split == "all") {
        fold = -1;
        for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
            if (!manifest.samples[i].augmented) out.push_back(i);
        }
        return out;
    }
    try {
        fold = std::stoi(split);
    } catch (const std::exception&) {
        throw ConfigError("split must be a fold index or 'all'");
    }
    out = manifest.fold_subjects(fold);
    if (out.empty()) throw ConfigError("fold " + split + " has no samples");
    return out;
}

std::size_t find_sample(const synthetic::Manifest& manifest, const std::string& id) {
    for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
        if (manifest.samples[i].id == id) return i;
    }
    throw ConfigError("sample not in manifest: " + id);
}

// Mid-depth slice: grey image, ground-truth wall in green, prediction in red.
void write_overlay_ppm(const VoxelVolume& image, const MaskVolume& gt, const MaskVolume& pred, const fs::path& path) {
    const auto nx = image.shape()[0];
    const auto ny = image.shape()[1];
    const auto z = image.shape()[2] / 2;
    float lo = image[0];
    float hi = image[0];
    for (std::size_t i = 0; i < image.size(); ++i) {
        lo = std::min(lo, image[i]);
        hi = std::max(hi, image[i]);
    }
    const float range = hi > lo ? hi - lo : 1.0f;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open for writing: " + path.string());
    out << "P6\n" << nx << " " << ny << "\n255\n";
    for (std::int64_t y = ny - 1; y >= 0; --y) {
        for (std::int64_t x = 0; x < nx; ++x) {
            const auto grey = static_cast<unsigned char>(255.0f * (image.at(x, y, z) - lo) / range);
            unsigned char rgb[3] = {grey, grey, grey};
            const bool g = gt.at(x, y, z) != 0;
            const bool p = pred.at(x, y, z) != 0;
            if (g && p) {
                rgb[0] = 255;
                rgb[1] = 255;
                rgb[2] = 0;
            } else if (g) {
                rgb[0] = 0;
                rgb[1] = 200;
                rgb[2] = 0;
            } else if (p) {
                rgb[0] = 220;
                rgb[1] = 0;
                rgb[2] = 0;
            }
            out.write(reinterpret_cast<const char*>(rgb), 3);
        }
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Joint point-cloud reconstruction and segmentation of the myocardium wall"};
    app.require_subcommand(1);

    // generate-data
    auto* gen = app.add_subcommand("generate-data", "Write a synthetic phantom dataset and manifest");
    std::string gen_out;
    std::string gen_spec;
    synthetic::DatasetSpec spec;
    std::vector<std::int64_t> gen_grid{64, 64, 32};
    double gen_spacing = 1.0;
    std::string gen_method = "fps";
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--spec", gen_spec, "Dataset spec JSON (overrides the flags below)");
    gen->add_option("--n", spec.n_samples, "Number of phantoms")->capture_default_str();
    gen->add_option("--grid", gen_grid, "Grid shape x y z")->expected(3);
    gen->add_option("--spacing", gen_spacing, "Isotropic spacing (mm)")->capture_default_str();
    gen->add_option("--points", spec.n_points, "Ground-truth cloud size")->capture_default_str();
    gen->add_option("--folds", spec.folds, "Cross-validation folds")->capture_default_str();
    gen->add_option("--seed", spec.seed, "Master seed")->capture_default_str();
    gen->add_option("--augment", spec.augment_factor, "Elastic copies per phantom")->capture_default_str();
    gen->add_option("--downsample", gen_method, "fps or random")->capture_default_str();

    // preprocess
    auto* pre = app.add_subcommand("preprocess", "Crop, resample, resize and normalize an image/mask pair");
    std::string pre_image, pre_mask, pre_out_image, pre_out_mask;
    preprocess::PreprocessOptions pre_opts;
    std::vector<std::int64_t> pre_shape{128, 128, 64};
    std::int64_t pre_elastic_seed = -1;
    pre->add_option("--image", pre_image)->required();
    pre->add_option("--mask", pre_mask)->required();
    pre->add_option("--out-image", pre_out_image)->required();
    pre->add_option("--out-mask", pre_out_mask)->required();
    pre->add_option("--margin", pre_opts.margin_mm, "ROI margin (mm)")->capture_default_str();
    pre->add_option("--spacing", pre_opts.target_spacing_mm, "Isotropic spacing (mm)")->capture_default_str();
    pre->add_option("--shape", pre_shape, "Target shape x y z")->expected(3);
    pre->add_option("--elastic-seed", pre_elastic_seed, "Apply one elastic deformation with this seed");

    // pc-from-mask
    auto* pcm = app.add_subcommand("pc-from-mask", "Build a centred ground-truth cloud from a mask");
    std::string pcm_mask, pcm_out, pcm_mesh, pcm_method = "fps";
    std::size_t pcm_points = 1024;
    std::uint64_t pcm_seed = 0;
    pcm->add_option("--in,--mask", pcm_mask, "Mask volume")->required();
    pcm->add_option("--out", pcm_out, "Cloud file (.xyz, .txt or .pcu)")->required();
    pcm->add_option("--mesh", pcm_mesh, "Also write the isosurface (.obj)");
    pcm->add_option("--n,--points", pcm_points, "Cloud size")->capture_default_str();
    pcm->add_option("--method", pcm_method, "fps or random")->capture_default_str();
    pcm->add_option("--seed", pcm_seed)->capture_default_str();

    // train
    auto* tr = app.add_subcommand("train", "Train one model on the complement of a fold");
    std::string tr_config;
    int tr_fold = 0;
    tr->add_option("--config", tr_config)->required()->check(CLI::ExistingFile);
    tr->add_option("--fold", tr_fold)->capture_default_str();

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "Per-sample metrics of a checkpoint");
    std::string ev_ckpt, ev_manifest, ev_split = "all", ev_out;
    std::vector<double> ev_thresholds;
    ev->add_option("--ckpt", ev_ckpt)->required()->check(CLI::ExistingFile);
    ev->add_option("--manifest", ev_manifest)->required()->check(CLI::ExistingFile);
    ev->add_option("--split", ev_split, "Fold index or 'all'")->capture_default_str();
    ev->add_option("--out", ev_out, "Metrics CSV");
    ev->add_option("--threshold", ev_thresholds, "Mask threshold(s); several values print a sweep");

    // cross-validate
    auto* cv = app.add_subcommand("cross-validate", "k-fold cross-validation of one config");
    std::string cv_config;
    cv->add_option("--config", cv_config)->required()->check(CLI::ExistingFile);

    // run-matrix
    auto* rm = app.add_subcommand("run-matrix", "Cross-validate several configs on one dataset");
    std::vector<std::string> rm_configs;
    std::string rm_out;
    rm->add_option("--configs", rm_configs)->required()->check(CLI::ExistingFile);
    rm->add_option("--out", rm_out, "Table prefix (writes <prefix>.csv and <prefix>.txt)");

    // export
    auto* ex = app.add_subcommand("export", "Write predictions for one sample");
    std::string ex_ckpt, ex_manifest, ex_sample, ex_out;
    ex->add_option("--ckpt", ex_ckpt)->required()->check(CLI::ExistingFile);
    ex->add_option("--manifest", ex_manifest)->required()->check(CLI::ExistingFile);
    ex->add_option("--sample", ex_sample, "Sample id")->required();
    ex->add_option("--out", ex_out, "Output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            if (!gen_spec.empty()) {
                std::ifstream in(gen_spec);
                if (!in) throw ConfigError("cannot open " + gen_spec);
                spec = json::parse(in).get<synthetic::DatasetSpec>();
            } else {
                spec.grid_shape = to_index3(gen_grid, "--grid");
                spec.spacing = {gen_spacing, gen_spacing, gen_spacing};
                spec.downsample = shape::parse_downsample_method(gen_method);
            }
            const auto m = synthetic::make_dataset(spec, gen_out);
            std::size_t warned = 0;
            for (const auto& s : m.samples) warned += !s.warnings.empty();
            std::cout << "wrote " << m.samples.size() << " samples to " << gen_out << " (" << warned
                      << " with warnings)\n";
        } else if (*pre) {
            pre_opts.target_shape = to_index3(pre_shape, "--shape");
            auto image = io::load_image(pre_image);
            auto mask = io::load_mask(pre_mask);
            if (pre_elastic_seed >= 0) {
                preprocess::ElasticParams ep;
                ep.seed = static_cast<std::uint64_t>(pre_elastic_seed);
                std::tie(image, mask) = preprocess::elastic_deform(image, mask, ep);
            }
            const auto [img, msk] = preprocess::run_chain(image, mask, pre_opts);
            io::save_volume(img, pre_out_image);
            io::save_volume(msk, pre_out_mask);
        } else if (*pcm) {
            const auto mask = io::load_mask(pcm_mask);
            const auto gt = shape::cloud_from_mask(mask, pcm_points, shape::parse_downsample_method(pcm_method), pcm_seed);
            io::save_cloud(gt.cloud, pcm_out);
            if (!pcm_mesh.empty()) io::save_mesh_obj(shape::mask_to_mesh(mask), pcm_mesh);
            std::cout << "dense " << gt.dense_size << " points, kept " << gt.cloud.size() << ", centroid "
                      << gt.centroid[0] << " " << gt.centroid[1] << " " << gt.centroid[2] << "\n";
        } else if (*tr) {
            const auto config = harness::load_experiment_config(tr_config);
            const auto result = harness::train(config, tr_fold);
            std::cout << "best epoch " << result.best_epoch << ", checkpoint " << result.checkpoint.string() << "\n";
        } else if (*ev) {
            const auto manifest = synthetic::Manifest::load(ev_manifest);
            int fold = -1;
            const auto indices = resolve_split(manifest, ev_split, fold);
            if (ev_thresholds.empty()) ev_thresholds.push_back(metrics::kDefaultThreshold);
            auto ckpt = model::load_checkpoint(ev_ckpt);
            const auto samples = harness::load_samples(manifest, indices);
            for (double t : ev_thresholds) {
                const auto rows = harness::evaluate(ckpt.model, samples, fold, t);
                const auto s = harness::summarize_samples(rows);
                std::cout << "threshold " << t << "  CD " << metrics::format_summary(s.cd) << "  Dice "
                          << metrics::format_summary(s.dice) << "  HD " << metrics::format_summary(s.hd);
                if (s.hd_failures > 0) std::cout << " (" << s.hd_failures << " empty predictions)";
                std::cout << "\n";
                if (!ev_out.empty() && t == ev_thresholds.front()) metrics::write_metrics_csv(rows, ev_out);
            }
        } else if (*cv) {
            const auto config = harness::load_experiment_config(cv_config);
            const auto result = harness::cross_validate(config);
            std::cout << harness::render_table({{std::string(model::display_name(result.variant)), result.pooled}});
        } else if (*rm) {
            std::vector<harness::ExperimentConfig> configs;
            for (const auto& c : rm_configs) configs.push_back(harness::load_experiment_config(c));
            const auto rows = harness::run_matrix(configs);
            const auto table = harness::render_table(rows);
            std::cout << table;
            if (!rm_out.empty()) {
                write_text(rm_out + ".txt", table);
                write_text(rm_out + ".csv", harness::table_csv(rows));
            }
        } else if (*ex) {
            const auto manifest = synthetic::Manifest::load(ex_manifest);
            const auto index = find_sample(manifest, ex_sample);
            auto ckpt = model::load_checkpoint(ex_ckpt);
            const auto sample = harness::load_sample(manifest, index);
            const auto t = model::traits(ckpt.config.variant);
            const bool gt_input = t.point_net && ckpt.config.point_net_input == model::PointNetInput::GroundTruth;
            ckpt.model->eval();
            torch::NoGradGuard no_grad;
            const auto out = ckpt.model->forward(
                sample.volume.unsqueeze(0), gt_input ? std::optional<torch::Tensor>(sample.cloud.unsqueeze(0)) : std::nullopt);
            fs::create_directories(ex_out);
            const fs::path dir(ex_out);
            if (out.cloud) {
                io::save_cloud(PointCloud(losses::to_points(*out.cloud)[0]), dir / "cloud.xyz");
            }
            if (out.mask) {
                const auto pred = metrics::binarize((*out.mask)[0], sample.gt_mask.geometry());
                io::save_volume(pred, dir / "mask.mha");
                if (pred.foreground_count() > 0 && pred.foreground_count() < pred.size()) {
                    io::save_mesh_obj(shape::mask_to_mesh(pred), dir / "mesh.obj");
                }
                const auto image = io::load_image(manifest.resolve(manifest.samples[index].image));
                write_overlay_ppm(image, sample.gt_mask, pred, dir / "overlay.ppm");
            }
            std::cout << "exported " << ex_sample << " to " << ex_out << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
