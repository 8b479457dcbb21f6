#include "pcunet/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "pcunet/io.hpp"
#include "pcunet/preprocess.hpp"
#include "pcunet/rng.hpp"

namespace pcunet::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Subnormal activations and gradients appear as training converges and slow
// CPU kernels several-fold; flushing them to zero keeps epochs at a flat cost.
void flush_subnormals() { at::globalContext().setFlushDenormal(true); }

torch::Tensor grid_tensor(std::span<const float> data, const Index3& shape) {
    auto t = torch::empty({1, shape[2], shape[1], shape[0]}, torch::kFloat32);
    std::copy(data.begin(), data.end(), t.data_ptr<float>());
    return t;
}

torch::Tensor mask_tensor(const MaskVolume& mask) {
    auto t = torch::empty({1, mask.shape()[2], mask.shape()[1], mask.shape()[0]}, torch::kFloat32);
    float* d = t.data_ptr<float>();
    for (std::size_t i = 0; i < mask.size(); ++i) d[i] = static_cast<float>(mask[i]);
    return t;
}

bool has_gt_input(const model::ModelConfig& c) {
    return model::traits(c.variant).point_net && c.point_net_input == model::PointNetInput::GroundTruth;
}

struct Batch {
    torch::Tensor volume;
    torch::Tensor mask;
    torch::Tensor cloud;
};

Batch make_batch(const std::vector<Sample>& samples, const std::vector<std::size_t>& order, std::size_t begin,
                 std::size_t end) {
    std::vector<torch::Tensor> v, m, c;
    for (std::size_t i = begin; i < end; ++i) {
        const auto& s = samples[order[i]];
        v.push_back(s.volume);
        m.push_back(s.mask);
        c.push_back(s.cloud);
    }
    return {torch::stack(v), torch::stack(m), torch::stack(c)};
}

struct LossParts {
    torch::Tensor total;
    double chamfer = 0.0;
    double dice = 0.0;
};

LossParts compute_loss(model::PcuNet& net, const Batch& batch, const LossRouting& routing,
                       LossTermCounters* counters) {
    const bool gt_input = has_gt_input(net->config());
    const auto out = net->forward(batch.volume, gt_input ? std::optional<torch::Tensor>(batch.cloud) : std::nullopt);
    LossParts parts;
    parts.total = torch::zeros({}, torch::kFloat32);
    if (routing.chamfer) {
        auto lp = losses::chamfer_loss(out.require_cloud(), batch.cloud);
        parts.chamfer = lp.item<double>();
        parts.total = parts.total + lp;
        if (counters) ++counters->chamfer;
    }
    if (routing.dice) {
        auto ls = losses::soft_dice_loss(out.require_mask(), batch.mask);
        parts.dice = ls.item<double>();
        parts.total = parts.total + routing.dice_weight * ls;
        if (counters) ++counters->dice;
    }
    return parts;
}

std::string fold_dir_name(int fold) { return "fold_" + std::to_string(fold); }

std::optional<double> mean_of(const std::vector<std::optional<double>>& values) {
    const auto s = metrics::summarize(values);
    if (!s) return std::nullopt;
    return s->mean;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open for writing: " + path.string());
    out << text;
}

}  // namespace

void ExperimentConfig::validate() const {
    if (optimizer.kind != "adam") throw ConfigError("optimizer.kind must be 'adam'");
    if (!(optimizer.learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (patience < 0) throw ConfigError("patience must be >= 0");
    if (folds < 2) throw ConfigError("folds must be >= 2");
    for (int f : run_folds) {
        if (f < 0 || f >= folds) throw ConfigError("run_folds entry out of range: " + std::to_string(f));
    }
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
        throw ConfigError("validation_fraction must lie in [0, 1)");
    }
    if (manifest.empty() || !fs::exists(manifest)) throw ConfigError("manifest not found: " + manifest.string());
    if (output_dir.empty()) throw ConfigError("output_dir must be set");
    model.validate();
}

void to_json(json& j, const ExperimentConfig& c) {
    j = {{"manifest", c.manifest.string()},
         {"model", c.model},
         {"optimizer", {{"kind", c.optimizer.kind}, {"learning_rate", c.optimizer.learning_rate}}},
         {"lambda", c.lambda},
         {"epochs", c.epochs},
         {"batch_size", c.batch_size},
         {"patience", c.patience},
         {"folds", c.folds},
         {"run_folds", c.run_folds},
         {"validation_fraction", c.validation_fraction},
         {"seed", c.seed},
         {"output_dir", c.output_dir.string()},
         {"deterministic", c.deterministic}};
}

void from_json(const json& j, ExperimentConfig& c) {
    c = ExperimentConfig{};
    try {
        c.manifest = j.at("manifest").get<std::string>();
        c.model = j.at("model").get<model::ModelConfig>();
        if (j.contains("optimizer")) {
            c.optimizer.kind = j["optimizer"].value("kind", c.optimizer.kind);
            c.optimizer.learning_rate = j["optimizer"].value("learning_rate", c.optimizer.learning_rate);
        }
        c.lambda = j.value("lambda", c.lambda);
        c.epochs = j.value("epochs", c.epochs);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.patience = j.value("patience", c.patience);
        c.folds = j.value("folds", c.folds);
        c.run_folds = j.value("run_folds", c.run_folds);
        c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
        c.seed = j.value("seed", c.seed);
        c.output_dir = j.value("output_dir", std::string("runs"));
        c.deterministic = j.value("deterministic", c.deterministic);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("experiment config: ") + e.what());
    }
}

ExperimentConfig load_experiment_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
    auto c = j.get<ExperimentConfig>();
    const auto base = path.parent_path();
    if (c.manifest.is_relative()) c.manifest = base / c.manifest;
    if (c.output_dir.is_relative()) c.output_dir = base / c.output_dir;
    return c;
}

Sample load_sample(const synthetic::Manifest& manifest, std::size_t index) {
    if (index >= manifest.samples.size()) throw BoundsError("manifest index out of range");
    const auto& e = manifest.samples[index];
    const auto image = preprocess::normalize_intensity(io::load_image(manifest.resolve(e.image)));
    auto mask = io::load_mask(manifest.resolve(e.mask));
    require_aligned(image, mask);
    auto cloud = io::load_cloud(manifest.resolve(e.cloud));
    Sample s{e.id, e.source, grid_tensor(image.data(), image.shape()), mask_tensor(mask),
             losses::to_tensor(cloud.points()), std::move(mask), std::move(cloud)};
    return s;
}

std::vector<Sample> load_samples(const synthetic::Manifest& manifest, const std::vector<std::size_t>& indices) {
    std::vector<Sample> out;
    out.reserve(indices.size());
    for (auto i : indices) out.push_back(load_sample(manifest, i));
    return out;
}

LossRouting loss_routing(model::Variant v, double lambda) {
    const auto t = model::traits(v);
    LossRouting r;
    r.chamfer = t.cloud_head;
    r.dice = t.mask_head;
    r.dice_weight = t.cloud_head ? lambda : 1.0;
    return r;
}

FoldSplit split_fold(const synthetic::Manifest& manifest, int fold, double validation_fraction, std::uint64_t seed) {
    FoldSplit split;
    split.fold = fold;
    split.test = manifest.fold_subjects(fold);
    if (split.test.empty()) throw ConfigError("fold " + std::to_string(fold) + " has no samples");

    std::vector<std::string> subjects;
    for (const auto& e : manifest.samples) {
        if (e.fold != fold && !e.augmented) subjects.push_back(e.id);
    }
    if (subjects.empty()) throw ConfigError("fold " + std::to_string(fold) + " leaves no training samples");
    auto n_val = static_cast<std::size_t>(std::ceil(validation_fraction * static_cast<double>(subjects.size())));
    if (n_val >= subjects.size()) n_val = subjects.size() - 1;
    Rng rng(derive_seed(seed, 0x5EED0000ULL + static_cast<std::uint64_t>(fold)));
    std::shuffle(subjects.begin(), subjects.end(), rng.engine());
    const std::set<std::string> val_ids(subjects.begin(), subjects.begin() + static_cast<std::ptrdiff_t>(n_val));

    for (auto i : manifest.training_entries(fold)) {
        const auto& e = manifest.samples[i];
        if (val_ids.count(e.source)) {
            if (!e.augmented) split.validation.push_back(i);
        } else {
            split.train.push_back(i);
        }
    }
    return split;
}

json to_json(const EpochRecord& r) {
    auto opt = [](const std::optional<double>& v) -> json { return v ? json(*v) : json(nullptr); };
    return {{"epoch", r.epoch},           {"train_loss", r.train_loss}, {"train_chamfer", r.train_chamfer},
            {"train_dice_loss", r.train_dice_loss}, {"val_loss", r.val_loss}, {"val_cd", opt(r.val_cd)},
            {"val_dice", opt(r.val_dice)}, {"seconds", r.seconds}};
}

TrainResult train(const ExperimentConfig& config, const synthetic::Manifest& manifest, const FoldSplit& split) {
    config.validate();
    if (split.train.empty()) throw ConfigError("no training samples");
    if (config.deterministic) model::enable_deterministic_mode();
    flush_subnormals();
    fs::create_directories(config.output_dir);

    auto model_config = config.model;
    model_config.seed = derive_seed(config.seed, 0xA0000ULL + static_cast<std::uint64_t>(split.fold + 1));
    auto net = model::build_model(model_config);
    torch::optim::Adam optimizer(net->parameters(), torch::optim::AdamOptions(config.optimizer.learning_rate));

    const auto routing = loss_routing(model_config.variant, config.lambda);
    const bool select_by_dice = model::traits(model_config.variant).mask_head;
    const auto train_samples = load_samples(manifest, split.train);
    const auto val_samples = load_samples(manifest, split.validation);

    TrainResult result;
    result.split = split;
    result.checkpoint = config.output_dir / "best.ckpt";
    std::ofstream log(config.output_dir / "train_log.jsonl");
    if (!log) throw Error("cannot write training log in " + config.output_dir.string());

    model::TrainingState state;
    state.fold = split.fold;
    double best_selection = -std::numeric_limits<double>::infinity();
    double best_val_loss = std::numeric_limits<double>::infinity();
    int stale_epochs = 0;
    bool have_checkpoint = false;

    std::vector<std::size_t> order(train_samples.size());
    const auto batch = static_cast<std::size_t>(config.batch_size);
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(derive_seed(config.seed, (static_cast<std::uint64_t>(split.fold + 1) << 20) + epoch));
        std::shuffle(order.begin(), order.end(), rng.engine());

        net->train();
        EpochRecord rec;
        rec.epoch = epoch;
        std::size_t n_batches = 0;
        for (std::size_t b = 0; b < order.size(); b += batch) {
            const auto data = make_batch(train_samples, order, b, std::min(order.size(), b + batch));
            optimizer.zero_grad();
            auto parts = compute_loss(net, data, routing, &result.counters);
            const double loss = parts.total.item<double>();
            if (!std::isfinite(loss)) {
                log.flush();
                throw DivergenceError("training loss became non-finite at epoch " + std::to_string(epoch) +
                                      ", step " + std::to_string(state.step) + "; last good checkpoint: " +
                                      (have_checkpoint ? result.checkpoint.string() : std::string("none")));
            }
            parts.total.backward();
            optimizer.step();
            ++state.step;
            ++n_batches;
            rec.train_loss += loss;
            rec.train_chamfer += parts.chamfer;
            rec.train_dice_loss += parts.dice;
        }
        rec.train_loss /= static_cast<double>(n_batches);
        rec.train_chamfer /= static_cast<double>(n_batches);
        rec.train_dice_loss /= static_cast<double>(n_batches);

        // Validation: loss for early stopping, Dice or CD for model selection.
        double selection = 0.0;
        if (!val_samples.empty()) {
            net->eval();
            torch::NoGradGuard no_grad;
            double val_loss = 0.0;
            std::vector<std::size_t> idx(val_samples.size());
            std::iota(idx.begin(), idx.end(), std::size_t{0});
            for (std::size_t i = 0; i < val_samples.size(); ++i) {
                val_loss += compute_loss(net, make_batch(val_samples, idx, i, i + 1), routing, nullptr)
                                .total.item<double>();
            }
            rec.val_loss = val_loss / static_cast<double>(val_samples.size());
            const auto rows = evaluate(net, val_samples, split.fold);
            std::vector<std::optional<double>> cds, dices;
            for (const auto& r : rows) {
                cds.push_back(r.cd);
                dices.push_back(r.dice);
            }
            rec.val_cd = mean_of(cds);
            rec.val_dice = mean_of(dices);
            selection = select_by_dice ? rec.val_dice.value_or(0.0) : -rec.val_cd.value_or(0.0);
        } else {
            rec.val_loss = rec.train_loss;
            selection = -rec.train_loss;
        }
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        state.epoch = epoch;
        state.history.push_back(to_json(rec));
        log << to_json(rec).dump() << "\n";
        log.flush();
        result.history.push_back(rec);

        if (selection > best_selection) {
            best_selection = selection;
            result.best_epoch = epoch;
            model::save_checkpoint(net, state, result.checkpoint);
            have_checkpoint = true;
        }
        if (rec.val_loss < best_val_loss) {
            best_val_loss = rec.val_loss;
            stale_epochs = 0;
        } else if (config.patience > 0 && ++stale_epochs >= config.patience) {
            break;
        }
    }
    return result;
}

TrainResult train(const ExperimentConfig& config, int fold) {
    config.validate();
    const auto manifest = synthetic::Manifest::load(config.manifest);
    return train(config, manifest, split_fold(manifest, fold, config.validation_fraction, config.seed));
}

std::vector<metrics::SampleMetrics> evaluate(model::PcuNet& net, const std::vector<Sample>& samples, int fold,
                                             double threshold) {
    const auto& cfg = net->config();
    const auto t = model::traits(cfg.variant);
    const bool gt_input = has_gt_input(cfg);
    flush_subnormals();
    net->eval();
    torch::NoGradGuard no_grad;
    std::vector<metrics::SampleMetrics> rows;
    for (const auto& s : samples) {
        metrics::SampleMetrics r;
        r.variant = std::string(model::to_string(cfg.variant));
        r.fold = fold;
        r.sample_id = s.id;
        const auto out = net->forward(s.volume.unsqueeze(0),
                                      gt_input ? std::optional<torch::Tensor>(s.cloud.unsqueeze(0)) : std::nullopt);
        if (t.cloud_head) {
            const auto pts = losses::to_points(out.require_cloud())[0];
            r.cd = metrics::chamfer_distance(PointCloud(pts), s.gt_cloud);
        }
        if (t.mask_head) {
            const auto pred = metrics::binarize(out.require_mask()[0], s.gt_mask.geometry(), threshold);
            r.dice = metrics::dice_coefficient(pred, s.gt_mask);
            if (pred.foreground_count() == 0) {
                r.hd_failed = true;
            } else {
                r.hd = metrics::hausdorff_distance(pred, s.gt_mask);
            }
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<metrics::SampleMetrics> evaluate(const fs::path& checkpoint, const synthetic::Manifest& manifest,
                                             const std::vector<std::size_t>& indices, int fold, double threshold) {
    auto ckpt = model::load_checkpoint(checkpoint);
    const auto samples = load_samples(manifest, indices);
    return evaluate(ckpt.model, samples, fold, threshold);
}

MetricSummary summarize_samples(const std::vector<metrics::SampleMetrics>& rows) {
    std::vector<std::optional<double>> cd, dice, hd;
    MetricSummary s;
    for (const auto& r : rows) {
        cd.push_back(r.cd);
        dice.push_back(r.dice);
        hd.push_back(r.hd);
        if (r.hd_failed) ++s.hd_failures;
    }
    s.cd = metrics::summarize(cd);
    s.dice = metrics::summarize(dice);
    s.hd = metrics::summarize(hd);
    return s;
}

json to_json(const MetricSummary& s) {
    return {{"cd", metrics::to_json(s.cd)},
            {"dice", metrics::to_json(s.dice)},
            {"hd", metrics::to_json(s.hd)},
            {"hd_failures", s.hd_failures}};
}

MetricSummary pool_folds(const std::vector<FoldResult>& folds) {
    std::vector<std::optional<double>> cd, dice, hd;
    MetricSummary s;
    auto mean = [](const std::optional<metrics::Summary>& v) -> std::optional<double> {
        if (!v) return std::nullopt;
        return v->mean;
    };
    for (const auto& f : folds) {
        cd.push_back(mean(f.summary.cd));
        dice.push_back(mean(f.summary.dice));
        hd.push_back(mean(f.summary.hd));
        s.hd_failures += f.summary.hd_failures;
    }
    s.cd = metrics::summarize(cd);
    s.dice = metrics::summarize(dice);
    s.hd = metrics::summarize(hd);
    return s;
}

CrossValidationResult cross_validate(const ExperimentConfig& config) {
    config.validate();
    const auto manifest = synthetic::Manifest::load(config.manifest);
    if (manifest.spec.folds != config.folds) {
        throw ConfigError("config folds (" + std::to_string(config.folds) + ") differ from the manifest's (" +
                          std::to_string(manifest.spec.folds) + ")");
    }
    std::vector<int> folds = config.run_folds;
    if (folds.empty()) {
        for (int k = 0; k < config.folds; ++k) folds.push_back(k);
    }
    fs::create_directories(config.output_dir);

    CrossValidationResult cv;
    cv.variant = config.model.variant;
    std::vector<metrics::SampleMetrics> all_rows;
    json fold_json = json::array();
    for (int k : folds) {
        auto fold_config = config;
        fold_config.output_dir = config.output_dir / fold_dir_name(k);
        const auto split = split_fold(manifest, k, config.validation_fraction, config.seed);

        // Evaluation subjects must not reach training or validation.
        std::set<std::string> seen;
        for (auto i : split.train) seen.insert(manifest.samples[i].source);
        for (auto i : split.validation) seen.insert(manifest.samples[i].source);
        for (auto i : split.test) {
            if (seen.count(manifest.samples[i].source)) {
                throw InvariantError("evaluation sample " + manifest.samples[i].id + " appears in training");
            }
        }

        FoldResult fr;
        fr.fold = k;
        fr.training = train(fold_config, manifest, split);
        fr.rows = evaluate(fr.training.checkpoint, manifest, split.test, k);
        fr.summary = summarize_samples(fr.rows);
        metrics::write_metrics_csv(fr.rows, fold_config.output_dir / "metrics.csv");
        all_rows.insert(all_rows.end(), fr.rows.begin(), fr.rows.end());
        fold_json.push_back({{"fold", k},
                             {"best_epoch", fr.training.best_epoch},
                             {"epochs_run", fr.training.history.size()},
                             {"summary", to_json(fr.summary)}});
        cv.folds.push_back(std::move(fr));
    }
    cv.pooled = pool_folds(cv.folds);
    metrics::write_metrics_csv(all_rows, config.output_dir / "metrics.csv");
    const json summary{{"variant", std::string(model::to_string(cv.variant))},
                       {"display_name", std::string(model::display_name(cv.variant))},
                       {"folds", fold_json},
                       {"pooled", to_json(cv.pooled)}};
    write_text(config.output_dir / "summary.json", summary.dump(2) + "\n");
    return cv;
}

std::vector<MatrixRow> run_matrix(const std::vector<ExperimentConfig>& configs) {
    if (configs.empty()) throw ConfigError("run_matrix needs at least one config");
    const auto reference = fs::weakly_canonical(configs.front().manifest);
    for (const auto& c : configs) {
        if (fs::weakly_canonical(c.manifest) != reference) {
            throw ConfigError("configs reference different datasets: " + reference.string() + " vs " +
                              c.manifest.string());
        }
    }
    std::vector<MatrixRow> rows;
    for (const auto& c : configs) {
        const auto cv = cross_validate(c);
        rows.push_back({std::string(model::display_name(cv.variant)), cv.pooled});
    }
    return rows;
}

std::string render_table(const std::vector<MatrixRow>& rows) {
    std::size_t name_width = 6;
    for (const auto& r : rows) name_width = std::max(name_width, r.name.size());
    std::ostringstream out;
    char line[256];
    std::snprintf(line, sizeof(line), "%-*s | %-15s | %-15s | %-15s\n", static_cast<int>(name_width), "Method",
                  "CD (mm)", "Dice", "HD (mm)");
    out << line << std::string(name_width + 54, '-') << "\n";
    for (const auto& r : rows) {
        // Pad by display width: "±" and "—" are multi-byte in UTF-8.
        auto cell = [](const std::string& s) {
            std::size_t width = 0;
            for (unsigned char ch : s) width += (ch & 0xC0) != 0x80;
            return s + std::string(width < 15 ? 15 - width : 0, ' ');
        };
        out << r.name << std::string(name_width - r.name.size(), ' ') << " | " << cell(metrics::format_summary(r.summary.cd))
            << " | " << cell(metrics::format_summary(r.summary.dice)) << " | "
            << cell(metrics::format_summary(r.summary.hd)) << "\n";
    }
    for (const auto& r : rows) {
        if (r.summary.hd_failures > 0) {
            out << "HD of " << r.name << " excludes " << r.summary.hd_failures << " empty predicted mask(s)\n";
        }
    }
    return out.str();
}

std::string table_csv(const std::vector<MatrixRow>& rows) {
    std::ostringstream out;
    out << "method,cd_mean,cd_sd,dice_mean,dice_sd,hd_mean,hd_sd\n";
    auto pair = [](const std::optional<metrics::Summary>& s) {
        if (!s) return metrics::format_value(std::nullopt) + "," + metrics::format_value(std::nullopt);
        return metrics::format_value(s->mean) + "," + metrics::format_value(s->sd);
    };
    for (const auto& r : rows) {
        out << r.name << ',' << pair(r.summary.cd) << ',' << pair(r.summary.dice) << ',' << pair(r.summary.hd)
            << '\n';
    }
    return out.str();
}

const std::vector<PublishedRow>& published_baselines() {
    static const std::vector<PublishedRow> rows{
        {"PointOutNet-single-slice", 1.489, 0.547, std::nullopt, std::nullopt, std::nullopt, std::nullopt},
        {"PointOutNet-volume-2DConv", 1.454, 0.422, std::nullopt, std::nullopt, std::nullopt, std::nullopt},
        {"PointOutNet-volume-3DConv", 1.330, 0.330, std::nullopt, std::nullopt, std::nullopt, std::nullopt},
        {"UNet-volume-2DConv", std::nullopt, std::nullopt, 0.843, 0.024, 16.477, 8.311},
        {"UNet-volume-3DConv", std::nullopt, std::nullopt, 0.877, 0.012, 10.446, 4.489},
        {"PC-Unet-2DConv", 1.278, 0.249, 0.838, 0.026, 10.894, 2.176},
        {"PC-Unet-3DConv", 1.276, 0.168, 0.885, 0.011, 7.050, 1.103},
    };
    return rows;
}

const std::vector<PublishedRow>& published_ablations() {
    static const std::vector<PublishedRow> rows{
        {"PC-Mask-Decoder", std::nullopt, std::nullopt, 0.725, std::nullopt, 8.682, std::nullopt},
        {"PC-Unet-no-skip", 1.182, std::nullopt, 0.699, std::nullopt, 7.896, std::nullopt},
        {"PC-Unet-3DConv", 1.149, std::nullopt, 0.884, std::nullopt, 5.862, std::nullopt},
    };
    return rows;
}

}  // namespace pcunet::harness
