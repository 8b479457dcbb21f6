#pragma once

// Experiment orchestration: configuration, training with validation-based
// model selection, evaluation, k-fold cross-validation and comparison tables.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "pcunet/error.hpp"
#include "pcunet/losses.hpp"
#include "pcunet/metrics.hpp"
#include "pcunet/model.hpp"
#include "pcunet/synthetic.hpp"

namespace pcunet::harness {

/// Raised when a training loss becomes non-finite. The best checkpoint so far
/// (if any) is left on disk.
class DivergenceError : public Error {
public:
    using Error::Error;
};

struct OptimizerConfig {
    std::string kind = "adam";
    double learning_rate = 1e-4;
};

struct ExperimentConfig {
    std::filesystem::path manifest;
    model::ModelConfig model;
    OptimizerConfig optimizer;
    double lambda = losses::kDefaultLambda;
    int epochs = 40;
    int batch_size = 2;
    int patience = 10;  // epochs without validation-loss improvement; 0 disables
    int folds = 4;
    std::vector<int> run_folds;          // empty: every fold
    double validation_fraction = 0.1;    // training subjects held out for model selection
    std::uint64_t seed = 0;
    std::filesystem::path output_dir;
    bool deterministic = true;

    /// Throws ConfigError on invalid values or a missing manifest.
    void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

/// Reads a JSON config; relative paths resolve against the file's directory.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// One sample in tensor form.
struct Sample {
    std::string id;
    std::string source;
    torch::Tensor volume;  // (1, Dz, Dy, Dx), normalized intensity
    torch::Tensor mask;    // (1, Dz, Dy, Dx), {0, 1}
    torch::Tensor cloud;   // (N, 3), centred mm
    MaskVolume gt_mask;
    PointCloud gt_cloud;
};

/// Loads manifest entries; the image is intensity-normalized.
Sample load_sample(const synthetic::Manifest& manifest, std::size_t index);
std::vector<Sample> load_samples(const synthetic::Manifest& manifest, const std::vector<std::size_t>& indices);

/// Which loss terms a variant optimizes: both heads use l_p + lambda * l_s,
/// a single head uses its own term unweighted.
struct LossRouting {
    bool chamfer = false;
    bool dice = false;
    double dice_weight = 1.0;
};
LossRouting loss_routing(model::Variant v, double lambda);

struct LossTermCounters {
    std::int64_t chamfer = 0;
    std::int64_t dice = 0;
};

/// Inner train/validation split of the training subjects of one fold.
struct FoldSplit {
    int fold = -1;
    std::vector<std::size_t> train;       // manifest indices, elastic copies included
    std::vector<std::size_t> validation;  // subjects only
    std::vector<std::size_t> test;        // subjects of the fold
};

/// Throws ConfigError when the fold has no subjects. Validation subjects
/// and their elastic copies never appear in `train`.
FoldSplit split_fold(const synthetic::Manifest& manifest, int fold, double validation_fraction, std::uint64_t seed);

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double train_chamfer = 0.0;
    double train_dice_loss = 0.0;
    double val_loss = 0.0;
    std::optional<double> val_cd;
    std::optional<double> val_dice;
    double seconds = 0.0;
};

nlohmann::json to_json(const EpochRecord& r);

struct TrainResult {
    std::filesystem::path checkpoint;  // best validation model
    std::vector<EpochRecord> history;
    int best_epoch = 0;
    LossTermCounters counters;
    FoldSplit split;
};

/// Trains one model on `split`. Writes <output_dir>/train_log.jsonl (one JSON
/// line per epoch) and <output_dir>/best.ckpt.
TrainResult train(const ExperimentConfig& config, const synthetic::Manifest& manifest, const FoldSplit& split);
/// Trains on every training entry outside `fold`.
TrainResult train(const ExperimentConfig& config, int fold = 0);

/// Per-sample metrics of a model on manifest entries; absent heads are empty.
/// `threshold` binarizes mask probabilities; reported tables use the default.
std::vector<metrics::SampleMetrics> evaluate(model::PcuNet& net, const std::vector<Sample>& samples, int fold = -1,
                                             double threshold = metrics::kDefaultThreshold);
std::vector<metrics::SampleMetrics> evaluate(const std::filesystem::path& checkpoint,
                                             const synthetic::Manifest& manifest,
                                             const std::vector<std::size_t>& indices, int fold = -1,
                                             double threshold = metrics::kDefaultThreshold);

/// Mean and SD per metric column.
struct MetricSummary {
    std::optional<metrics::Summary> cd;
    std::optional<metrics::Summary> dice;
    std::optional<metrics::Summary> hd;
    std::size_t hd_failures = 0;
};

MetricSummary summarize_samples(const std::vector<metrics::SampleMetrics>& rows);
nlohmann::json to_json(const MetricSummary& s);

struct FoldResult {
    int fold = -1;
    TrainResult training;
    std::vector<metrics::SampleMetrics> rows;
    MetricSummary summary;  // over the fold's samples
};

struct CrossValidationResult {
    model::Variant variant{};
    std::vector<FoldResult> folds;
    MetricSummary pooled;  // mean and SD over fold means
};

/// Trains and evaluates one model per fold. Writes fold_<k>/ directories,
/// metrics.csv and summary.json under output_dir.
CrossValidationResult cross_validate(const ExperimentConfig& config);

/// Mean and SD over the per-fold means.
MetricSummary pool_folds(const std::vector<FoldResult>& folds);

struct MatrixRow {
    std::string name;
    MetricSummary summary;
};

/// Runs cross-validation for every config; all must share one manifest.
std::vector<MatrixRow> run_matrix(const std::vector<ExperimentConfig>& configs);

/// Text table with CD, Dice and HD columns; absent values render as "—".
std::string render_table(const std::vector<MatrixRow>& rows);
std::string table_csv(const std::vector<MatrixRow>& rows);

/// Published clinical-data results, kept for reference next to synthetic
/// tables. They are not reproducible on phantoms.
struct PublishedRow {
    const char* name;
    std::optional<double> cd, cd_sd, dice, dice_sd, hd, hd_sd;
};
const std::vector<PublishedRow>& published_baselines();
const std::vector<PublishedRow>& published_ablations();

}  // namespace pcunet::harness
