#pragma once

// Joint point-cloud / mask network and its baselines.
//
// Volumes enter as (B, 1, Dz, Dy, Dx) tensors of normalized intensity.
// The image encoder predicts a centred cloud (B, N, 3) in mm and keeps one
// pre-activation feature grid per stage. The point net maps a cloud to
// per-point features and a 512-d global feature. The mask decoder projects
// the global feature onto the bottleneck grid, decodes with upsampling +
// convolution stages and combines encoder features per stage (voxel-wise
// product for the joint model, concatenation for the U-Net baselines).
//
// 2D variants stack depth slices as channels and use 2D kernels; the
// single-slice baseline sees only the middle depth slice.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "pcunet/types.hpp"

namespace pcunet::model {

enum class Variant {
    PcUnet3d,
    PcUnet2d,
    PcUnetNoSkip,
    PcMaskDecoder,
    PointOutNetSingleSlice,
    PointOutNetVol2d,
    PointOutNetVol3d,
    UnetVol2d,
    UnetVol3d,
};

enum class SkipMode { Multiply, None, Concat };
enum class PointNetInput { Predicted, GroundTruth };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view name);
std::string_view to_string(SkipMode m);
SkipMode parse_skip_mode(std::string_view name);
std::string_view display_name(Variant v);
const std::vector<Variant>& all_variants();

/// Static properties of a variant.
struct VariantTraits {
    bool cloud_head = false;   // predicts a point cloud
    bool mask_head = false;    // predicts a mask
    bool image_encoder = true;
    bool point_net = false;
    int conv_dims = 3;
    bool single_slice = false;
    bool gt_cloud_input = false;  // point net reads the ground-truth cloud
    SkipMode default_skip = SkipMode::None;
};
VariantTraits traits(Variant v);

struct ModelConfig {
    Variant variant = Variant::PcUnet3d;
    Index3 input_shape{64, 64, 32};  // (Dx, Dy, Dz)
    std::int64_t n_points = 1024;
    std::vector<std::int64_t> encoder_channels{16, 32, 64, 128};
    std::array<std::int64_t, 3> pointnet_channels{32, 128, 512};
    std::int64_t fc_channels = 512;        // width of the two fully connected layers
    std::int64_t point_grid_channels = 8;  // global feature projected per bottleneck voxel
    SkipMode skip_mode = SkipMode::Multiply;
    bool skip_unit_offset = false;  // (1 + s) * d instead of s * d
    PointNetInput point_net_input = PointNetInput::Predicted;
    double cloud_scale_mm = 10.0;   // network coordinate unit
    std::uint64_t seed = 0;

    /// Default configuration for a variant (skip mode from the variant).
    static ModelConfig for_variant(Variant v, Index3 input_shape = {64, 64, 32},
                                   std::int64_t n_points = 1024);
    /// Full-scale channel schedule: (128,128,64) input, 4096 points.
    static ModelConfig full_scale(Variant v);

    /// Throws ConfigError on violated invariants.
    void validate() const;
    /// Downsampling factor between the input and the bottleneck.
    [[nodiscard]] std::int64_t bottleneck_factor() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// Convolution over 2 or 3 spatial dims with fan-in scaled uniform init.
class ConvImpl : public torch::nn::Module {
public:
    ConvImpl(int dims, std::int64_t in, std::int64_t out, std::int64_t kernel, std::int64_t stride);
    torch::Tensor forward(const torch::Tensor& x);

private:
    int dims_;
    std::int64_t stride_;
    std::int64_t padding_;
    torch::Tensor weight_;
    torch::Tensor bias_;
};
TORCH_MODULE(Conv);

struct EncoderOutput {
    torch::Tensor cloud;                 // (B, N, 3) or undefined
    std::vector<torch::Tensor> pyramid;  // pre-activation, shallow to deep
};

struct PointNetOutput {
    torch::Tensor point_features;  // (B, N, C_last)
    torch::Tensor global_feature;  // (B, fc_channels)
};

/// Heads produced by a forward pass; absent heads are empty.
struct ForwardOutput {
    std::optional<torch::Tensor> cloud;  // (B, N, 3) mm, centred
    std::optional<torch::Tensor> mask;   // (B, 1, Dz, Dy, Dx) in [0, 1]
    std::optional<torch::Tensor> global_feature;

    /// Throws ConfigError("head not present in variant") when absent.
    [[nodiscard]] const torch::Tensor& require_cloud() const;
    [[nodiscard]] const torch::Tensor& require_mask() const;
};

class PcuNetImpl : public torch::nn::Module {
public:
    explicit PcuNetImpl(ModelConfig config);

    [[nodiscard]] const ModelConfig& config() const noexcept { return config_; }

    /// volume: (B, 1, Dz, Dy, Dx).
    EncoderOutput image_encoder_forward(const torch::Tensor& volume);
    /// cloud: (B, N, 3) mm.
    PointNetOutput point_net_forward(const torch::Tensor& cloud);
    /// Either argument may be empty/undefined when the variant does not use
    /// it; a missing bottleneck is zero-filled.
    torch::Tensor mask_decoder_forward(const torch::Tensor& global_feature,
                                       const std::vector<torch::Tensor>& pyramid);

    /// `gt_cloud` feeds the point net for the ground-truth-input ablation
    /// (and for teacher forcing when configured).
    ForwardOutput forward(const torch::Tensor& volume,
                          const std::optional<torch::Tensor>& gt_cloud = std::nullopt);

    [[nodiscard]] std::int64_t parameter_count() const;

private:
    torch::Tensor to_encoder_layout(const torch::Tensor& volume) const;
    torch::Tensor from_decoder_layout(const torch::Tensor& out) const;
    std::vector<std::int64_t> bottleneck_spatial() const;
    void check_volume(const torch::Tensor& volume) const;

    ModelConfig config_;
    VariantTraits traits_;
    int dims_;

    // Image encoder.
    std::vector<Conv> enc_first_;   // per stage: first conv (strided except stage 0)
    std::vector<Conv> enc_second_;  // per stage: second conv
    torch::nn::Linear cloud_fc1_{nullptr};
    torch::nn::Linear cloud_fc2_{nullptr};

    // Point net.
    torch::nn::Linear mlp1_{nullptr};
    torch::nn::Linear mlp2_{nullptr};
    torch::nn::Linear mlp3_{nullptr};
    torch::nn::Linear pn_fc1_{nullptr};
    torch::nn::Linear pn_fc2_{nullptr};

    // Mask decoder.
    torch::nn::Linear point_proj_{nullptr};
    Conv dec_entry_{nullptr};
    std::vector<Conv> dec_up_;      // conv after each upsampling
    std::vector<Conv> dec_skip_;    // 1x1 projection of skip features (multiply)
    std::vector<Conv> dec_refine_;  // second conv per stage
    Conv dec_out_{nullptr};
};
TORCH_MODULE(PcuNet);

/// Builds a model from a validated config with weights drawn from config.seed.
PcuNet build_model(const ModelConfig& config);

std::int64_t count_parameters(const PcuNet& model);

/// Training progress stored alongside the weights.
struct TrainingState {
    std::int64_t step = 0;
    std::int64_t epoch = 0;
    int fold = -1;
    nlohmann::json history = nlohmann::json::array();
};

struct Checkpoint {
    ModelConfig config;
    TrainingState state;
    PcuNet model{nullptr};
};

/// Container: "PCUCKPT1\n", uint64 JSON length, JSON {config, state},
/// uint64 blob length, torch-serialized parameter archive.
void save_checkpoint(const PcuNet& model, const TrainingState& state, const std::filesystem::path& path);
/// Throws ConfigError when the stored variant is unknown, differs from
/// `expected_variant`, or the weights do not fit the stored config.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           std::optional<Variant> expected_variant = std::nullopt);

/// Single-threaded deterministic kernels.
void enable_deterministic_mode();

}  // namespace pcunet::model
