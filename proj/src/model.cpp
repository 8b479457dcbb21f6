#include "pcunet/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace pcunet::model {

namespace F = torch::nn::functional;

namespace {

struct VariantInfo {
    Variant variant;
    std::string_view name;
    std::string_view display;
};

constexpr VariantInfo kVariants[] = {
    {Variant::PcUnet3d, "pcunet_3d", "PC-Unet-3DConv"},
    {Variant::PcUnet2d, "pcunet_2d", "PC-Unet-2DConv"},
    {Variant::PcUnetNoSkip, "pcunet_no_skip", "PC-Unet-no-skip"},
    {Variant::PcMaskDecoder, "pc_mask_decoder", "PC-Mask-Decoder"},
    {Variant::PointOutNetSingleSlice, "pointoutnet_single_slice", "PointOutNet-single-slice"},
    {Variant::PointOutNetVol2d, "pointoutnet_vol2d", "PointOutNet-volume-2DConv"},
    {Variant::PointOutNetVol3d, "pointoutnet_vol3d", "PointOutNet-volume-3DConv"},
    {Variant::UnetVol2d, "unet_vol2d", "UNet-volume-2DConv"},
    {Variant::UnetVol3d, "unet_vol3d", "UNet-volume-3DConv"},
};

const VariantInfo& info(Variant v) {
    for (const auto& i : kVariants) {
        if (i.variant == v) return i;
    }
    throw ConfigError("unknown variant enum value");
}

bool is_unet(Variant v) { return v == Variant::UnetVol2d || v == Variant::UnetVol3d; }

// He-uniform weights for layers feeding a ReLU, zero bias.
void he_init(torch::nn::Linear& layer) {
    torch::NoGradGuard no_grad;
    const double bound = std::sqrt(6.0 / static_cast<double>(layer->weight.size(1)));
    layer->weight.uniform_(-bound, bound);
    layer->bias.zero_();
}

}  // namespace

std::string_view to_string(Variant v) { return info(v).name; }
std::string_view display_name(Variant v) { return info(v).display; }

Variant parse_variant(std::string_view name) {
    for (const auto& i : kVariants) {
        if (i.name == name) return i.variant;
    }
    throw ConfigError("unknown model variant '" + std::string(name) + "'");
}

const std::vector<Variant>& all_variants() {
    static const std::vector<Variant> all = [] {
        std::vector<Variant> v;
        for (const auto& i : kVariants) v.push_back(i.variant);
        return v;
    }();
    return all;
}

std::string_view to_string(SkipMode m) {
    switch (m) {
        case SkipMode::Multiply: return "multiply";
        case SkipMode::None: return "none";
        case SkipMode::Concat: return "concat";
    }
    return "none";
}

SkipMode parse_skip_mode(std::string_view name) {
    if (name == "multiply") return SkipMode::Multiply;
    if (name == "none") return SkipMode::None;
    if (name == "concat") return SkipMode::Concat;
    throw ConfigError("unknown skip mode '" + std::string(name) + "'");
}

VariantTraits traits(Variant v) {
    VariantTraits t;
    switch (v) {
        case Variant::PcUnet3d:
            t = {true, true, true, true, 3, false, false, SkipMode::Multiply};
            break;
        case Variant::PcUnet2d:
            t = {true, true, true, true, 2, false, false, SkipMode::Multiply};
            break;
        case Variant::PcUnetNoSkip:
            t = {true, true, true, true, 3, false, false, SkipMode::None};
            break;
        case Variant::PcMaskDecoder:
            t = {false, true, false, true, 3, false, true, SkipMode::None};
            break;
        case Variant::PointOutNetSingleSlice:
            t = {true, false, true, false, 2, true, false, SkipMode::None};
            break;
        case Variant::PointOutNetVol2d:
            t = {true, false, true, false, 2, false, false, SkipMode::None};
            break;
        case Variant::PointOutNetVol3d:
            t = {true, false, true, false, 3, false, false, SkipMode::None};
            break;
        case Variant::UnetVol2d:
            t = {false, true, true, false, 2, false, false, SkipMode::Concat};
            break;
        case Variant::UnetVol3d:
            t = {false, true, true, false, 3, false, false, SkipMode::Concat};
            break;
    }
    return t;
}

ModelConfig ModelConfig::for_variant(Variant v, Index3 input_shape, std::int64_t n_points) {
    ModelConfig c;
    c.variant = v;
    c.input_shape = input_shape;
    c.n_points = n_points;
    c.skip_mode = traits(v).default_skip;
    c.point_net_input = traits(v).gt_cloud_input ? PointNetInput::GroundTruth : PointNetInput::Predicted;
    return c;
}

ModelConfig ModelConfig::full_scale(Variant v) {
    auto c = for_variant(v, {128, 128, 64}, 4096);
    c.encoder_channels = {32, 64, 128, 256};
    return c;
}

std::int64_t ModelConfig::bottleneck_factor() const {
    return std::int64_t{1} << (encoder_channels.size() - 1);
}

void ModelConfig::validate() const {
    const auto t = traits(variant);
    if (n_points < 1) throw ConfigError("n_points must be >= 1");
    if (encoder_channels.empty()) throw ConfigError("encoder_channels must be nonempty");
    for (std::size_t i = 0; i < encoder_channels.size(); ++i) {
        if (encoder_channels[i] < 1) throw ConfigError("encoder_channels must be positive");
        if (i > 0 && encoder_channels[i] <= encoder_channels[i - 1]) {
            throw ConfigError("encoder_channels must be strictly increasing");
        }
    }
    for (auto c : pointnet_channels) {
        if (c < 1) throw ConfigError("pointnet_channels must be positive");
    }
    if (fc_channels < 1 || point_grid_channels < 1) throw ConfigError("fc/point-grid channels must be positive");
    if (!(cloud_scale_mm > 0.0)) throw ConfigError("cloud_scale_mm must be > 0");
    for (auto d : input_shape) {
        if (d < 1) throw ConfigError("input_shape components must be >= 1");
    }
    const auto f = bottleneck_factor();
    const int spatial_axes = t.conv_dims == 3 ? 3 : 2;  // 2D variants downsample x and y only
    for (int a = 0; a < spatial_axes; ++a) {
        if (input_shape[a] % f != 0) {
            throw ConfigError("input_shape axis " + std::to_string(a) + " (" + std::to_string(input_shape[a]) +
                              ") must be divisible by " + std::to_string(f));
        }
    }
    if (skip_mode == SkipMode::Multiply && !(variant == Variant::PcUnet3d || variant == Variant::PcUnet2d)) {
        throw ConfigError("skip_mode=multiply is only valid for pcunet variants with skips");
    }
    if (skip_mode == SkipMode::Concat && !is_unet(variant)) {
        throw ConfigError("skip_mode=concat is only valid for unet variants");
    }
    if (!t.mask_head && skip_mode != SkipMode::None) {
        throw ConfigError("variant without a mask decoder must use skip_mode=none");
    }
    if (variant == Variant::PcMaskDecoder && point_net_input != PointNetInput::GroundTruth) {
        throw ConfigError("pc_mask_decoder reads the ground-truth cloud");
    }
    if (point_net_input == PointNetInput::GroundTruth && !t.point_net) {
        throw ConfigError("point_net_input only applies to variants with a point net");
    }
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{
        {"variant", std::string(to_string(c.variant))},
        {"input_shape", {c.input_shape[0], c.input_shape[1], c.input_shape[2]}},
        {"n_points", c.n_points},
        {"encoder_channels", c.encoder_channels},
        {"pointnet_channels", {c.pointnet_channels[0], c.pointnet_channels[1], c.pointnet_channels[2]}},
        {"fc_channels", c.fc_channels},
        {"point_grid_channels", c.point_grid_channels},
        {"skip_mode", std::string(to_string(c.skip_mode))},
        {"skip_unit_offset", c.skip_unit_offset},
        {"point_net_input", c.point_net_input == PointNetInput::Predicted ? "predicted" : "ground_truth"},
        {"cloud_scale_mm", c.cloud_scale_mm},
        {"seed", c.seed},
    };
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    try {
        const auto v = parse_variant(j.at("variant").get<std::string>());
        c = ModelConfig::for_variant(v);
        if (j.contains("input_shape")) {
            const auto s = j.at("input_shape").get<std::vector<std::int64_t>>();
            if (s.size() != 3) throw ConfigError("input_shape needs 3 components");
            c.input_shape = {s[0], s[1], s[2]};
        }
        c.n_points = j.value("n_points", c.n_points);
        if (j.contains("encoder_channels")) c.encoder_channels = j.at("encoder_channels").get<std::vector<std::int64_t>>();
        if (j.contains("pointnet_channels")) {
            const auto p = j.at("pointnet_channels").get<std::vector<std::int64_t>>();
            if (p.size() != 3) throw ConfigError("pointnet_channels needs 3 components");
            c.pointnet_channels = {p[0], p[1], p[2]};
        }
        c.fc_channels = j.value("fc_channels", c.fc_channels);
        c.point_grid_channels = j.value("point_grid_channels", c.point_grid_channels);
        if (j.contains("skip_mode")) c.skip_mode = parse_skip_mode(j.at("skip_mode").get<std::string>());
        c.skip_unit_offset = j.value("skip_unit_offset", c.skip_unit_offset);
        if (j.contains("point_net_input")) {
            const auto s = j.at("point_net_input").get<std::string>();
            if (s == "predicted") {
                c.point_net_input = PointNetInput::Predicted;
            } else if (s == "ground_truth") {
                c.point_net_input = PointNetInput::GroundTruth;
            } else {
                throw ConfigError("point_net_input must be 'predicted' or 'ground_truth'");
            }
        }
        c.cloud_scale_mm = j.value("cloud_scale_mm", c.cloud_scale_mm);
        c.seed = j.value("seed", c.seed);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("model config: ") + e.what());
    }
}

ConvImpl::ConvImpl(int dims, std::int64_t in, std::int64_t out, std::int64_t kernel, std::int64_t stride)
    : dims_(dims), stride_(stride), padding_(kernel / 2) {
    std::vector<std::int64_t> shape{out, in};
    for (int d = 0; d < dims; ++d) shape.push_back(kernel);
    const auto fan_in = static_cast<double>(in * static_cast<std::int64_t>(std::pow(kernel, dims)));
    const double bound = std::sqrt(6.0 / fan_in);
    weight_ = register_parameter("weight", torch::empty(shape).uniform_(-bound, bound));
    bias_ = register_parameter("bias", torch::zeros({out}));
}

torch::Tensor ConvImpl::forward(const torch::Tensor& x) {
    if (dims_ == 3) return torch::conv3d(x, weight_, bias_, stride_, padding_);
    return torch::conv2d(x, weight_, bias_, stride_, padding_);
}

const torch::Tensor& ForwardOutput::require_cloud() const {
    if (!cloud) throw ConfigError("head not present in variant: point cloud");
    return *cloud;
}

const torch::Tensor& ForwardOutput::require_mask() const {
    if (!mask) throw ConfigError("head not present in variant: mask");
    return *mask;
}

PcuNetImpl::PcuNetImpl(ModelConfig config) : config_(std::move(config)) {
    config_.validate();
    traits_ = traits(config_.variant);
    dims_ = traits_.conv_dims;
    torch::manual_seed(config_.seed);

    const auto& ch = config_.encoder_channels;
    const auto stages = ch.size();
    const auto depth = config_.input_shape[2];
    const std::int64_t in_channels = (dims_ == 3 || traits_.single_slice) ? 1 : depth;
    const std::int64_t out_channels = dims_ == 3 ? 1 : depth;
    const std::int64_t global_width = config_.fc_channels;

    if (traits_.image_encoder) {
        for (std::size_t s = 0; s < stages; ++s) {
            const auto cin = s == 0 ? in_channels : ch[s - 1];
            enc_first_.push_back(register_module("enc" + std::to_string(s) + "_a",
                                                 Conv(dims_, cin, ch[s], 3, s == 0 ? 1 : 2)));
            enc_second_.push_back(register_module("enc" + std::to_string(s) + "_b", Conv(dims_, ch[s], ch[s], 3, 1)));
        }
    }
    if (traits_.cloud_head) {
        cloud_fc1_ = register_module("cloud_fc1", torch::nn::Linear(ch.back(), config_.fc_channels));
        cloud_fc2_ = register_module("cloud_fc2", torch::nn::Linear(config_.fc_channels, 3 * config_.n_points));
        he_init(cloud_fc1_);
    }
    if (traits_.point_net) {
        const auto& pc = config_.pointnet_channels;
        mlp1_ = register_module("pn_mlp1", torch::nn::Linear(3, pc[0]));
        mlp2_ = register_module("pn_mlp2", torch::nn::Linear(pc[0], pc[1]));
        mlp3_ = register_module("pn_mlp3", torch::nn::Linear(pc[1], pc[2]));
        pn_fc1_ = register_module("pn_fc1", torch::nn::Linear(pc[2], config_.fc_channels));
        pn_fc2_ = register_module("pn_fc2", torch::nn::Linear(config_.fc_channels, global_width));
        he_init(mlp1_);
        he_init(mlp2_);
        he_init(mlp3_);
        he_init(pn_fc1_);
    }
    if (traits_.mask_head) {
        std::int64_t voxels = 1;
        for (auto d : bottleneck_spatial()) voxels *= d;
        std::int64_t entry_in = ch.back();
        if (traits_.point_net) {
            point_proj_ = register_module("point_proj",
                                          torch::nn::Linear(global_width, config_.point_grid_channels * voxels));
            entry_in += config_.point_grid_channels;
        }
        dec_entry_ = register_module("dec_entry", Conv(dims_, entry_in, ch.back(), 3, 1));
        dec_up_.resize(stages - 1, nullptr);
        dec_skip_.resize(stages - 1, nullptr);
        dec_refine_.resize(stages - 1, nullptr);
        for (std::size_t s = stages - 1; s-- > 0;) {
            const auto tag = std::to_string(s);
            const auto up_in = ch[s + 1] + (config_.skip_mode == SkipMode::Concat ? ch[s] : 0);
            dec_up_[s] = register_module("dec" + tag + "_up", Conv(dims_, up_in, ch[s], 3, 1));
            if (config_.skip_mode == SkipMode::Multiply) {
                dec_skip_[s] = register_module("dec" + tag + "_skip", Conv(dims_, ch[s], ch[s], 1, 1));
            }
            dec_refine_[s] = register_module("dec" + tag + "_refine", Conv(dims_, ch[s], ch[s], 3, 1));
        }
        dec_out_ = register_module("dec_out", Conv(dims_, ch.front(), out_channels, 1, 1));
    }
}

std::vector<std::int64_t> PcuNetImpl::bottleneck_spatial() const {
    const auto f = config_.bottleneck_factor();
    const auto& s = config_.input_shape;
    if (dims_ == 3) return {s[2] / f, s[1] / f, s[0] / f};
    return {s[1] / f, s[0] / f};
}

void PcuNetImpl::check_volume(const torch::Tensor& volume) const {
    const auto& s = config_.input_shape;
    if (volume.dim() != 5 || volume.size(1) != 1 || volume.size(2) != s[2] || volume.size(3) != s[1] ||
        volume.size(4) != s[0]) {
        std::ostringstream msg;
        msg << "volume shape " << volume.sizes() << " does not match config (B, 1, " << s[2] << ", " << s[1]
            << ", " << s[0] << ")";
        throw ConfigError(msg.str());
    }
}

torch::Tensor PcuNetImpl::to_encoder_layout(const torch::Tensor& volume) const {
    if (dims_ == 3) return volume;
    if (traits_.single_slice) return volume.select(2, config_.input_shape[2] / 2);
    return volume.squeeze(1);
}

torch::Tensor PcuNetImpl::from_decoder_layout(const torch::Tensor& out) const {
    return dims_ == 3 ? out : out.unsqueeze(1);
}

EncoderOutput PcuNetImpl::image_encoder_forward(const torch::Tensor& volume) {
    if (!traits_.image_encoder) throw ConfigError("variant has no image encoder");
    check_volume(volume);
    EncoderOutput out;
    auto h = to_encoder_layout(volume);
    for (std::size_t s = 0; s < enc_first_.size(); ++s) {
        h = torch::relu(enc_first_[s]->forward(h));
        auto pre = enc_second_[s]->forward(h);
        out.pyramid.push_back(pre);
        h = torch::relu(pre);
    }
    if (traits_.cloud_head) {
        std::vector<std::int64_t> spatial;
        for (int d = 2; d < h.dim(); ++d) spatial.push_back(d);
        auto pooled = h.mean(spatial);
        auto hidden = torch::relu(cloud_fc1_->forward(pooled));
        out.cloud = cloud_fc2_->forward(hidden).view({h.size(0), config_.n_points, 3}) * config_.cloud_scale_mm;
    }
    return out;
}

PointNetOutput PcuNetImpl::point_net_forward(const torch::Tensor& cloud) {
    if (!traits_.point_net) throw ConfigError("variant has no point net");
    if (cloud.dim() != 3 || cloud.size(2) != 3) throw ConfigError("point net input must be (B, N, 3)");
    PointNetOutput out;
    auto x = cloud / config_.cloud_scale_mm;
    x = torch::relu(mlp1_->forward(x));
    x = torch::relu(mlp2_->forward(x));
    out.point_features = torch::relu(mlp3_->forward(x));
    auto pooled = std::get<0>(out.point_features.max(1));
    out.global_feature = pn_fc2_->forward(torch::relu(pn_fc1_->forward(pooled)));
    return out;
}

torch::Tensor PcuNetImpl::mask_decoder_forward(const torch::Tensor& global_feature,
                                               const std::vector<torch::Tensor>& pyramid) {
    if (!traits_.mask_head) throw ConfigError("variant has no mask decoder");
    const auto stages = config_.encoder_channels.size();
    const bool uses_pyramid = traits_.image_encoder;
    if (uses_pyramid && pyramid.size() != stages) {
        throw ConfigError("feature pyramid has " + std::to_string(pyramid.size()) + " stages, expected " +
                          std::to_string(stages));
    }
    if (traits_.point_net && !global_feature.defined()) throw ConfigError("global point feature required");

    const auto spatial = bottleneck_spatial();
    torch::Tensor bottleneck;
    std::int64_t batch = 0;
    if (uses_pyramid) {
        bottleneck = torch::relu(pyramid.back());
        batch = bottleneck.size(0);
    } else {
        batch = global_feature.size(0);
        std::vector<std::int64_t> shape{batch, config_.encoder_channels.back()};
        shape.insert(shape.end(), spatial.begin(), spatial.end());
        bottleneck = torch::zeros(shape, global_feature.options());
    }
    auto entry = bottleneck;
    if (traits_.point_net) {
        std::vector<std::int64_t> shape{batch, config_.point_grid_channels};
        shape.insert(shape.end(), spatial.begin(), spatial.end());
        auto grid = point_proj_->forward(global_feature).view(shape);
        entry = torch::cat({bottleneck, grid}, 1);
    }
    auto h = torch::relu(dec_entry_->forward(entry));
    for (std::size_t s = stages - 1; s-- > 0;) {
        std::vector<std::int64_t> target;
        if (uses_pyramid) {
            const auto sizes = pyramid[s].sizes();
            target.assign(sizes.begin() + 2, sizes.end());
        } else {
            for (int d = 2; d < h.dim(); ++d) target.push_back(h.size(d) * 2);
        }
        auto u = F::interpolate(h, F::InterpolateFuncOptions().size(target).mode(torch::kNearest));
        torch::Tensor d;
        if (config_.skip_mode == SkipMode::Concat) {
            d = dec_up_[s]->forward(torch::cat({u, torch::relu(pyramid[s])}, 1));
        } else {
            d = dec_up_[s]->forward(u);
        }
        if (config_.skip_mode == SkipMode::Multiply) {
            auto gate = dec_skip_[s]->forward(pyramid[s]);
            d = config_.skip_unit_offset ? (1.0 + gate) * d : gate * d;
        }
        h = torch::relu(dec_refine_[s]->forward(torch::relu(d)));
    }
    return from_decoder_layout(torch::sigmoid(dec_out_->forward(h)));
}

ForwardOutput PcuNetImpl::forward(const torch::Tensor& volume, const std::optional<torch::Tensor>& gt_cloud) {
    ForwardOutput out;
    EncoderOutput enc;
    if (traits_.image_encoder) {
        enc = image_encoder_forward(volume);
        if (traits_.cloud_head) out.cloud = enc.cloud;
    } else {
        check_volume(volume);
    }
    if (!traits_.mask_head) return out;

    torch::Tensor global;
    if (traits_.point_net) {
        torch::Tensor cloud_in;
        if (config_.point_net_input == PointNetInput::GroundTruth && gt_cloud) {
            cloud_in = *gt_cloud;
        } else if (config_.point_net_input == PointNetInput::GroundTruth && !traits_.cloud_head) {
            throw ConfigError("variant " + std::string(to_string(config_.variant)) +
                              " needs the ground-truth cloud as input");
        } else {
            cloud_in = enc.cloud;
        }
        global = point_net_forward(cloud_in).global_feature;
        out.global_feature = global;
    }
    out.mask = mask_decoder_forward(global, enc.pyramid);
    return out;
}

std::int64_t PcuNetImpl::parameter_count() const {
    std::int64_t n = 0;
    for (const auto& p : parameters()) n += p.numel();
    return n;
}

PcuNet build_model(const ModelConfig& config) { return PcuNet(config); }

std::int64_t count_parameters(const PcuNet& model) { return model->parameter_count(); }

namespace {

constexpr char kCheckpointMagic[] = "PCUCKPT1\n";
constexpr std::size_t kMagicSize = sizeof(kCheckpointMagic) - 1;

void write_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }

std::uint64_t read_u64(std::istream& in) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    if (!in) throw ParseError("checkpoint truncated");
    return v;
}

}  // namespace

void save_checkpoint(const PcuNet& model, const TrainingState& state, const std::filesystem::path& path) {
    nlohmann::json meta;
    meta["config"] = model->config();
    meta["state"] = {{"step", state.step}, {"epoch", state.epoch}, {"fold", state.fold}, {"history", state.history}};
    const auto meta_str = meta.dump();

    torch::serialize::OutputArchive archive;
    model->save(archive);
    std::ostringstream blob;
    archive.save_to(blob);
    const auto blob_str = blob.str();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open for writing: " + path.string());
    out.write(kCheckpointMagic, kMagicSize);
    write_u64(out, meta_str.size());
    out.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));
    write_u64(out, blob_str.size());
    out.write(blob_str.data(), static_cast<std::streamsize>(blob_str.size()));
    if (!out) throw Error("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path, std::optional<Variant> expected_variant) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open checkpoint " + path.string());
    char magic[kMagicSize];
    in.read(magic, kMagicSize);
    if (!in || std::memcmp(magic, kCheckpointMagic, kMagicSize) != 0) {
        throw ParseError(path.string() + " is not a checkpoint file");
    }
    std::string meta_str(read_u64(in), '\0');
    in.read(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));
    std::string blob(read_u64(in), '\0');
    in.read(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!in) throw ParseError("checkpoint truncated");

    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(meta_str);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint metadata: ") + e.what());
    }
    Checkpoint ckpt;
    ckpt.config = meta.at("config").get<ModelConfig>();
    if (expected_variant && *expected_variant != ckpt.config.variant) {
        throw ConfigError("checkpoint holds variant '" + std::string(to_string(ckpt.config.variant)) +
                          "', expected '" + std::string(to_string(*expected_variant)) + "'");
    }
    const auto& st = meta.at("state");
    ckpt.state.step = st.value("step", std::int64_t{0});
    ckpt.state.epoch = st.value("epoch", std::int64_t{0});
    ckpt.state.fold = st.value("fold", -1);
    ckpt.state.history = st.value("history", nlohmann::json::array());

    ckpt.model = build_model(ckpt.config);
    try {
        torch::serialize::InputArchive archive;
        std::istringstream blob_in(blob);
        archive.load_from(blob_in);
        ckpt.model->load(archive);
    } catch (const c10::Error& e) {
        throw ConfigError("checkpoint weights do not match its config: " + std::string(e.what_without_backtrace()));
    }
    return ckpt;
}

void enable_deterministic_mode() {
    torch::set_num_threads(1);
    at::globalContext().setDeterministicAlgorithms(true, false);
}

}  // namespace pcunet::model
