#include "pcunet/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "pcunet/kdtree.hpp"
#include "pcunet/mask_ops.hpp"

namespace pcunet::metrics {

namespace {

constexpr const char* kAbsent = "—";

void require_same_grid(const MaskVolume& a, const MaskVolume& b) {
    if (a.shape() != b.shape()) throw InvariantError("masks differ in shape");
}

double directed_hausdorff(const std::vector<Vec3>& from, const std::vector<Vec3>& to,
                          losses::NeighborSearch search) {
    double worst = 0.0;
    if (search == losses::NeighborSearch::KdTree) {
        const KdTree tree(to);
        for (const auto& p : from) worst = std::max(worst, tree.nearest(p).squared_distance);
    } else {
        for (const auto& p : from) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& q : to) best = std::min(best, squared_distance(p, q));
            worst = std::max(worst, best);
        }
    }
    return worst;
}

}  // namespace

double chamfer_distance(const PointCloud& a, const PointCloud& b, losses::NeighborSearch search) {
    if (a.empty() || b.empty()) throw InvariantError("chamfer distance needs nonempty clouds");
    return losses::chamfer_terms(a.points(), b.points(), search).value;
}

double dice_coefficient(const MaskVolume& pred, const MaskVolume& gt) {
    require_same_grid(pred, gt);
    std::size_t inter = 0;
    std::size_t total = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        inter += static_cast<std::size_t>(pred[i] & gt[i]);
        total += static_cast<std::size_t>(pred[i]) + gt[i];
    }
    if (total == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(total);
}

std::vector<Vec3> boundary_points(const MaskVolume& mask) {
    const auto voxels = boundary_voxels(mask);
    std::vector<Vec3> out;
    out.reserve(voxels.size());
    for (const auto& v : voxels) out.push_back(voxel_to_world(v, mask.geometry()));
    return out;
}

double hausdorff_distance(const MaskVolume& pred, const MaskVolume& gt, losses::NeighborSearch search) {
    require_same_grid(pred, gt);
    if (pred.foreground_count() == 0 || gt.foreground_count() == 0) {
        throw InvariantError("Hausdorff distance needs nonempty masks");
    }
    const auto a = boundary_points(pred);
    const auto b = boundary_points(gt);
    const double d2 = std::max(directed_hausdorff(a, b, search), directed_hausdorff(b, a, search));
    return std::sqrt(d2);
}

MaskVolume binarize(const VoxelVolume& probs, double threshold) {
    std::vector<std::uint8_t> out(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) out[i] = static_cast<double>(probs[i]) >= threshold ? 1 : 0;
    return MaskVolume(probs.geometry(), std::move(out));
}

MaskVolume binarize(const torch::Tensor& probs, const GridGeometry& geometry, double threshold) {
    auto p = probs.detach().to(torch::kFloat64).contiguous();
    if (p.dim() == 4 && p.size(0) == 1) p = p.squeeze(0);
    if (p.dim() != 3 || p.size(0) != geometry.shape[2] || p.size(1) != geometry.shape[1] ||
        p.size(2) != geometry.shape[0]) {
        throw ConfigError("probability tensor does not match the grid shape");
    }
    const double* d = p.data_ptr<double>();
    std::vector<std::uint8_t> out(geometry.voxel_count());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = d[i] >= threshold ? 1 : 0;
    return MaskVolume(geometry, std::move(out));
}

std::optional<Summary> summarize(const std::vector<std::optional<double>>& values) {
    Summary s;
    double sum = 0.0;
    for (const auto& v : values) {
        if (!v) continue;
        sum += *v;
        ++s.count;
    }
    if (s.count == 0) return std::nullopt;
    s.mean = sum / static_cast<double>(s.count);
    if (s.count > 1) {
        double ss = 0.0;
        for (const auto& v : values) {
            if (v) ss += (*v - s.mean) * (*v - s.mean);
        }
        s.sd = std::sqrt(ss / static_cast<double>(s.count - 1));
    }
    return s;
}

std::string format_value(const std::optional<double>& v, int precision) {
    if (!v) return kAbsent;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", precision, *v);
    return buf;
}

std::string format_summary(const std::optional<Summary>& s, int precision) {
    if (!s) return kAbsent;
    return format_value(s->mean, precision) + "±" + format_value(s->sd, precision);
}

std::string metrics_csv(const std::vector<SampleMetrics>& rows) {
    std::ostringstream out;
    out << "variant,fold,sample,cd,dice,hd\n";
    for (const auto& r : rows) {
        out << r.variant << ',' << r.fold << ',' << r.sample_id << ',' << format_value(r.cd) << ','
            << format_value(r.dice) << ',' << (r.hd_failed ? std::string("failed") : format_value(r.hd)) << '\n';
    }
    return out.str();
}

void write_metrics_csv(const std::vector<SampleMetrics>& rows, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open for writing: " + path.string());
    out << metrics_csv(rows);
}

nlohmann::json to_json(const std::optional<Summary>& s) {
    if (!s) return nullptr;
    return {{"mean", s->mean}, {"sd", s->sd}, {"count", s->count}};
}

}  // namespace pcunet::metrics
