// Property-level acceptance: loss oracles, gradient checks, architecture
// contracts, geometry pipeline and metric oracles.

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "acceptance/report.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"
#include "pcunet/losses.hpp"
#include "pcunet/mask_ops.hpp"
#include "pcunet/metrics.hpp"
#include "pcunet/model.hpp"
#include "pcunet/shape_pipeline.hpp"

using namespace pcunet;
using acceptance::fmt;

namespace {

GridGeometry unit_grid(Index3 shape) {
    GridGeometry g;
    g.shape = shape;
    g.spacing = {1, 1, 1};
    return g;
}

MaskVolume voxels(const GridGeometry& g, const std::vector<Index3>& on) {
    std::vector<std::uint8_t> d(g.voxel_count(), 0);
    for (const auto& v : on) d[g.offset(v[0], v[1], v[2])] = 1;
    return MaskVolume(g, std::move(d));
}

double rel(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

double chamfer_value(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
    return losses::chamfer_loss(losses::to_tensor(a, torch::kFloat64), losses::to_tensor(b, torch::kFloat64))
        .item<double>();
}

void loss_correctness(acceptance::Report& report) {
    acceptance::Stopwatch clock;
    std::mt19937_64 rng(2024);
    double worst = 0.0;
    for (int pair = 0; pair < 100; ++pair) {
        const auto a = oracle::random_cloud(rng, 1 + rng() % 256);
        const auto b = oracle::random_cloud(rng, 1 + rng() % 256);
        const double brute = oracle::chamfer(a, b);
        worst = std::max(worst, rel(losses::chamfer_terms(a, b, losses::NeighborSearch::KdTree).value, brute));
        worst = std::max(worst, rel(chamfer_value(a, b), brute));
    }
    const bool hand_10 = chamfer_value({{0, 0, 0}}, {{3, 4, 0}}) == 10.0;
    const bool hand_half = chamfer_value({{0, 0, 0}, {1, 0, 0}}, {{0, 0, 0}}) == 0.5;
    const double t = clock.seconds();
    report.line(1, "chamfer-oracle", worst <= 1e-9 && hand_10 && hand_half && t < 10.0,
                "max_rel=" + fmt("%.3g", worst) + " (tol 1e-9) over 100 pairs; hand 10.0=" +
                    (hand_10 ? "ok" : "bad") + " 0.5=" + (hand_half ? "ok" : "bad") + "; " + fmt("%.2f", t) +
                    "s (limit 10s)");
}

void gradient_checks(acceptance::Report& report) {
    acceptance::Stopwatch clock;
    std::mt19937_64 rng(77);
    double worst_chamfer = 0.0;
    int checked = 0;
    int skipped = 0;
    while (checked < 20) {
        const auto r = gradcheck::check_chamfer(rng, 32);
        if (r.skipped) {
            ++skipped;
            continue;
        }
        worst_chamfer = std::max(worst_chamfer, r.error);
        ++checked;
    }
    double worst_dice = 0.0;
    for (int i = 0; i < 20; ++i) worst_dice = std::max(worst_dice, gradcheck::check_soft_dice(rng, 8).error);
    const double t = clock.seconds();
    report.line(2, "gradient-checks", worst_chamfer < 1e-4 && worst_dice < 1e-4 && t < 30.0,
                "chamfer max_rel=" + fmt("%.3g", worst_chamfer) + " (20 instances, " + std::to_string(skipped) +
                    " tie configs skipped), soft dice max_rel=" + fmt("%.3g", worst_dice) +
                    " (20 instances); tol 1e-4; " + fmt("%.2f", t) + "s (limit 30s)");
}

void architecture_contracts(acceptance::Report& report) {
    using namespace pcunet::model;
    enable_deterministic_mode();
    torch::NoGradGuard no_grad;
    std::string detail;
    bool ok = true;
    auto check_shapes = [&](const ModelConfig& c) -> torch::Tensor {
        auto net = build_model(c);
        net->eval();
        const auto s = c.input_shape;
        const auto out = net->forward(torch::zeros({1, 1, s[2], s[1], s[0]}));
        const bool cloud_ok = out.require_cloud().sizes() == torch::IntArrayRef({1, c.n_points, 3});
        const bool mask_ok = out.require_mask().sizes() == torch::IntArrayRef({1, 1, s[2], s[1], s[0]});
        ok = ok && cloud_ok && mask_ok;
        detail += "(" + std::to_string(s[0]) + "," + std::to_string(s[1]) + "," + std::to_string(s[2]) +
                  ")/N=" + std::to_string(c.n_points) + " shapes " + (cloud_ok && mask_ok ? "ok" : "bad") + "; ";
        return out.require_cloud();
    };
    check_shapes(ModelConfig::full_scale(Variant::PcUnet3d));
    check_shapes(ModelConfig::for_variant(Variant::PcUnet3d, {32, 32, 16}, 256));

    auto net = build_model(ModelConfig::for_variant(Variant::PcUnet3d, {32, 32, 16}, 256));
    auto gen = torch::make_generator<at::CPUGeneratorImpl>(11);
    const auto pts = torch::randn({1, 256, 3}, gen) * 20.0;
    const auto ref = net->point_net_forward(pts).global_feature;
    int identical = 0;
    for (int i = 0; i < 50; ++i) {
        const auto perm = torch::randperm(256, gen, torch::kLong);
        identical += torch::equal(net->point_net_forward(pts.index_select(1, perm)).global_feature, ref) ? 1 : 0;
    }
    ok = ok && identical == 50;
    detail += "permutations bit-identical " + std::to_string(identical) + "/50; ";

    auto no_skip = build_model(ModelConfig::for_variant(Variant::PcUnetNoSkip, {32, 32, 16}, 256));
    const auto vol = torch::rand({1, 1, 16, 32, 32}, gen) * 2.0 - 1.0;
    const auto enc = no_skip->image_encoder_forward(vol);
    const auto global = no_skip->point_net_forward(enc.cloud).global_feature;
    auto zeroed = enc.pyramid;
    for (std::size_t i = 0; i + 1 < zeroed.size(); ++i) zeroed[i] = torch::zeros_like(zeroed[i]);
    const bool unchanged =
        torch::equal(no_skip->mask_decoder_forward(global, enc.pyramid), no_skip->mask_decoder_forward(global, zeroed));
    ok = ok && unchanged;
    detail += std::string("no_skip output with zeroed skips ") + (unchanged ? "unchanged" : "changed");
    report.line(3, "architecture-contracts", ok, detail);
}

void geometry_pipeline(acceptance::Report& report) {
    // Solid ball of radius 10 mm on a 1 mm grid.
    const auto g = unit_grid({31, 31, 31});
    const Vec3 c{15, 15, 15};
    std::vector<std::uint8_t> d(g.voxel_count(), 0);
    for (std::int64_t z = 0; z < 31; ++z)
        for (std::int64_t y = 0; y < 31; ++y)
            for (std::int64_t x = 0; x < 31; ++x)
                if (oracle::sq({double(x), double(y), double(z)}, c) <= 100.0) d[g.offset(x, y, z)] = 1;
    const MaskVolume ball(g, std::move(d));
    const auto mesh = shape::mask_to_mesh(ball);
    double rmin = 1e9, rmax = 0.0;
    for (const auto& v : mesh.vertices()) {
        const double r = std::sqrt(oracle::sq(v, c));
        rmin = std::min(rmin, r);
        rmax = std::max(rmax, r);
    }
    const bool ball_ok = !mesh.empty() && rmin >= 9.0 && rmax <= 11.0;

    // Downsampled clouds are verbatim subsets of the dense cloud.
    const auto dense = shape::mesh_to_dense_cloud(mesh);
    bool subset_ok = true;
    for (auto method : {shape::DownsampleMethod::FarthestPoint, shape::DownsampleMethod::Random}) {
        const auto idx = shape::downsample_indices(dense, 512, method, 3);
        const auto cloud = shape::downsample_cloud(dense, 512, method, 3);
        subset_ok = subset_ok && idx.size() == 512 && std::is_sorted(idx.begin(), idx.end());
        for (std::size_t i = 0; i < idx.size() && subset_ok; ++i) subset_ok = cloud[i] == dense[idx[i]];
    }

    std::mt19937_64 rng(5);
    int fps_match = 0;
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t m = 2 + rng() % 255;
        auto pts = oracle::random_cloud(rng, m);
        if (trial % 2 == 0) {
            for (auto& p : pts) p = {std::round(p[0] / 4), std::round(p[1] / 4), std::round(p[2] / 4)};
        }
        const std::size_t n = 1 + rng() % m;
        const std::size_t start = rng() % m;
        fps_match += shape::farthest_point_order(pts, n, start) == oracle::farthest_point(pts, n, start) ? 1 : 0;
    }

    double worst_centroid = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        auto pts = oracle::random_cloud(rng, 1 + rng() % 2000, 200.0);
        for (auto& p : pts) p = {p[0] + 1000.0, p[1] - 500.0, p[2] + 250.0};
        const auto [centred, centroid] = shape::center_cloud(PointCloud(pts));
        Vec3 mean{0, 0, 0};
        for (const auto& p : centred.points())
            for (int a = 0; a < 3; ++a) mean[a] += p[a];
        for (int a = 0; a < 3; ++a) worst_centroid = std::max(worst_centroid, std::abs(mean[a] / centred.size()));
    }
    report.line(4, "geometry-pipeline", ball_ok && subset_ok && fps_match == 40 && worst_centroid <= 1e-6,
                "ball vertex radius in [" + fmt("%.3f", rmin) + ", " + fmt("%.3f", rmax) + "] (need [9,11]); " +
                    "subset " + (subset_ok ? "verbatim" : "mismatch") + "; FPS oracle match " +
                    std::to_string(fps_match) + "/40; centroid max " + fmt("%.2g", worst_centroid) +
                    " mm (tol 1e-6)");
}

void metric_oracles(acceptance::Report& report) {
    std::mt19937_64 rng(31);
    int compared = 0;
    int matched = 0;
    while (compared < 30) {
        const auto a = oracle::random_blob_mask(rng, 14);
        const auto b = oracle::random_blob_mask(rng, 14);
        if (boundary_voxels(a).size() > 500 || boundary_voxels(b).size() > 500) continue;
        ++compared;
        matched += metrics::hausdorff_distance(a, b) == oracle::hausdorff(a, b) ? 1 : 0;
    }
    const auto g = unit_grid({4, 1, 1});
    const auto m1 = voxels(g, {{0, 0, 0}, {1, 0, 0}});
    const auto m2 = voxels(g, {{1, 0, 0}, {2, 0, 0}});
    const auto m3 = voxels(g, {{3, 0, 0}});
    const bool dice_ok = metrics::dice_coefficient(m1, m1) == 1.0 && metrics::dice_coefficient(m1, m3) == 0.0 &&
                         metrics::dice_coefficient(m1, m2) == 0.5;
    const auto g8 = unit_grid({8, 8, 8});
    const double hd = metrics::hausdorff_distance(voxels(g8, {{1, 1, 1}}), voxels(g8, {{4, 1, 1}}));
    report.line(5, "metric-oracles", matched == compared && dice_ok && hd == 3.0,
                "HD exact match " + std::to_string(matched) + "/" + std::to_string(compared) +
                    " (<=500 boundary voxels); Dice hand cases " + (dice_ok ? "exact" : "wrong") +
                    "; single-voxel HD=" + fmt("%.6f", hd) + " (need 3.0)");
}

}  // namespace

int main() {
    acceptance::Report report;
    loss_correctness(report);
    gradient_checks(report);
    architecture_contracts(report);
    geometry_pipeline(report);
    metric_oracles(report);
    return report.exit_code();
}
