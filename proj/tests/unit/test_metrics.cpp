#include <gtest/gtest.h>

#include <random>

#include "../support/oracles.hpp"
#include "pcunet/losses.hpp"
#include "pcunet/mask_ops.hpp"
#include "pcunet/metrics.hpp"

using namespace pcunet;
using namespace pcunet::metrics;

namespace {

GridGeometry geometry(Index3 shape, Vec3 spacing = {1, 1, 1}) {
    GridGeometry g;
    g.shape = shape;
    g.spacing = spacing;
    return g;
}

MaskVolume voxels(const GridGeometry& g, const std::vector<Index3>& on) {
    std::vector<std::uint8_t> d(g.voxel_count(), 0);
    for (const auto& v : on) d[g.offset(v[0], v[1], v[2])] = 1;
    return MaskVolume(g, std::move(d));
}

}  // namespace

TEST(ChamferDistance, HandCasesAndLossAgreement) {
    EXPECT_EQ(chamfer_distance(PointCloud({{0, 0, 0}}), PointCloud({{3, 4, 0}})), 10.0);
    const PointCloud a({{1, 1, 1}, {2, 2, 2}});
    EXPECT_EQ(chamfer_distance(a, a), 0.0);
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 10; ++trial) {
        const auto p = oracle::random_cloud(rng, 1 + rng() % 200);
        const auto q = oracle::random_cloud(rng, 1 + rng() % 200);
        const double loss =
            losses::chamfer_loss(losses::to_tensor(p, torch::kFloat64), losses::to_tensor(q, torch::kFloat64))
                .item<double>();
        EXPECT_NEAR(chamfer_distance(PointCloud(p), PointCloud(q)), loss, 1e-9);
    }
    EXPECT_THROW((void)chamfer_distance(PointCloud(), a), InvariantError);
}

TEST(DiceCoefficient, HandCases) {
    const auto g = geometry({4, 1, 1});
    const auto a = voxels(g, {{0, 0, 0}, {1, 0, 0}});
    const auto b = voxels(g, {{1, 0, 0}, {2, 0, 0}});
    const auto c = voxels(g, {{3, 0, 0}});
    EXPECT_EQ(dice_coefficient(a, a), 1.0);
    EXPECT_EQ(dice_coefficient(a, c), 0.0);
    EXPECT_EQ(dice_coefficient(a, b), 0.5);
    EXPECT_EQ(dice_coefficient(MaskVolume::filled(g, 0), MaskVolume::filled(g, 0)), 1.0);
    EXPECT_THROW((void)dice_coefficient(a, MaskVolume::filled(geometry({2, 2, 1}), 0)), InvariantError);
}

TEST(DiceCoefficient, SymmetricBoundedMonotone) {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 10; ++trial) {
        const auto p = oracle::random_blob_mask(rng, 12);
        const auto q = oracle::random_blob_mask(rng, 12);
        const double d = dice_coefficient(p, q);
        EXPECT_EQ(d, dice_coefficient(q, p));
        EXPECT_GE(d, 0.0);
        EXPECT_LE(d, 1.0);
        // Removing an overlap voxel from the prediction never increases Dice.
        std::vector<std::uint8_t> data(p.data().begin(), p.data().end());
        for (std::size_t i = 0; i < data.size(); ++i) {
            if (data[i] && q[i]) {
                data[i] = 0;
                break;
            }
        }
        EXPECT_LE(dice_coefficient(MaskVolume(p.geometry(), data), q), d);
    }
}

TEST(HausdorffDistance, HandCases) {
    const auto g = geometry({8, 8, 8});
    const auto a = voxels(g, {{1, 1, 1}});
    const auto b = voxels(g, {{4, 1, 1}});
    EXPECT_EQ(hausdorff_distance(a, b), 3.0);
    EXPECT_EQ(hausdorff_distance(a, a), 0.0);
    EXPECT_THROW((void)hausdorff_distance(a, MaskVolume::filled(g, 0)), InvariantError);
}

TEST(HausdorffDistance, UsesSpacing) {
    const auto g = geometry({8, 8, 8}, {0.5, 2.0, 1.0});
    EXPECT_EQ(hausdorff_distance(voxels(g, {{1, 1, 1}}), voxels(g, {{1, 4, 1}})), 6.0);
}

TEST(HausdorffDistance, IsolatedOutlierSetsDistance) {
    const auto g = geometry({30, 10, 10});
    std::vector<Index3> block;
    for (int z = 2; z < 6; ++z)
        for (int y = 2; y < 6; ++y)
            for (int x = 2; x < 6; ++x) block.push_back({x, y, z});
    const auto gt = voxels(g, block);
    auto with_outlier = block;
    with_outlier.push_back({25, 3, 3});
    const auto pred = voxels(g, with_outlier);
    EXPECT_EQ(hausdorff_distance(gt, gt), 0.0);
    // Nearest gt boundary voxel to (25,3,3) is (5,3,3).
    EXPECT_EQ(hausdorff_distance(pred, gt), 20.0);
}

TEST(HausdorffDistance, MatchesBruteForceOracle) {
    std::mt19937_64 rng(3);
    int checked = 0;
    while (checked < 15) {
        const auto a = oracle::random_blob_mask(rng, 14);
        const auto b = oracle::random_blob_mask(rng, 14);
        if (boundary_voxels(a).size() > 500 || boundary_voxels(b).size() > 500) continue;
        const double fast = hausdorff_distance(a, b);
        EXPECT_EQ(fast, oracle::hausdorff(a, b));
        EXPECT_EQ(fast, hausdorff_distance(b, a));
        EXPECT_EQ(fast, hausdorff_distance(a, b, losses::NeighborSearch::BruteForce));
        ++checked;
    }
}

TEST(Binarize, ThresholdConvention) {
    const auto g = geometry({2, 2, 2});
    EXPECT_EQ(binarize(VoxelVolume::filled(g, 0.6f)).foreground_count(), 8u);
    EXPECT_EQ(binarize(VoxelVolume::filled(g, 0.99f), 1.0).foreground_count(), 0u);
    EXPECT_EQ(binarize(VoxelVolume::filled(g, 0.5f)).foreground_count(), 8u);
    const auto t = torch::full({2, 2, 2}, 0.5);
    EXPECT_EQ(binarize(t, g).foreground_count(), 8u);
    EXPECT_THROW((void)binarize(torch::zeros({3, 2, 2}), g), ConfigError);
}

TEST(Binarize, TensorLayoutIsDepthMajor) {
    const auto g = geometry({4, 3, 2});
    auto t = torch::zeros({2, 3, 4});
    t.index_put_({1, 2, 3}, 1.0);
    const auto m = binarize(t, g);
    EXPECT_EQ(m.at(3, 2, 1), 1);
    EXPECT_EQ(m.foreground_count(), 1u);
}

TEST(Summaries, MeanAndSampleSd) {
    const auto s = summarize({1.0, std::nullopt, 3.0});
    ASSERT_TRUE(s);
    EXPECT_EQ(s->count, 2u);
    EXPECT_EQ(s->mean, 2.0);
    EXPECT_DOUBLE_EQ(s->sd, std::sqrt(2.0));
    EXPECT_FALSE(summarize({std::nullopt}));
    EXPECT_EQ(format_summary(std::nullopt), "—");
    EXPECT_EQ(format_summary(Summary{2, 0.8851, 0.0114}), "0.885±0.011");
}

TEST(Summaries, CsvMarksAbsentAndFailed) {
    SampleMetrics a{"unet_vol3d", 0, "case_0001", std::nullopt, 0.9, std::nullopt, true};
    SampleMetrics b{"pointoutnet_vol3d", 1, "case_0002", 1.5, std::nullopt, std::nullopt, false};
    const auto csv = metrics_csv({a, b});
    EXPECT_EQ(csv,
              "variant,fold,sample,cd,dice,hd\n"
              "unet_vol3d,0,case_0001,—,0.900000,failed\n"
              "pointoutnet_vol3d,1,case_0002,1.500000,—,—\n");
}
