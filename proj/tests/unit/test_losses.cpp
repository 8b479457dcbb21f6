#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "../support/gradcheck.hpp"
#include "../support/oracles.hpp"
#include "pcunet/losses.hpp"

using namespace pcunet;
using namespace pcunet::losses;

namespace {

double chamfer_value(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
    return chamfer_loss(to_tensor(a, torch::kFloat64), to_tensor(b, torch::kFloat64)).item<double>();
}

}  // namespace

TEST(ChamferLoss, HandCases) {
    EXPECT_EQ(chamfer_value({{0, 0, 0}}, {{3, 4, 0}}), 10.0);
    EXPECT_EQ(chamfer_value({{0, 0, 0}, {1, 0, 0}}, {{0, 0, 0}}), 0.5);
    EXPECT_EQ(chamfer_value({{1, 2, 3}, {4, 5, 6}}, {{1, 2, 3}, {4, 5, 6}}), 0.0);
}

TEST(ChamferLoss, EmptyCloudRejected) {
    EXPECT_THROW((void)chamfer_terms({}, std::vector<Vec3>{{0, 0, 0}}), InvariantError);
    EXPECT_THROW((void)chamfer_loss(torch::zeros({1, 0, 3}), torch::zeros({1, 1, 3})), InvariantError);
}

TEST(ChamferLoss, NonFiniteInputs) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW((void)chamfer_terms(std::vector<Vec3>{{nan, 0, 0}}, std::vector<Vec3>{{0, 0, 0}}), InvariantError);
    auto pred = torch::full({1, 2, 3}, std::numeric_limits<double>::infinity(), torch::kFloat64);
    EXPECT_TRUE(std::isnan(chamfer_loss(pred, torch::zeros({1, 2, 3}, torch::kFloat64)).item<double>()));
    EXPECT_THROW((void)chamfer_loss(torch::zeros({1, 2, 3}), torch::full({1, 2, 3}, NAN)), InvariantError);
}

TEST(ChamferLoss, KdTreeMatchesBruteForceExactly) {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 40; ++trial) {
        const auto a = oracle::random_cloud(rng, 1 + rng() % 256);
        const auto b = oracle::random_cloud(rng, 1 + rng() % 256);
        const auto fast = chamfer_terms(a, b, NeighborSearch::KdTree);
        const auto slow = chamfer_terms(a, b, NeighborSearch::BruteForce);
        EXPECT_EQ(fast.value, slow.value);
        EXPECT_EQ(fast.pred_match, slow.pred_match);
        EXPECT_EQ(fast.gt_match, slow.gt_match);
        EXPECT_EQ(fast.value, oracle::chamfer(a, b));
    }
}

TEST(ChamferLoss, LatticeTiesResolveIdentically) {
    std::vector<Vec3> grid;
    for (int x = 0; x < 5; ++x)
        for (int y = 0; y < 5; ++y)
            for (int z = 0; z < 5; ++z) grid.push_back({double(x), double(y), double(z)});
    std::vector<Vec3> queries;
    for (int i = 0; i < 50; ++i) queries.push_back({0.5 * (i % 9), 0.5 * (i % 7), 0.5 * (i % 5)});
    const auto fast = chamfer_terms(queries, grid, NeighborSearch::KdTree);
    const auto slow = chamfer_terms(queries, grid, NeighborSearch::BruteForce);
    EXPECT_EQ(fast.pred_match, slow.pred_match);
    EXPECT_EQ(fast.value, slow.value);
}

TEST(ChamferLoss, SymmetricNonNegativeAndInvariant) {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 10; ++trial) {
        auto a = oracle::random_cloud(rng, 3 + rng() % 60);
        auto b = oracle::random_cloud(rng, 3 + rng() % 60);
        const double ab = oracle::chamfer(a, b);
        EXPECT_NEAR(chamfer_value(a, b), chamfer_value(b, a), 1e-12);
        EXPECT_GE(chamfer_value(a, b), 0.0);
        EXPECT_EQ(chamfer_value(a, a), 0.0);
        std::shuffle(a.begin(), a.end(), rng);
        std::shuffle(b.begin(), b.end(), rng);
        EXPECT_NEAR(chamfer_value(a, b), ab, 1e-12);
        const Vec3 t{3.25, -7.5, 11.0};
        for (auto& p : a) p = {p[0] + t[0], p[1] + t[1], p[2] + t[2]};
        for (auto& p : b) p = {p[0] + t[0], p[1] + t[1], p[2] + t[2]};
        EXPECT_NEAR(chamfer_value(a, b), ab, 1e-9);
    }
}

TEST(ChamferLoss, BatchIsMeanOverItems) {
    const auto a = to_tensor(std::vector<Vec3>{{0, 0, 0}}, torch::kFloat64);
    const auto b = to_tensor(std::vector<Vec3>{{3, 4, 0}}, torch::kFloat64);
    const auto pred = torch::stack({a, a});
    const auto gt = torch::stack({b, a});
    EXPECT_EQ(chamfer_loss(pred, gt).item<double>(), 5.0);
}

TEST(ChamferLoss, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(3);
    int checked = 0;
    while (checked < 10) {
        const auto r = gradcheck::check_chamfer(rng, 32);
        if (r.skipped) continue;
        EXPECT_LT(r.error, 1e-4);
        ++checked;
    }
}

TEST(ChamferLoss, CoincidentMatchHasZeroGradient) {
    auto pred = torch::zeros({1, 1, 3}, torch::kFloat64).set_requires_grad(true);
    chamfer_loss(pred, torch::zeros({1, 1, 3}, torch::kFloat64)).backward();
    EXPECT_EQ(pred.grad().abs().sum().item<double>(), 0.0);
}

TEST(SoftDiceLoss, HandCases) {
    const auto g = torch::ones({1, 200}, torch::kFloat64);
    EXPECT_NEAR(soft_dice_loss(g, g).item<double>(), 0.0, 1e-6);
    EXPECT_NEAR(soft_dice_loss(torch::zeros({1, 200}, torch::kFloat64), g).item<double>(), 1.0, 1e-6);
    auto half = torch::zeros({1, 100}, torch::kFloat64);
    half.narrow(1, 0, 50).fill_(1.0);
    EXPECT_NEAR(soft_dice_loss(torch::full({1, 100}, 0.5, torch::kFloat64), half).item<double>(), 1.0 / 3.0, 1e-6);
}

TEST(SoftDiceLoss, EmptyPairIsZero) {
    const auto z = torch::zeros({1, 1, 4, 4, 4}, torch::kFloat64);
    EXPECT_EQ(soft_dice_loss(z, z).item<double>(), 0.0);
}

TEST(SoftDiceLoss, ShapeMismatchRejected) {
    EXPECT_THROW((void)soft_dice_loss(torch::zeros({1, 8}), torch::zeros({1, 9})), ConfigError);
}

TEST(SoftDiceLoss, RangeAndBinaryAgreement) {
    std::mt19937_64 rng(4);
    auto gen = torch::make_generator<at::CPUGeneratorImpl>(5);
    for (int trial = 0; trial < 10; ++trial) {
        const auto p = torch::rand({1, 1, 6, 6, 6}, gen, torch::kFloat64);
        const auto g = (torch::rand({1, 1, 6, 6, 6}, gen, torch::kFloat64) > 0.6).to(torch::kFloat64);
        const double l = soft_dice_loss(p, g).item<double>();
        EXPECT_GE(l, 0.0);
        EXPECT_LE(l, 1.0);
        const auto pb = (p > 0.5).to(torch::kFloat64);
        const double inter = (pb * g).sum().item<double>();
        const double dice = 2.0 * inter / (pb.sum().item<double>() + g.sum().item<double>());
        EXPECT_NEAR(soft_dice_loss(pb, g).item<double>(), 1.0 - dice, 1e-6);
    }
}

TEST(SoftDiceLoss, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 10; ++trial) EXPECT_LT(gradcheck::check_soft_dice(rng, 8).error, 1e-4);
}

TEST(TotalLoss, WeightedSum) {
    EXPECT_DOUBLE_EQ(total_loss(10.0, 0.5, 0.001), 10.0005);
    EXPECT_EQ(total_loss(3.0, 0.7, 0.0), 3.0);
    EXPECT_EQ(kDefaultLambda, 0.001);
    EXPECT_DOUBLE_EQ(total_loss(torch::tensor(10.0, torch::kFloat64), torch::tensor(0.5, torch::kFloat64)).item<double>(), 10.0005);
}
