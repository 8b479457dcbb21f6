#pragma once

// Central finite-difference gradient checks for the hand-written backward
// passes, in double precision.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include <torch/torch.h>

#include "pcunet/losses.hpp"

namespace gradcheck {

/// ||analytic - numeric|| / max(||analytic||, ||numeric||, tiny).
inline double relative_error(const torch::Tensor& analytic, const torch::Tensor& numeric) {
    const double diff = (analytic - numeric).norm().item<double>();
    const double scale = std::max({analytic.norm().item<double>(), numeric.norm().item<double>(), 1e-12});
    return diff / scale;
}

/// Numeric gradient of a scalar function of `x` (double tensor).
inline torch::Tensor numeric_gradient(const std::function<double(const torch::Tensor&)>& f, const torch::Tensor& x,
                                      double h) {
    auto grad = torch::zeros_like(x);
    auto flat_x = x.clone().contiguous();
    auto* xd = flat_x.data_ptr<double>();
    auto* gd = grad.data_ptr<double>();
    for (std::int64_t i = 0; i < flat_x.numel(); ++i) {
        const double orig = xd[i];
        xd[i] = orig + h;
        const double up = f(flat_x);
        xd[i] = orig - h;
        const double down = f(flat_x);
        xd[i] = orig;
        gd[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

inline torch::Tensor analytic_gradient(const std::function<torch::Tensor(const torch::Tensor&)>& loss,
                                       const torch::Tensor& x) {
    auto leaf = x.clone().set_requires_grad(true);
    loss(leaf).backward();
    return leaf.grad().clone();
}

/// Nearest-neighbour assignments of both Chamfer directions, flattened.
inline std::vector<std::size_t> chamfer_assignment(const torch::Tensor& pred, const torch::Tensor& gt) {
    const auto p = pcunet::losses::to_points(pred)[0];
    const auto g = pcunet::losses::to_points(gt)[0];
    const auto t = pcunet::losses::chamfer_terms(p, g, pcunet::losses::NeighborSearch::BruteForce);
    std::vector<std::size_t> out = t.pred_match;
    out.insert(out.end(), t.gt_match.begin(), t.gt_match.end());
    return out;
}

/// True when perturbing any coordinate by +-h leaves every nearest-neighbour
/// assignment unchanged and no point has a near-tie; such instances have a
/// well-defined gradient for the finite-difference comparison.
inline bool chamfer_tie_free(const torch::Tensor& pred, const torch::Tensor& gt, double h) {
    const auto base = chamfer_assignment(pred, gt);
    auto x = pred.clone().contiguous();
    auto* d = x.data_ptr<double>();
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        const double orig = d[i];
        for (double s : {h, -h}) {
            d[i] = orig + s;
            if (chamfer_assignment(x, gt) != base) return false;
        }
        d[i] = orig;
    }
    return true;
}

struct Result {
    double error = 0.0;
    bool skipped = false;  // tie configuration
};

inline Result check_chamfer(std::mt19937_64& rng, std::int64_t max_points, double h = 1e-3) {
    std::uniform_int_distribution<std::int64_t> n(1, max_points);
    const auto np = n(rng);
    const auto ng = n(rng);
    auto gen = torch::make_generator<at::CPUGeneratorImpl>(rng());
    auto pred = torch::randn({1, np, 3}, gen, torch::kFloat64) * 5.0;
    auto gt = torch::randn({1, ng, 3}, gen, torch::kFloat64) * 5.0;
    if (!chamfer_tie_free(pred, gt, h)) return {0.0, true};
    const auto a = analytic_gradient([&](const torch::Tensor& x) { return pcunet::losses::chamfer_loss(x, gt); }, pred);
    const auto num = numeric_gradient(
        [&](const torch::Tensor& x) { return pcunet::losses::chamfer_loss(x, gt).item<double>(); }, pred, h);
    return {relative_error(a, num), false};
}

inline Result check_soft_dice(std::mt19937_64& rng, std::int64_t max_side, double h = 1e-3) {
    std::uniform_int_distribution<std::int64_t> side(2, max_side);
    const std::vector<std::int64_t> shape{1, 1, side(rng), side(rng), side(rng)};
    auto gen = torch::make_generator<at::CPUGeneratorImpl>(rng());
    // Probabilities kept away from 0 and 1 so +-h stays inside the domain.
    auto probs = torch::rand(shape, gen, torch::kFloat64) * 0.9 + 0.05;
    auto gt = (torch::rand(shape, gen, torch::kFloat64) > 0.5).to(torch::kFloat64);
    const auto a = analytic_gradient([&](const torch::Tensor& x) { return pcunet::losses::soft_dice_loss(x, gt); }, probs);
    const auto num = numeric_gradient(
        [&](const torch::Tensor& x) { return pcunet::losses::soft_dice_loss(x, gt).item<double>(); }, probs, h);
    return {relative_error(a, num), false};
}

}  // namespace gradcheck
