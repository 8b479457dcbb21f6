#pragma once

// Training objectives.
//
//   chamfer  = mean_p min_g |p - g| + mean_g min_p |g - p|   (unsquared L2, mm)
//   dice     = 1 - (2 sum(p g) + eps) / (sum p^2 + sum g^2 + eps)
//              (eps in both terms makes two empty masks a perfect match)
//   total    = chamfer + lambda * dice
//
// Both loss functions carry hand-written backward passes.

#include <span>
#include <vector>

#include <torch/torch.h>

#include "pcunet/types.hpp"

namespace pcunet::losses {

inline constexpr double kDefaultLambda = 0.001;
inline constexpr double kDefaultDiceEpsilon = 1e-6;

enum class NeighborSearch { KdTree, BruteForce };

struct ChamferTerms {
    double value = 0.0;
    double pred_to_gt = 0.0;  // mean over predicted points
    double gt_to_pred = 0.0;  // mean over ground-truth points
    std::vector<std::size_t> pred_match;  // nearest gt index for each predicted point
    std::vector<std::size_t> gt_match;    // nearest predicted index for each gt point
};

/// Chamfer distance between two nonempty point sets. Nearest-neighbour ties
/// resolve to the lowest index and sums run in index order, so both search
/// strategies return bit-identical results.
ChamferTerms chamfer_terms(std::span<const Vec3> pred, std::span<const Vec3> gt,
                           NeighborSearch search = NeighborSearch::KdTree);

/// Differentiable Chamfer loss. `pred` and `gt` are (N,3)/(M,3) or
/// batched (B,N,3)/(B,M,3); batched results are averaged over B. Gradient
/// flows to `pred` only; a matched pair at zero distance contributes zero
/// gradient.
torch::Tensor chamfer_loss(const torch::Tensor& pred, const torch::Tensor& gt);

/// Differentiable soft Dice loss over all non-batch dimensions. Inputs have
/// identical shape with a leading batch dimension; the result is the batch
/// mean.
torch::Tensor soft_dice_loss(const torch::Tensor& probs, const torch::Tensor& gt,
                             double eps = kDefaultDiceEpsilon);

/// l_p + lambda * l_s.
torch::Tensor total_loss(const torch::Tensor& chamfer, const torch::Tensor& dice,
                         double lambda = kDefaultLambda);
double total_loss(double chamfer, double dice, double lambda = kDefaultLambda);

/// (B, N, 3) tensor -> per-batch point lists, in double.
std::vector<std::vector<Vec3>> to_points(const torch::Tensor& cloud);
/// Points -> (N, 3) tensor of the requested dtype.
torch::Tensor to_tensor(std::span<const Vec3> points, torch::Dtype dtype = torch::kFloat32);

}  // namespace pcunet::losses
