#include "pcunet/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pcunet/kdtree.hpp"

namespace pcunet::losses {

namespace {

Neighbor brute_force_nearest(const Vec3& q, std::span<const Vec3> points) {
    Neighbor best;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const double d2 = squared_distance(q, points[i]);
        if (d2 < best.squared_distance) {
            best.squared_distance = d2;
            best.index = i;
        }
    }
    return best;
}

// Mean nearest distance from every point of `from` into `to`.
double directed_mean(std::span<const Vec3> from, std::span<const Vec3> to, NeighborSearch search,
                     std::vector<std::size_t>& match) {
    match.resize(from.size());
    double sum = 0.0;
    if (search == NeighborSearch::KdTree) {
        const KdTree tree(to);
        for (std::size_t i = 0; i < from.size(); ++i) {
            const auto nb = tree.nearest(from[i]);
            match[i] = nb.index;
            sum += std::sqrt(nb.squared_distance);
        }
    } else {
        for (std::size_t i = 0; i < from.size(); ++i) {
            const auto nb = brute_force_nearest(from[i], to);
            match[i] = nb.index;
            sum += std::sqrt(nb.squared_distance);
        }
    }
    return sum / static_cast<double>(from.size());
}

void check_cloud_tensor(const torch::Tensor& t, const char* name) {
    if (t.dim() != 3 || t.size(2) != 3) {
        throw ConfigError(std::string(name) + " must have shape (B, N, 3)");
    }
    if (t.size(1) < 1) throw InvariantError(std::string(name) + " cloud must be nonempty");
}

class ChamferFunction : public torch::autograd::Function<ChamferFunction> {
public:
    static torch::Tensor forward(torch::autograd::AutogradContext* ctx, const torch::Tensor& pred,
                                 const torch::Tensor& gt) {
        check_cloud_tensor(pred, "predicted cloud");
        check_cloud_tensor(gt, "ground-truth cloud");
        if (pred.size(0) != gt.size(0)) throw ConfigError("chamfer batch sizes differ");
        if (!torch::isfinite(gt).all().item<bool>()) throw InvariantError("ground-truth cloud is not finite");
        if (!torch::isfinite(pred).all().item<bool>()) {
            // Diverged prediction: report NaN so the caller can stop training.
            ctx->saved_data["grad"] = torch::zeros_like(pred);
            return torch::tensor(std::numeric_limits<double>::quiet_NaN(),
                                 torch::TensorOptions().dtype(pred.scalar_type()));
        }
        const auto p = to_points(pred);
        const auto g = to_points(gt);
        const auto batch = static_cast<std::size_t>(pred.size(0));
        // Gradient accumulated in double, cast once at the end.
        auto grad = torch::zeros(pred.sizes(), torch::kFloat64);
        auto ga = grad.accessor<double, 3>();
        double total = 0.0;
        for (std::size_t b = 0; b < batch; ++b) {
            const auto terms = chamfer_terms(p[b], g[b]);
            total += terms.value;
            const double wp = 1.0 / static_cast<double>(p[b].size());
            const double wg = 1.0 / static_cast<double>(g[b].size());
            auto add_grad = [&](std::size_t pi, const Vec3& target, double w) {
                const double d = std::sqrt(squared_distance(p[b][pi], target));
                if (d == 0.0) return;
                for (int a = 0; a < 3; ++a) {
                    ga[static_cast<std::int64_t>(b)][static_cast<std::int64_t>(pi)][a] +=
                        w * (p[b][pi][a] - target[a]) / d;
                }
            };
            for (std::size_t i = 0; i < p[b].size(); ++i) add_grad(i, g[b][terms.pred_match[i]], wp);
            for (std::size_t j = 0; j < g[b].size(); ++j) add_grad(terms.gt_match[j], g[b][j], wg);
        }
        const double inv_batch = 1.0 / static_cast<double>(batch);
        ctx->saved_data["grad"] = (grad * inv_batch).to(pred.scalar_type());
        return torch::tensor(total * inv_batch, torch::TensorOptions().dtype(pred.scalar_type()));
    }

    static torch::autograd::tensor_list backward(torch::autograd::AutogradContext* ctx,
                                                 torch::autograd::tensor_list grad_outputs) {
        auto grad = ctx->saved_data["grad"].toTensor();
        return {grad * grad_outputs[0], torch::Tensor()};
    }
};

class SoftDiceFunction : public torch::autograd::Function<SoftDiceFunction> {
public:
    static torch::Tensor forward(torch::autograd::AutogradContext* ctx, const torch::Tensor& probs,
                                 const torch::Tensor& gt, double eps) {
        if (!probs.sizes().equals(gt.sizes())) throw ConfigError("soft Dice inputs differ in shape");
        if (probs.dim() < 2) throw ConfigError("soft Dice inputs need a batch dimension");
        const auto batch = probs.size(0);
        auto p = probs.detach().to(torch::kFloat64).reshape({batch, -1}).contiguous();
        auto g = gt.detach().to(torch::kFloat64).reshape({batch, -1}).contiguous();
        auto grad = torch::empty_like(p);
        const auto n = p.size(1);
        const double* pp = p.data_ptr<double>();
        const double* gp = g.data_ptr<double>();
        double* dp = grad.data_ptr<double>();
        double total = 0.0;
        for (std::int64_t b = 0; b < batch; ++b) {
            const double* pb = pp + b * n;
            const double* gb = gp + b * n;
            double inter = 0.0;
            double denom = eps;
            for (std::int64_t i = 0; i < n; ++i) {
                inter += pb[i] * gb[i];
                denom += pb[i] * pb[i] + gb[i] * gb[i];
            }
            const double numer = 2.0 * inter + eps;
            total += 1.0 - numer / denom;
            // d/dp_i [1 - (2I + eps)/D] = -(2 g_i D - 2 p_i (2I + eps)) / D^2
            for (std::int64_t i = 0; i < n; ++i) {
                dp[b * n + i] = -(2.0 * gb[i] * denom - 2.0 * pb[i] * numer) / (denom * denom);
            }
        }
        const double inv_batch = 1.0 / static_cast<double>(batch);
        ctx->saved_data["grad"] = (grad * inv_batch).reshape(probs.sizes()).to(probs.scalar_type());
        return torch::tensor(total * inv_batch, torch::TensorOptions().dtype(probs.scalar_type()));
    }

    static torch::autograd::tensor_list backward(torch::autograd::AutogradContext* ctx,
                                                 torch::autograd::tensor_list grad_outputs) {
        auto grad = ctx->saved_data["grad"].toTensor();
        return {grad * grad_outputs[0], torch::Tensor(), torch::Tensor()};
    }
};

}  // namespace

ChamferTerms chamfer_terms(std::span<const Vec3> pred, std::span<const Vec3> gt, NeighborSearch search) {
    if (pred.empty() || gt.empty()) throw InvariantError("chamfer distance needs nonempty clouds");
    auto finite = [](std::span<const Vec3> c) {
        return std::all_of(c.begin(), c.end(), [](const Vec3& v) {
            return std::isfinite(v[0]) && std::isfinite(v[1]) && std::isfinite(v[2]);
        });
    };
    if (!finite(pred) || !finite(gt)) throw InvariantError("chamfer distance needs finite coordinates");
    ChamferTerms t;
    t.pred_to_gt = directed_mean(pred, gt, search, t.pred_match);
    t.gt_to_pred = directed_mean(gt, pred, search, t.gt_match);
    t.value = t.pred_to_gt + t.gt_to_pred;
    return t;
}

torch::Tensor chamfer_loss(const torch::Tensor& pred, const torch::Tensor& gt) {
    if (pred.dim() == 2 && gt.dim() == 2) {
        return ChamferFunction::apply(pred.unsqueeze(0), gt.unsqueeze(0));
    }
    return ChamferFunction::apply(pred, gt);
}

torch::Tensor soft_dice_loss(const torch::Tensor& probs, const torch::Tensor& gt, double eps) {
    return SoftDiceFunction::apply(probs, gt, eps);
}

torch::Tensor total_loss(const torch::Tensor& chamfer, const torch::Tensor& dice, double lambda) {
    return chamfer + lambda * dice;
}

double total_loss(double chamfer, double dice, double lambda) { return chamfer + lambda * dice; }

std::vector<std::vector<Vec3>> to_points(const torch::Tensor& cloud) {
    auto c = cloud.detach().to(torch::kFloat64).contiguous();
    if (c.dim() == 2) c = c.unsqueeze(0);
    const auto batch = c.size(0);
    const auto n = c.size(1);
    std::vector<std::vector<Vec3>> out(static_cast<std::size_t>(batch));
    const double* d = c.data_ptr<double>();
    for (std::int64_t b = 0; b < batch; ++b) {
        auto& pts = out[static_cast<std::size_t>(b)];
        pts.resize(static_cast<std::size_t>(n));
        for (std::int64_t i = 0; i < n; ++i) {
            const double* p = d + (b * n + i) * 3;
            pts[static_cast<std::size_t>(i)] = {p[0], p[1], p[2]};
        }
    }
    return out;
}

torch::Tensor to_tensor(std::span<const Vec3> points, torch::Dtype dtype) {
    auto t = torch::empty({static_cast<std::int64_t>(points.size()), 3}, torch::kFloat64);
    double* d = t.data_ptr<double>();
    for (std::size_t i = 0; i < points.size(); ++i) {
        d[i * 3 + 0] = points[i][0];
        d[i * 3 + 1] = points[i][1];
        d[i * 3 + 2] = points[i][2];
    }
    return t.to(dtype);
}

}  // namespace pcunet::losses
