#include "planeq/losses.hpp"

#include <cmath>

namespace planeq::loss {

namespace {

double sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

double clamp_prob(double p) {
    const double lo = bce_prob_clamp_lo(), hi = bce_prob_clamp_hi();
    return std::min(std::max(p, lo), hi);
}

using diff::Graph;
using diff::NodeId;

// [n] vector filled with a scalar node's value.
NodeId bcast(Graph& g, NodeId s, int n) {
    NodeId ones = g.constant(Tensor::full({n, 1}, 1.0));
    return g.reshape(g.matmul(ones, g.reshape(s, {1, 1})), {n});
}

// -mean[t log p + (1-t) log(1-p)] with clamped p; optional per-entry weights
// and an explicit normalizer.
NodeId bce_node(Graph& g, NodeId probs, const Tensor& target, const Tensor* weights,
                double normalizer) {
    NodeId p = g.clamp(probs, bce_prob_clamp_lo(), bce_prob_clamp_hi());
    NodeId t = g.constant(target);
    NodeId one = g.constant(Tensor::full(g.value(probs).dims(), 1.0));
    NodeId pos = g.mul(t, g.log(p));
    NodeId neg = g.mul(g.sub(one, t), g.log(g.sub(one, p)));
    NodeId terms = g.scale(g.add(pos, neg), -1.0);
    if (weights) terms = g.mul(terms, g.constant(*weights));
    return g.scale(g.sum(terms), 1.0 / normalizer);
}

}  // namespace

double bce_prob_clamp_lo() { return sigmoid(-kBceLogitClamp); }
double bce_prob_clamp_hi() { return sigmoid(kBceLogitClamp); }

double bce_value(const std::vector<double>& m, const std::vector<double>& target) {
    check(m.size() == target.size(), "bce size mismatch");
    double s = 0.0;
    for (size_t i = 0; i < m.size(); ++i) {
        const double p = clamp_prob(m[i]);
        s += -(target[i] * std::log(p) + (1.0 - target[i]) * std::log(1.0 - p));
    }
    return s / static_cast<double>(m.size());
}

double dice_value(const std::vector<double>& m, const std::vector<double>& target) {
    check(m.size() == target.size(), "dice size mismatch");
    double inter = 0.0, sm = 0.0, st = 0.0;
    for (size_t i = 0; i < m.size(); ++i) {
        inter += m[i] * target[i];
        sm += m[i];
        st += target[i];
    }
    return 1.0 - 2.0 * inter / (sm + st + kDiceEps);
}

double masked_l1_value(const std::vector<double>& d, const std::vector<double>& d_gt,
                       const std::vector<double>& mask) {
    check(d.size() == d_gt.size() && d.size() == mask.size(), "masked l1 size mismatch");
    double s = 0.0;
    int cnt = 0;
    for (size_t i = 0; i < d.size(); ++i) {
        if (mask[i] <= 0.0) continue;
        s += std::fabs(d[i] - d_gt[i]);
        ++cnt;
    }
    return cnt == 0 ? 0.0 : s / cnt;
}

double mask_loss_value(const std::vector<double>& m, const std::vector<double>& target,
                       const LossWeights& w) {
    return w.beta1 * bce_value(m, target) + w.beta2 * dice_value(m, target);
}

double pose_loss_value(const geo::PoseSE3& T, const geo::PoseSE3& T_star, const LossWeights& w) {
    const geo::Twist g = geo::se3_log(geo::se3_compose(geo::se3_inverse(T), T_star));
    const double rho = std::sqrt(g[0] * g[0] + g[1] * g[1] + g[2] * g[2]);
    const double phi = std::sqrt(g[3] * g[3] + g[4] * g[4] + g[5] * g[5]);
    return w.lambda_t * rho + w.lambda_q * phi;
}

diff::NodeId mask_loss_node(diff::Graph& g, diff::NodeId mask_probs, const Tensor& target,
                            const LossWeights& w) {
    const Tensor& m = g.value(mask_probs);
    if (!m.same_dims(target)) throw ShapeError("mask loss dims mismatch");

    NodeId bce = bce_node(g, mask_probs, target, nullptr, m.numel());

    NodeId t = g.constant(target);
    NodeId ones = g.constant(Tensor::full(m.dims(), 1.0));
    NodeId inter = g.sum(g.mul(mask_probs, t));
    NodeId sums = g.add(g.sum(g.mul(mask_probs, ones)), g.sum(t));
    NodeId denom = g.add(sums, g.constant(Tensor::scalar(kDiceEps)));
    NodeId dice = g.sub(g.constant(Tensor::scalar(1.0)), g.divide(g.scale(inter, 2.0), denom));

    return g.add(g.scale(bce, w.beta1), g.scale(dice, w.beta2));
}

diff::NodeId depth_loss_node(diff::Graph& g, diff::NodeId depth, const Tensor& depth_gt,
                             const Tensor& mask_gt) {
    const Tensor& d = g.value(depth);
    if (!d.same_dims(depth_gt) || !d.same_dims(mask_gt))
        throw ShapeError("depth loss dims mismatch");
    double cnt = 0.0;
    for (int i = 0; i < mask_gt.numel(); ++i) cnt += mask_gt[i] > 0.0 ? 1.0 : 0.0;
    if (cnt == 0.0) return g.constant(Tensor::scalar(0.0));
    NodeId diffabs = g.abs(g.sub(depth, g.constant(depth_gt)));
    NodeId masked = g.mul(diffabs, g.constant(mask_gt));
    return g.scale(g.sum(masked), 1.0 / cnt);
}

diff::NodeId cls_loss_node(diff::Graph& g, diff::NodeId probs, const Tensor& targets,
                           const Tensor& weights) {
    const Tensor& p = g.value(probs);
    if (!p.same_dims(targets) || !p.same_dims(weights))
        throw ShapeError("cls loss dims mismatch");
    return bce_node(g, probs, targets, &weights, p.numel());
}

diff::NodeId param_loss_node(diff::Graph& g, diff::NodeId params, const Tensor& gt_params) {
    const Tensor& p = g.value(params);
    if (!p.same_dims(gt_params)) throw ShapeError("param loss dims mismatch");
    const int m = p.dim(0);
    return g.scale(g.sum(g.abs(g.sub(params, g.constant(gt_params)))), 1.0 / m);
}

MonoLossParts total_mono_loss(diff::Graph& g, const MonoLossInputs& pred,
                              const MonoGroundTruth& gt,
                              const std::vector<std::pair<int, int>>& assignment,
                              const LossWeights& w) {
    w.validate();
    NodeId probs = pred.probs;
    if (g.value(probs).ndim() == 2) probs = g.reshape(probs, {g.value(probs).numel()});
    const int n_queries = g.value(probs).numel();
    const int hw = g.value(pred.mask_probs).dim(1);
    const int n_matched = static_cast<int>(assignment.size());

    Tensor cls_targets({n_queries});
    Tensor cls_weights = Tensor::full({n_queries}, w.w_noplane);
    for (auto [pi, gi] : assignment) {
        cls_targets[pi] = 1.0;
        cls_weights[pi] = 1.0;
    }

    MonoLossParts parts;
    parts.cls = cls_loss_node(g, probs, cls_targets, cls_weights);

    if (n_matched == 0) {
        parts.param = g.constant(Tensor::scalar(0.0));
        parts.mask = g.constant(Tensor::scalar(0.0));
        parts.depth = g.constant(Tensor::scalar(0.0));
        parts.total = g.scale(parts.cls, w.lambda);
        return parts;
    }

    // Gather matched prediction rows with a selector matrix.
    Tensor sel({n_matched, n_queries});
    Tensor gt_params({n_matched, 3});
    Tensor gt_masks({n_matched, hw});
    Tensor gt_depth_rows({n_matched, hw});
    Tensor counts({n_matched});
    for (int r = 0; r < n_matched; ++r) {
        const auto [pi, gi] = assignment[static_cast<size_t>(r)];
        sel.at2(r, pi) = 1.0;
        const geo::Vec3& nv = gt.params[static_cast<size_t>(gi)];
        gt_params.at2(r, 0) = nv.x;
        gt_params.at2(r, 1) = nv.y;
        gt_params.at2(r, 2) = nv.z;
        double cnt = 0.0;
        for (int j = 0; j < hw; ++j) {
            const double mv = gt.masks[static_cast<size_t>(gi)][static_cast<size_t>(j)];
            gt_masks.at2(r, j) = mv;
            gt_depth_rows.at2(r, j) = gt.depth[static_cast<size_t>(j)];
            cnt += mv > 0.0 ? 1.0 : 0.0;
        }
        counts[r] = cnt > 0.0 ? cnt : 1.0;
    }

    NodeId selector = g.constant(sel);
    NodeId m_params = g.matmul(selector, pred.params);
    NodeId m_masks = g.matmul(selector, pred.mask_probs);
    NodeId m_depths = g.matmul(selector, pred.depths);

    parts.param = param_loss_node(g, m_params, gt_params);

    // Mask loss over all matched rows at once. BCE: mean over M*HW pixels
    // equals the mean over planes of per-plane means (equal pixel counts).
    NodeId bce = bce_node(g, m_masks, gt_masks, nullptr, n_matched * hw);
    NodeId tgt = g.constant(gt_masks);
    NodeId inter2 = g.scale(g.dot(m_masks, tgt), 2.0);                      // [M]
    NodeId ones_row = g.constant(Tensor::full({n_matched, hw}, 1.0));
    NodeId denom = g.add(g.add(g.dot(m_masks, ones_row), g.dot(tgt, ones_row)),
                         g.constant(Tensor::full({n_matched}, kDiceEps)));
    NodeId dice = g.sub(g.constant(Tensor::full({n_matched}, 1.0)), g.divide(inter2, denom));
    parts.mask = g.add(g.scale(bce, w.beta1), g.scale(g.mean(dice), w.beta2));

    // Depth: per-plane masked mean L1, then mean over planes.
    NodeId adiff = g.abs(g.sub(m_depths, g.constant(gt_depth_rows)));
    NodeId per_plane = g.divide(g.dot(adiff, tgt), g.constant(counts));    // [M]
    parts.depth = g.mean(per_plane);

    parts.total = g.add(g.add(g.scale(parts.cls, w.lambda), parts.param),
                        g.add(parts.mask, g.scale(parts.depth, w.lambda)));
    return parts;
}

diff::NodeId quat_conj_node(diff::Graph& g, diff::NodeId q) {
    return g.mul(q, g.constant(Tensor({4}, {1.0, -1.0, -1.0, -1.0})));
}

diff::NodeId quat_mul_node(diff::Graph& g, diff::NodeId a, diff::NodeId b) {
    // a (x) b = M(a) b with M linear in a; B maps a to vec(M(a)).
    static const std::vector<double> bmat = [] {
        std::vector<double> m(64, 0.0);
        auto set = [&](int acomp, int row, int bcomp, double v) { m[acomp * 16 + row * 4 + bcomp] = v; };
        set(0, 0, 0, 1);  set(1, 0, 1, -1); set(2, 0, 2, -1); set(3, 0, 3, -1);
        set(1, 1, 0, 1);  set(0, 1, 1, 1);  set(3, 1, 2, -1); set(2, 1, 3, 1);
        set(2, 2, 0, 1);  set(3, 2, 1, 1);  set(0, 2, 2, 1);  set(1, 2, 3, -1);
        set(3, 3, 0, 1);  set(2, 3, 1, -1); set(1, 3, 2, 1);  set(0, 3, 3, 1);
        return m;
    }();
    diff::NodeId bconst = g.constant(Tensor({4, 16}, bmat));
    diff::NodeId m = g.reshape(g.matmul(g.reshape(a, {1, 4}), bconst), {4, 4});
    return g.reshape(g.matmul(m, g.reshape(b, {4, 1})), {4});
}

diff::NodeId quat_rotate_node(diff::Graph& g, diff::NodeId q, diff::NodeId v) {
    diff::NodeId p = g.concat_last({g.constant(Tensor({1}, {0.0})), v});
    diff::NodeId r = quat_mul_node(g, quat_mul_node(g, q, p), quat_conj_node(g, q));
    return g.slice_last(r, 1, 3);
}

diff::NodeId cross_node(diff::Graph& g, diff::NodeId a, diff::NodeId b) {
    auto c = [&](int i) { return g.slice_last(a, i, 1); };
    auto d = [&](int i) { return g.slice_last(b, i, 1); };
    diff::NodeId x = g.sub(g.mul(c(1), d(2)), g.mul(c(2), d(1)));
    diff::NodeId y = g.sub(g.mul(c(2), d(0)), g.mul(c(0), d(2)));
    diff::NodeId z = g.sub(g.mul(c(0), d(1)), g.mul(c(1), d(0)));
    return g.concat_last({x, y, z});
}

diff::NodeId pose_loss_node(diff::Graph& g, diff::NodeId q_pred, diff::NodeId t_pred,
                            const geo::PoseSE3& gt, const LossWeights& w) {
    using diff::NodeId;
    NodeId q_gt = g.constant(Tensor({4}, {gt.q.w, gt.q.x, gt.q.y, gt.q.z}));
    NodeId t_gt = g.constant(Tensor({3}, {gt.t.x, gt.t.y, gt.t.z}));

    // relative transform T^-1 T*
    NodeId qi = quat_conj_node(g, q_pred);
    NodeId q_rel = quat_mul_node(g, qi, q_gt);
    NodeId t_rel = quat_rotate_node(g, qi, g.sub(t_gt, t_pred));

    NodeId wq = g.slice_last(q_rel, 0, 1);
    NodeId v = g.slice_last(q_rel, 1, 3);
    NodeId s = g.sqrt(g.clamp(g.dot(v, v), 1e-30, 1e300));
    NodeId wa = g.abs(wq);
    NodeId theta = g.scale(g.atan2(s, wa), 2.0);

    // canonical unit axis: sign(w) v / s
    NodeId sgn = g.divide(wq, g.clamp(wa, 1e-12, 1e300));
    NodeId axis = g.mul(v, bcast(g, g.divide(sgn, s), 3));

    // rho = t - (theta/2) axis x t + D axis x (axis x t), D = 1 - (theta/2) w/s
    NodeId half = g.scale(theta, 0.5);
    NodeId dcoef = g.sub(g.constant(Tensor::scalar(1.0)), g.mul(half, g.divide(wa, s)));
    NodeId axt = cross_node(g, axis, t_rel);
    NodeId axxt = cross_node(g, axis, axt);
    NodeId rho = g.add(g.sub(t_rel, g.mul(axt, bcast(g, half, 3))),
                       g.mul(axxt, bcast(g, dcoef, 3)));

    NodeId tnorm = g.sqrt(g.clamp(g.dot(rho, rho), 1e-30, 1e300));
    return g.add(g.scale(tnorm, w.lambda_t), g.scale(theta, w.lambda_q));
}

}  // namespace planeq::loss
