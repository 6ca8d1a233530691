#include "planeq/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "planeq/graph.hpp"

namespace planeq::match {

double matching_cost(const PredictedPlane& pred, const GroundTruthPlane& gt,
                     const std::vector<double>& gt_depth, const loss::LossWeights& w) {
    check(pred.mask.size() == gt.mask.size() && pred.depth.size() == gt_depth.size(),
          "matching_cost grid mismatch");
    const double l1_param = std::fabs(pred.param.x - gt.param.x) +
                            std::fabs(pred.param.y - gt.param.y) +
                            std::fabs(pred.param.z - gt.param.z);
    const double l1_depth = loss::masked_l1_value(pred.depth, gt_depth, gt.mask);
    const double ce = loss::bce_value(pred.mask, gt.mask);
    const double dice = loss::dice_value(pred.mask, gt.mask);
    return -w.omega1 * pred.prob + w.omega2 * l1_param + w.omega3 * l1_depth + w.omega4 * ce +
           w.omega5 * dice;
}

HungarianResult hungarian(const Tensor& cost) {
    if (cost.ndim() != 2 || cost.dim(0) != cost.dim(1))
        throw ContractError("hungarian expects a square matrix");
    const int n = cost.dim(0);
    for (int i = 0; i < n * n; ++i)
        if (!std::isfinite(cost[i])) throw ContractError("hungarian: non-finite cost entry");

    const double inf = std::numeric_limits<double>::infinity();
    // 1-based potentials; p[j] = row matched to column j.
    std::vector<double> u(static_cast<size_t>(n) + 1, 0.0), v(static_cast<size_t>(n) + 1, 0.0);
    std::vector<int> p(static_cast<size_t>(n) + 1, 0), way(static_cast<size_t>(n) + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(static_cast<size_t>(n) + 1, inf);
        std::vector<char> used(static_cast<size_t>(n) + 1, 0);
        do {
            used[static_cast<size_t>(j0)] = 1;
            const int i0 = p[static_cast<size_t>(j0)];
            double delta = inf;
            int j1 = -1;
            for (int j = 1; j <= n; ++j) {
                if (used[static_cast<size_t>(j)]) continue;
                const double cur = cost.at2(i0 - 1, j - 1) - u[static_cast<size_t>(i0)] -
                                   v[static_cast<size_t>(j)];
                if (cur < minv[static_cast<size_t>(j)]) {
                    minv[static_cast<size_t>(j)] = cur;
                    way[static_cast<size_t>(j)] = j0;
                }
                if (minv[static_cast<size_t>(j)] < delta) {
                    delta = minv[static_cast<size_t>(j)];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[static_cast<size_t>(j)]) {
                    u[static_cast<size_t>(p[static_cast<size_t>(j)])] += delta;
                    v[static_cast<size_t>(j)] -= delta;
                } else {
                    minv[static_cast<size_t>(j)] -= delta;
                }
            }
            j0 = j1;
        } while (p[static_cast<size_t>(j0)] != 0);
        do {
            const int j1 = way[static_cast<size_t>(j0)];
            p[static_cast<size_t>(j0)] = p[static_cast<size_t>(j1)];
            j0 = j1;
        } while (j0);
    }

    HungarianResult out;
    out.col_of_row.assign(static_cast<size_t>(n), -1);
    for (int j = 1; j <= n; ++j) out.col_of_row[static_cast<size_t>(p[static_cast<size_t>(j)] - 1)] = j - 1;
    for (int i = 0; i < n; ++i) out.total += cost.at2(i, out.col_of_row[static_cast<size_t>(i)]);
    return out;
}

Assignment bipartite_match(const std::vector<PredictedPlane>& preds,
                           const std::vector<GroundTruthPlane>& gts,
                           const std::vector<double>& gt_depth, const loss::LossWeights& w) {
    const int n = static_cast<int>(preds.size());
    const int m = static_cast<int>(gts.size());
    if (n < m) throw ContractError("bipartite_match needs at least as many predictions as planes");
    if (n == 0 || m == 0) return {};

    // Rows are ground-truth slots (real planes first, then non-plane padding
    // with zero cost), columns are predictions.
    Tensor cost({n, n});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            cost.at2(i, j) = matching_cost(preds[static_cast<size_t>(j)],
                                           gts[static_cast<size_t>(i)], gt_depth, w);

    const HungarianResult h = hungarian(cost);
    Assignment out;
    for (int i = 0; i < m; ++i) out.push_back({h.col_of_row[static_cast<size_t>(i)], i});
    std::sort(out.begin(), out.end());
    return out;
}

Tensor dual_softmax_from_logits(const Tensor& S, int channels) {
    // Reuse the graph ops so values match the attention path bit-exactly.
    diff::Graph g;
    diff::NodeId s = g.input(S);
    diff::NodeId scaled = g.scale(s, 1.0 / std::sqrt(static_cast<double>(channels)));
    diff::NodeId c = g.mul(g.row_softmax(scaled), g.col_softmax(scaled));
    return g.value(c);
}

CorrespondenceMatrix dual_softmax(const Tensor& Q, const Tensor& K) {
    if (Q.ndim() != 2 || K.ndim() != 2 || Q.dim(1) != K.dim(1))
        throw ShapeError("dual_softmax expects [N1,C] and [N2,C]");
    const int n1 = Q.dim(0), n2 = K.dim(0), c = Q.dim(1);
    Tensor S({n1, n2});
    for (int i = 0; i < n1; ++i)
        for (int j = 0; j < n2; ++j) {
            double s = 0.0;
            for (int k = 0; k < c; ++k) s += Q.at2(i, k) * K.at2(j, k);
            S.at2(i, j) = s;
        }
    CorrespondenceMatrix out;
    out.C = dual_softmax_from_logits(S, c);
    out.S = std::move(S);
    out.channels = c;
    return out;
}

Assignment mnn_filter(const Tensor& C, double theta) {
    if (C.ndim() != 2) throw ShapeError("mnn_filter expects a matrix");
    const int n1 = C.dim(0), n2 = C.dim(1);
    std::vector<int> row_arg(static_cast<size_t>(n1), 0), col_arg(static_cast<size_t>(n2), 0);
    for (int i = 0; i < n1; ++i)
        for (int j = 1; j < n2; ++j)
            if (C.at2(i, j) > C.at2(i, row_arg[static_cast<size_t>(i)])) row_arg[static_cast<size_t>(i)] = j;
    for (int j = 0; j < n2; ++j)
        for (int i = 1; i < n1; ++i)
            if (C.at2(i, j) > C.at2(col_arg[static_cast<size_t>(j)], j)) col_arg[static_cast<size_t>(j)] = i;

    Assignment out;
    for (int i = 0; i < n1; ++i) {
        const int j = row_arg[static_cast<size_t>(i)];
        if (col_arg[static_cast<size_t>(j)] == i && C.at2(i, j) >= theta) out.push_back({i, j});
    }
    return out;
}

PrfResult correspondence_prf(const Assignment& pred, const Assignment& gt) {
    std::set<std::pair<int, int>> gtset(gt.begin(), gt.end());
    PrfResult r;
    for (const auto& p : pred)
        if (gtset.count(p)) ++r.true_positives;
    r.precision = pred.empty() ? 0.0 : static_cast<double>(r.true_positives) / pred.size();
    r.recall = gt.empty() ? 0.0 : static_cast<double>(r.true_positives) / gt.size();
    r.f_score = (r.precision + r.recall) > 0.0
                    ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
                    : 0.0;
    return r;
}

}  // namespace planeq::match
