#pragma once

#include <utility>
#include <vector>

#include "planeq/geometry.hpp"
#include "planeq/losses.hpp"
#include "planeq/tensor.hpp"

namespace planeq::match {

// One-to-one pairing; injective in both coordinates.
using Assignment = std::vector<std::pair<int, int>>;

// Plain per-query prediction values used for matching and evaluation.
struct PredictedPlane {
    double prob = 0.0;
    geo::Vec3 param;
    std::vector<double> mask;    // soft, [HW]
    std::vector<double> depth;   // meters, [HW]
};

// Ground-truth plane with its binary mask; depth is the full view depth map
// (only mask-positive pixels are read).
struct GroundTruthPlane {
    geo::Vec3 param;
    std::vector<double> mask;    // binary, [HW]
};

// Eq-style matching cost between one prediction and one real ground-truth
// plane: -w1 p + w2 L1(params) + w3 masked-depth L1 + w4 BCE + w5 dice.
// An augmented non-plane slot costs 0 regardless of the prediction.
double matching_cost(const PredictedPlane& pred, const GroundTruthPlane& gt,
                     const std::vector<double>& gt_depth, const loss::LossWeights& w = {});

struct HungarianResult {
    std::vector<int> col_of_row;  // row -> assigned column
    double total = 0.0;
};

// Exact minimum-cost perfect matching on a square matrix
// (shortest-augmenting-path variant, O(n^3)). Non-finite entries are a
// contract error.
HungarianResult hungarian(const Tensor& cost);

// Matches N predictions against M <= N ground-truth planes after padding the
// ground truth with non-plane slots. Returns (prediction index, gt index)
// pairs for the real planes only, sorted by prediction index.
Assignment bipartite_match(const std::vector<PredictedPlane>& preds,
                           const std::vector<GroundTruthPlane>& gts,
                           const std::vector<double>& gt_depth,
                           const loss::LossWeights& w = {});

// Dual-softmax correspondence probabilities. S is kept so the matrix can be
// re-derived and verified.
struct CorrespondenceMatrix {
    Tensor S;       // raw similarity logits, N1 x N2
    Tensor C;       // row-softmax(S/sqrt(c)) * col-softmax(S/sqrt(c))
    int channels;   // C_E used in the temperature
};

// C recomputed from logits; the same op sequence as the attention graph, so
// reconstruction is bit-exact.
Tensor dual_softmax_from_logits(const Tensor& S, int channels);

CorrespondenceMatrix dual_softmax(const Tensor& Q, const Tensor& K);

// Mutual-nearest-neighbor hard assignment: keep (m, n) iff C[m,n] >= theta
// and (m, n) is simultaneously the first-index argmax of row m and column n.
Assignment mnn_filter(const Tensor& C, double theta);

struct PrfResult {
    double precision = 0.0;
    double recall = 0.0;
    double f_score = 0.0;
    int true_positives = 0;
};

PrfResult correspondence_prf(const Assignment& pred, const Assignment& gt);

}  // namespace planeq::match
