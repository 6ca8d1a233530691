#pragma once

#include <utility>
#include <vector>

#include "planeq/geometry.hpp"
#include "planeq/graph.hpp"
#include "planeq/tensor.hpp"

namespace planeq::loss {

// Weighting constants for training objectives.
struct LossWeights {
    double lambda = 2.0;                       // cls / depth weight in the mono total
    double omega1 = 2.0, omega2 = 1.0, omega3 = 2.0, omega4 = 5.0, omega5 = 5.0;  // match cost
    double beta1 = 5.0, beta2 = 5.0;           // mask loss: bce / dice
    double lambda_t = 5.0, lambda_q = 15.0;    // pose loss
    double w_noplane = 0.1;                    // down-weight for non-plane cls terms
    double mono_scale_joint = 0.1;             // mono loss scale during the joint phase

    void validate() const {
        const double vals[] = {lambda, omega1, omega2, omega3, omega4, omega5,
                               beta1,  beta2,  lambda_t, lambda_q, w_noplane, mono_scale_joint};
        for (double v : vals)
            if (v <= 0.0) throw ContractError("loss weights must be positive");
    }
};

// Probabilities are clamped to [sigmoid(-15), sigmoid(15)] inside BCE terms,
// which is the logit-clamp convention: perfect binary inputs give a loss of
// order 1e-6 rather than infinity.
inline constexpr double kBceLogitClamp = 15.0;
inline constexpr double kDiceEps = 1e-6;

double bce_prob_clamp_lo();
double bce_prob_clamp_hi();

// --- plain-value formulas (shared by the matching cost and evaluation) ---

// Mean binary cross entropy between probability vector m and binary target.
double bce_value(const std::vector<double>& m, const std::vector<double>& target);

// 1 - 2 sum(m t) / (sum m + sum t + eps).
double dice_value(const std::vector<double>& m, const std::vector<double>& target);

// Mean |d - d_gt| over positive-mask pixels; 0 for an empty mask.
double masked_l1_value(const std::vector<double>& d, const std::vector<double>& d_gt,
                       const std::vector<double>& mask);

double mask_loss_value(const std::vector<double>& m, const std::vector<double>& target,
                       const LossWeights& w = {});

// lambda_t |rho| + lambda_q |phi| of log(T^-1 T*).
double pose_loss_value(const geo::PoseSE3& T, const geo::PoseSE3& T_star,
                       const LossWeights& w = {});

// --- graph builders (training path) ---

// beta1 BCE + beta2 dice on a soft-mask node against a constant binary target.
diff::NodeId mask_loss_node(diff::Graph& g, diff::NodeId mask_probs, const Tensor& target,
                            const LossWeights& w = {});

// Masked mean absolute depth error; target/mask are constants.
diff::NodeId depth_loss_node(diff::Graph& g, diff::NodeId depth, const Tensor& depth_gt,
                             const Tensor& mask_gt);

// BCE over per-query probabilities with per-query weights (w_noplane applied
// to non-plane slots by the caller through `weights`), normalized by the
// query count.
diff::NodeId cls_loss_node(diff::Graph& g, diff::NodeId probs, const Tensor& targets,
                           const Tensor& weights);

// Mean over matched planes of the L1 distance between parameter rows.
diff::NodeId param_loss_node(diff::Graph& g, diff::NodeId params, const Tensor& gt_params);

struct MonoLossInputs {
    diff::NodeId probs;        // [N] or [N,1] plane probabilities
    diff::NodeId params;       // [N,3]
    diff::NodeId mask_probs;   // [N, HW] soft masks
    diff::NodeId depths;       // [N, HW]
};

struct MonoGroundTruth {
    // per real plane, aligned vectors
    std::vector<geo::Vec3> params;
    std::vector<std::vector<double>> masks;    // binary, [HW]
    std::vector<double> depth;                 // full gt depth map [HW]
};

struct MonoLossParts {
    diff::NodeId total;
    diff::NodeId cls;
    diff::NodeId param;
    diff::NodeId mask;
    diff::NodeId depth;
};

// Total monocular objective for a fixed assignment: lambda*cls + param + mask
// + lambda*depth. `assignment` holds (prediction index, gt index) pairs.
MonoLossParts total_mono_loss(diff::Graph& g, const MonoLossInputs& pred,
                              const MonoGroundTruth& gt,
                              const std::vector<std::pair<int, int>>& assignment,
                              const LossWeights& w = {});

// Differentiable geodesic pose loss between a predicted pose given as graph
// nodes (q [4] unit, t [3]) and a constant ground-truth pose.
diff::NodeId pose_loss_node(diff::Graph& g, diff::NodeId q_pred, diff::NodeId t_pred,
                            const geo::PoseSE3& gt, const LossWeights& w = {});

// Quaternion product node: both inputs are [4] (w,x,y,z).
diff::NodeId quat_mul_node(diff::Graph& g, diff::NodeId a, diff::NodeId b);
// Rotate a [3] vector by a [4] unit quaternion.
diff::NodeId quat_rotate_node(diff::Graph& g, diff::NodeId q, diff::NodeId v);
// Conjugate of a [4] quaternion.
diff::NodeId quat_conj_node(diff::Graph& g, diff::NodeId q);
// Cross product of two [3] vectors.
diff::NodeId cross_node(diff::Graph& g, diff::NodeId a, diff::NodeId b);

}  // namespace planeq::loss
