#pragma once

#include <vector>

#include "planeq/geometry.hpp"
#include "planeq/tensor.hpp"

namespace planeq::metrics {

struct SegMetrics {
    double vi = 0.0;  // variation of information, nats
    double ri = 0.0;  // rand index
    double sc = 0.0;  // segmentation covering of gt by prediction
};

// Labels are partition ids; any value (including -1 background) is its own
// segment. Throws on empty or mismatched inputs.
SegMetrics seg_metrics(const std::vector<int>& pred, const std::vector<int>& gt);

// Plane with a binary mask over the evaluation grid.
struct EvalPlane {
    geo::Vec3 param;            // n = n_hat / d
    std::vector<double> mask;   // binary
};

struct RecallCurve {
    std::vector<double> thresholds;
    std::vector<double> per_plane;  // percentages
    std::vector<double> per_pixel;
    // raw counts for cross-scene aggregation
    std::vector<double> recalled_planes, recalled_pixels;
    double n_planes = 0.0, n_pixels = 0.0;

    void merge(const RecallCurve& o);
    void refresh_percentages();
};

struct RecallCurves {
    RecallCurve depth;   // 0.05 .. 0.6 m step 0.05
    RecallCurve normal;  // 2.5 .. 30 deg step 2.5
};

// A gt plane is recalled at threshold tau when some prediction overlaps it
// with mask IoU >= 0.5 and (mean planar depth error over the gt mask <= tau_d
// | normal angle <= tau_n). Per-pixel recall weights recalled planes by their
// gt pixel count.
RecallCurves plane_recalls(const std::vector<EvalPlane>& preds,
                           const std::vector<EvalPlane>& gts,
                           const std::vector<double>& gt_depth,
                           const geo::CameraIntrinsics& cam);

struct ParamErrors {
    double mean_normal_deg = 0.0;
    double mean_offset_mm = 0.0;
    int matched = 0;
};

// Optimal L1 matching between parameter sets, then mean angular and offset
// errors over the matched pairs.
ParamErrors param_errors(const std::vector<geo::Vec3>& preds, const std::vector<geo::Vec3>& gts);

struct ApDetection {
    double score = 0.0;
    geo::Vec3 param;
    std::vector<double> mask;  // binary, same domain as the gt masks
};

struct ApTier {
    double max_normal_deg = 30.0;
    double max_offset_m = 1.0;
    bool use_normal = true;   // "-Normal" drops the offset condition instead
    bool use_offset = true;
};

// Average precision with score-sorted greedy matching; a true positive needs
// mask IoU >= 0.5 plus the tier's active normal/offset conditions. All-point
// interpolation over the precision envelope.
double reconstruction_ap(const std::vector<ApDetection>& detections,
                         const std::vector<EvalPlane>& gts, const ApTier& tier);

// Area under the interpolated precision envelope for detections already
// sorted by descending score.
double average_precision(const std::vector<char>& is_tp_in_score_order, double n_gt);

// True-positive conditions shared by the AP variants.
bool ap_conditions_hold(const geo::Vec3& det_param, const geo::Vec3& gt_param,
                        const ApTier& tier);

struct PoseStats {
    double rot_median_deg = 0.0, rot_mean_deg = 0.0;
    double trans_median_m = 0.0, trans_mean_m = 0.0;
    // percentages of errors at or below the fixed thresholds
    double trans_pct[3] = {0, 0, 0};  // <= 1 m, 0.5 m, 0.2 m
    double rot_pct[3] = {0, 0, 0};    // <= 30 deg, 15 deg, 10 deg
};

inline constexpr double kTransThresholds[3] = {1.0, 0.5, 0.2};
inline constexpr double kRotThresholdsDeg[3] = {30.0, 15.0, 10.0};

// Rotation error 2 acos(|<q_pred, q_gt>|) in degrees, translation error
// |t_pred - t_gt| in meters; medians, means, threshold percentages.
PoseStats pose_stats(const std::vector<geo::PoseSE3>& pred, const std::vector<geo::PoseSE3>& gt);

double rotation_error_deg(const geo::PoseSE3& a, const geo::PoseSE3& b);
double translation_error_m(const geo::PoseSE3& a, const geo::PoseSE3& b);
double mask_iou(const std::vector<double>& a, const std::vector<double>& b);
double median(std::vector<double> xs);

}  // namespace planeq::metrics
