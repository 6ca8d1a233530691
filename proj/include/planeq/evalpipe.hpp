#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "planeq/metrics.hpp"
#include "planeq/model.hpp"
#include "planeq/train.hpp"

namespace planeq::eval {

struct EvalOptions {
    std::vector<double> theta_sweep = {0.05, 0.1, 0.2};
    int gate_theta_index = 1;        // theta = 0.1 drives the gated numbers
    bool average_directions = false; // average C(1->2) with C(2->1)^T for MNN
    bool gt_as_predictions = false;  // oracle mode: feed ground truth through the metrics
    double feature_noise = -1.0;     // < 0: dataset sigma
    int threads = 0;
};

// AP tiers: (30 deg, 1 m), (15 deg, 0.5 m), (5 deg, 0.2 m).
inline constexpr int kApTiers = 3;
inline constexpr double kApNormalDeg[kApTiers] = {30.0, 15.0, 5.0};
inline constexpr double kApOffsetM[kApTiers] = {1.0, 0.5, 0.2};

struct ApRow {
    double all = 0.0;
    double no_offset = 0.0;  // offset condition dropped
    double no_normal = 0.0;  // normal condition dropped
};

struct CorrStats {
    double theta = 0.0;
    double precision = 0.0, recall = 0.0, f_score = 0.0;
    long true_positives = 0;
    long predicted = 0, actual = 0;
};

struct EvalReport {
    int pairs = 0;
    // monocular (averaged over all evaluated views)
    metrics::SegMetrics seg;
    metrics::ParamErrors params;
    metrics::RecallCurves recalls;       // aggregated counts -> percentages
    // pose
    metrics::PoseStats pose;
    double mean_pose_loss = 0.0;         // heldout geodesic objective
    // correspondence at each swept theta
    std::vector<CorrStats> corr;
    // 3-D plane AP per tier
    std::array<ApRow, kApTiers> ap;

    const CorrStats& gated_corr(int index) const { return corr[static_cast<size_t>(index)]; }
};

// Evaluates a checkpoint (or the ground truth itself) over the test split.
EvalReport evaluate_dataset(const std::string& dataset_root,
                            const std::optional<train::Checkpoint>& ckpt,
                            const EvalOptions& options);

// Same, over preloaded scenes (used by the experiment harness).
EvalReport evaluate_scenes(const std::vector<synth::SceneSample>& scenes,
                           const std::optional<train::Checkpoint>& ckpt, double dataset_sigma,
                           const EvalOptions& options);

std::string report_to_json(const EvalReport& r);

// Per-pair artifacts for the match/reconstruct commands.
struct PairArtifacts {
    Tensor corr_12, corr_21;             // dual-softmax matrices (head-averaged if split)
    Tensor sim_12, sim_21;               // raw logits
    match::Assignment mnn;               // query-index pairs at the gate theta
    geo::PoseSE3 pred_pose;
    std::vector<match::PredictedPlane> preds[2];
    head::InferenceResult infer[2];
};

PairArtifacts pair_artifacts(const synth::SceneSample& scene, const train::Checkpoint& ckpt,
                             double sigma, double theta, bool average_directions);

// ASCII PLY export of the fused two-view reconstruction plus camera frusta.
void write_reconstruction_ply(const std::string& path, const synth::SceneSample& scene,
                              const train::Checkpoint& ckpt, double sigma, double theta);

}  // namespace planeq::eval
