#pragma once

#include <string>
#include <vector>

#include "planeq/evalpipe.hpp"
#include "planeq/train.hpp"

namespace planeq::exp {

// Finite-difference verification of every registered op plus the end-to-end
// loss graphs (monocular loss through the toy decoder and heads; pose loss
// through the pose module), on reduced shapes so the whole suite stays within
// a small single-core budget.
struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    double budget = 1e-4;
    bool pass() const { return max_rel_err <= budget; }
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    bool ok() const {
        for (const auto& e : entries)
            if (!e.pass()) return false;
        return true;
    }
};

GradCheckReport run_gradcheck_suite(uint64_t seed = 1, int instances = 10);

// One gated acceptance criterion with its measured value and threshold.
struct GateResult {
    std::string name;
    double measured = 0.0;
    double threshold = 0.0;
    bool at_least = true;  // pass when measured >= threshold (else <=)
    bool pass = false;
    std::string detail;
};

struct BenchmarkReport {
    eval::EvalReport trained;
    eval::EvalReport untrained;      // fresh zero-initialized pose head
    metrics::PoseStats identity_baseline;
    double random_precision = 0.0, random_recall = 0.0, random_f = 0.0;
    std::vector<GateResult> gates;
    uint64_t config_hash = 0;

    bool all_pass() const {
        for (const auto& g : gates)
            if (!g.pass) return false;
        return true;
    }
};

// Trained-vs-baseline benchmark over the test split: pose statistics against
// the identity baseline, MNN correspondence against a random-matching
// baseline, monocular recall against the untrained model, plus the gate
// verdicts.
BenchmarkReport run_pose_benchmark(const std::string& dataset_root,
                                   const std::string& joint_checkpoint,
                                   const eval::EvalOptions& options, int random_draws = 100);

std::string benchmark_to_json(const BenchmarkReport& r);
std::string benchmark_to_markdown(const BenchmarkReport& r);

// Ablation sweep: joint training restarted from the monocular checkpoint for
// each variant, evaluated on the test split. Directionality (full >= ablated)
// is reported, not gated.
struct AblationRow {
    std::string variant;
    eval::EvalReport report;
};

struct AblationReport {
    std::vector<AblationRow> rows;
    std::vector<std::string> notes;
    uint64_t config_hash = 0;
};

AblationReport run_ablations(const train::TrainConfig& base, const std::string& mono_checkpoint,
                             const std::string& out_dir, const eval::EvalOptions& options);

std::string ablation_to_json(const AblationReport& r);
std::string ablation_to_markdown(const AblationReport& r);

}  // namespace planeq::exp
