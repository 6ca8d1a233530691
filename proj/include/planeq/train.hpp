#pragma once

#include <functional>
#include <string>
#include <vector>

#include "planeq/dataset.hpp"
#include "planeq/losses.hpp"
#include "planeq/model.hpp"
#include "planeq/optimizer.hpp"

namespace planeq::train {

struct TrainConfig {
    std::string dataset_root;
    std::string out_dir;
    std::string init_checkpoint;  // joint phase: monocular checkpoint to start from
    bool from_scratch = false;    // joint phase may skip the monocular checkpoint
    uint64_t seed = 1;
    int epochs = 30;
    int batch_size = 16;
    int threads = 0;              // 0 = hardware concurrency
    double feature_noise = -1.0;  // < 0: use the dataset's configured sigma
    AdamWConfig opt;
    loss::LossWeights weights;
    model::ModelConfig model;
};

struct EpochStats {
    int epoch = 0;
    double total = 0.0;
    double cls = 0.0, param = 0.0, mask = 0.0, depth = 0.0;
    double pose = 0.0;  // joint phase only
};

struct TrainResult {
    std::vector<EpochStats> epochs;
    std::string checkpoint_path;
};

// Monocular pre-training over every view of the train split; writes
// <out_dir>/mono.ckpt and <out_dir>/mono_loss.csv.
TrainResult train_mono(const TrainConfig& cfg);

// Joint phase over train pairs: pose loss plus the scaled monocular losses of
// both views; writes <out_dir>/joint.ckpt and <out_dir>/joint_loss.csv.
TrainResult train_pose(const TrainConfig& cfg);

// Checkpoint container: model configuration plus all parameters (f32 on disk).
struct Checkpoint {
    model::ModelConfig model;
    ParamStore params;
};

void save_checkpoint(const std::string& path, const model::ModelConfig& cfg,
                     const ParamStore& params);
Checkpoint load_checkpoint(const std::string& path);

bool model_config_mismatch(const model::ModelConfig& a, const model::ModelConfig& b);

// Deterministic in-memory loading of a dataset split.
std::vector<synth::SceneSample> load_split(const std::string& root, const data::DatasetInfo& info,
                                           bool test_split);

// Runs `fn(i)` for i in [0, n) on up to `threads` workers. Results must be
// written to per-index slots by the callback; the call returns after all
// indices complete, so a deterministic in-order reduce can follow.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

}  // namespace planeq::train
