#pragma once

#include <string>
#include <vector>

#include "planeq/synth.hpp"

namespace planeq::data {

// On-disk layout under one root directory:
//   manifest.json            config, split listing, content hashes
//   scenes/NNNN.json         geometry, poses, per-view plane parameters
//   tensors/NNNN.bin         seg/depth maps for both views (named records)
// Scene files are numbered by file ordinal across train-then-test; the
// manifest maps ordinals to generator stream indices. Test scenes draw from a
// disjoint stream-index block.

inline constexpr int kTestStreamOffset = 1000000;

struct SceneRef {
    int ordinal = 0;
    int stream_index = 0;
    bool is_test = false;
};

struct DatasetInfo {
    synth::GenConfig config;
    int n_train = 0, n_test = 0;
    std::vector<SceneRef> scenes;
};

std::string scene_json_path(const std::string& root, int ordinal);
std::string scene_bin_path(const std::string& root, int ordinal);

// Generates and writes the full benchmark; returns the manifest info.
DatasetInfo make_dataset(const synth::GenConfig& cfg, int n_train, int n_test,
                         const std::string& root);

DatasetInfo read_manifest(const std::string& root);

// Loads one scene from its files (depth maps carry f32 precision).
synth::SceneSample load_scene(const std::string& root, const DatasetInfo& info, int ordinal);

// Serialization used by both the writer and tests.
void write_scene_files(const std::string& root, int ordinal, const synth::SceneSample& s);

}  // namespace planeq::data
