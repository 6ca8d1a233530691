#pragma once

#include <string>

#include "planeq/attention.hpp"
#include "planeq/planehead.hpp"
#include "planeq/synth.hpp"

namespace planeq::model {

// Desk-scale network: a linear pixel featurizer, a two-layer cross-attention
// query decoder producing the unified plane embeddings, four property heads,
// and the two-direction pose module.
struct ModelConfig {
    attn::AttentionConfig attn;   // c_embed 64, 4 value heads, unsplit qk
    int n_queries = 8;
    int grid_h = 24, grid_w = 32;
    int decoder_layers = 2;
    int pca_layers = 2;
    int mlp_hidden = 64;   // pose MLP hidden width
    double p_keep = 0.5;   // plane probability filter
    double m_bg = 0.5;     // background mask threshold

    int hw() const { return grid_h * grid_w; }
    void validate() const {
        attn.validate();
        if (n_queries < 1 || grid_h < 1 || grid_w < 1 || decoder_layers < 1 || pca_layers < 1 ||
            mlp_hidden < 1)
            throw ConfigError("model dimensions must be positive");
    }
};

std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);

struct MonoForward {
    diff::NodeId raw_input;  // [HW, 8] leaf; swap per sample and recompute
    diff::NodeId e_plane;    // [N, C]
    diff::NodeId e_pixel;    // [C, HW]
    head::DecodedProperties props;
    head::MaskDepthMaps maps;
};

// raw: [HW, 8] featurized pixels for one view.
MonoForward mono_forward(diff::Graph& g, ParamStore& ps, const Tensor& raw,
                         const ModelConfig& cfg);

struct PairForward {
    MonoForward view[2];
    attn::PoseForwardOutput pose;
};

PairForward pair_forward(diff::Graph& g, ParamStore& ps, const Tensor& raw0, const Tensor& raw1,
                         const ModelConfig& cfg);

// Plain per-query values for matching, inference and evaluation.
std::vector<match::PredictedPlane> extract_predictions(const diff::Graph& g,
                                                       const MonoForward& fwd);

geo::PoseSE3 extract_pose(const diff::Graph& g, const attn::PoseForwardOutput& pose);

// Ground truth of one view in the form the losses consume.
loss::MonoGroundTruth mono_ground_truth(const synth::ViewGt& gt);
std::vector<match::GroundTruthPlane> matchable_ground_truth(const synth::ViewGt& gt);

}  // namespace planeq::model
