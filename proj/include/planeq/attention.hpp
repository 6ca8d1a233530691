#pragma once

#include <string>
#include <vector>

#include "planeq/params.hpp"

namespace planeq::attn {

// Cross-attention configuration. Values are always split into n_heads
// segments; queries/keys stay unsplit (qk_heads = 1) unless the split
// ablation is requested (qk_heads = n_heads).
struct AttentionConfig {
    int c_embed = 64;
    int n_heads = 4;
    int qk_heads = 1;
    bool cross_embeddings = true;

    void validate() const {
        if (c_embed <= 0 || n_heads <= 0) throw ConfigError("attention dims must be positive");
        if (c_embed % n_heads != 0) throw ConfigError("c_embed must be divisible by n_heads");
        if (qk_heads != 1 && qk_heads != n_heads)
            throw ConfigError("qk_heads must be 1 or n_heads");
        if (c_embed % qk_heads != 0) throw ConfigError("c_embed must be divisible by qk_heads");
    }
    int head_dim() const { return c_embed / n_heads; }
};

enum class AblationVariant { Full, SplitQk, SingleValueHead, NoCrossEmbeddings };

const char* ablation_name(AblationVariant v);

// Preset for one ablation axis applied to a base configuration.
AttentionConfig ablation_config(AttentionConfig base, AblationVariant v);

// Standard multi-head scaled-dot-product cross attention on already-projected
// inputs: per head softmax(q k^T / sqrt(C/H)) v, heads concatenated and
// linearly projected. q: [Nq,C], k,v: [Nk,C].
diff::NodeId mca(diff::Graph& g, ParamStore& ps, const std::string& prefix, diff::NodeId q,
                 diff::NodeId k, diff::NodeId v, int n_heads);

struct PcaOutput {
    diff::NodeId pose_feature;      // [H, C/H, C/H]
    diff::NodeId feature_flat;      // [1, C*C/H]
    std::vector<diff::NodeId> corr; // dual-softmax matrices (qk_heads of them)
    std::vector<diff::NodeId> sim;  // raw logits matching corr
    diff::NodeId a_next;            // residual-updated embeddings for stacking
    diff::NodeId b_next;
};

// Plane-aware bilinear cross attention layer between two embedding sets
// e_a: [Na,C], e_b: [Nb,C]. Queries/keys are linear maps of the inputs;
// values are split into heads and contracted through the dual-softmax
// correspondence: head h yields (v_a^h)^T C v_b^h. With cross_embeddings off,
// both value sides come from e_a (resp. e_b for the mirrored direction) while
// the correspondence stays cross-view.
PcaOutput pca(diff::Graph& g, ParamStore& ps, const std::string& prefix, diff::NodeId e_a,
              diff::NodeId e_b, const AttentionConfig& cfg);

struct PoseForwardOutput {
    diff::NodeId q;    // [4] unit quaternion, w >= 0
    diff::NodeId t;    // [3] meters
    std::vector<diff::NodeId> corr_12, sim_12;  // last layer, direction 1->2
    std::vector<diff::NodeId> corr_21, sim_21;  // last layer, direction 2->1
};

// Two stacked plane-aware cross attention layers per direction; the two
// direction features are concatenated and mapped to (t, q) by an MLP with two
// hidden layers. The final layer starts at zero with an identity-quaternion
// bias, so a fresh model predicts the identity pose.
PoseForwardOutput pose_module_forward(diff::Graph& g, ParamStore& ps, diff::NodeId e1,
                                      diff::NodeId e2, const AttentionConfig& cfg,
                                      int mlp_hidden, int pca_layers = 2);

}  // namespace planeq::attn
