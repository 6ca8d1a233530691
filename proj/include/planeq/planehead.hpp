#pragma once

#include <vector>

#include "planeq/geometry.hpp"
#include "planeq/matching.hpp"
#include "planeq/params.hpp"

namespace planeq::head {

// Four per-query property heads projected from the unified plane embeddings:
// plane probability, plane parameter, mask embedding, depth embedding. Each
// head is an MLP with two relu hidden layers of width c_embed.
struct DecodedProperties {
    diff::NodeId prob_logits;  // [N, 1]
    diff::NodeId probs;        // [N, 1] sigmoid
    diff::NodeId params;       // [N, 3]
    diff::NodeId mask_emb;     // [N, C]
    diff::NodeId depth_emb;    // [N, C]
};

DecodedProperties decode_properties(diff::Graph& g, ParamStore& ps, diff::NodeId e_plane,
                                    int c_embed);

// Per-query dense maps by dot product against the shared pixel embedding
// (e_pixel: [C, HW]): masks through a sigmoid, depths unbounded.
struct MaskDepthMaps {
    diff::NodeId mask_logits;  // [N, HW]
    diff::NodeId mask_probs;   // [N, HW]
    diff::NodeId depths;       // [N, HW]
};

MaskDepthMaps decode_masks_depths(diff::Graph& g, diff::NodeId mask_emb, diff::NodeId depth_emb,
                                  diff::NodeId e_pixel);

struct InferenceResult {
    std::vector<int> kept;          // query indices with p > p_keep
    std::vector<int> segmentation;  // HW entries; index into `kept`, -1 background
    std::vector<double> depth;      // HW planar depth from parameters + segmentation
    std::vector<char> invalid;      // planar pixels whose ray missed the plane
};

// Monocular inference: probability filter, per-pixel argmax over kept masks,
// background threshold, then depth rendered from plane parameters and the
// segmentation. The depth head plays no role here.
InferenceResult monocular_infer(const std::vector<match::PredictedPlane>& preds,
                                const geo::CameraIntrinsics& cam, double p_keep = 0.5,
                                double m_bg = 0.5);

}  // namespace planeq::head
