#include "planeq/planehead.hpp"

namespace planeq::head {

using diff::Graph;
using diff::NodeId;

DecodedProperties decode_properties(Graph& g, ParamStore& ps, NodeId e_plane, int c_embed) {
    if (g.value(e_plane).ndim() != 2 || g.value(e_plane).dim(1) != c_embed)
        throw ShapeError("decode_properties expects [N, c_embed] embeddings");
    DecodedProperties out;
    out.prob_logits = diff::mlp2(g, ps, "head.prob", e_plane, c_embed, c_embed, 1);
    out.probs = g.sigmoid(out.prob_logits);
    out.params = diff::mlp2(g, ps, "head.param", e_plane, c_embed, c_embed, 3);
    out.mask_emb = diff::mlp2(g, ps, "head.mask", e_plane, c_embed, c_embed, c_embed);
    out.depth_emb = diff::mlp2(g, ps, "head.depth", e_plane, c_embed, c_embed, c_embed);
    return out;
}

MaskDepthMaps decode_masks_depths(Graph& g, NodeId mask_emb, NodeId depth_emb, NodeId e_pixel) {
    const Tensor& pix = g.value(e_pixel);
    if (pix.ndim() != 2 || g.value(mask_emb).dim(1) != pix.dim(0) ||
        g.value(depth_emb).dim(1) != pix.dim(0))
        throw ShapeError("embedding channels do not match the pixel embedding");
    MaskDepthMaps out;
    out.mask_logits = g.matmul(mask_emb, e_pixel);
    out.mask_probs = g.sigmoid(out.mask_logits);
    out.depths = g.matmul(depth_emb, e_pixel);
    return out;
}

InferenceResult monocular_infer(const std::vector<match::PredictedPlane>& preds,
                                const geo::CameraIntrinsics& cam, double p_keep, double m_bg) {
    if (preds.empty()) throw ContractError("monocular_infer needs at least one prediction");
    const size_t hw = preds[0].mask.size();
    if (hw != static_cast<size_t>(cam.width * cam.height))
        throw ShapeError("mask grid does not match intrinsics");

    InferenceResult out;
    for (size_t i = 0; i < preds.size(); ++i)
        if (preds[i].prob > p_keep) out.kept.push_back(static_cast<int>(i));

    out.segmentation.assign(hw, -1);
    out.depth.assign(hw, 0.0);
    out.invalid.assign(hw, 0);
    if (out.kept.empty()) return out;

    for (size_t px = 0; px < hw; ++px) {
        int best = -1;
        double best_v = -1.0;
        for (size_t k = 0; k < out.kept.size(); ++k) {
            const double v = preds[static_cast<size_t>(out.kept[k])].mask[px];
            if (v > best_v) {
                best_v = v;
                best = static_cast<int>(k);
            }
        }
        if (best_v >= m_bg) out.segmentation[px] = best;
    }

    // Planar depth from parameters and segmentation only. A zero or
    // back-facing parameter flags the pixel instead of rendering.
    std::vector<geo::PlaneParam> params;
    params.reserve(out.kept.size());
    for (int k : out.kept) {
        geo::Vec3 n = preds[static_cast<size_t>(k)].param;
        if (n.norm() == 0.0) n = {0.0, 0.0, geo::kDegeneratePlaneEps};
        params.push_back(geo::PlaneParam(n));
    }
    const auto dm = geo::depth_map_from_planes(out.segmentation, params, cam);
    out.depth = dm.depth;
    out.invalid = dm.invalid;
    return out;
}

}  // namespace planeq::head
