#include "planeq/model.hpp"

#include <json.hpp>

namespace planeq::model {

using diff::Graph;
using diff::NodeId;
using nlohmann::json;

std::string model_config_to_json(const ModelConfig& cfg) {
    json j{{"c_embed", cfg.attn.c_embed},
           {"n_heads", cfg.attn.n_heads},
           {"qk_heads", cfg.attn.qk_heads},
           {"cross_embeddings", cfg.attn.cross_embeddings},
           {"n_queries", cfg.n_queries},
           {"grid_h", cfg.grid_h},
           {"grid_w", cfg.grid_w},
           {"decoder_layers", cfg.decoder_layers},
           {"pca_layers", cfg.pca_layers},
           {"mlp_hidden", cfg.mlp_hidden},
           {"p_keep", cfg.p_keep},
           {"m_bg", cfg.m_bg}};
    return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("model config parse failure: ") + e.what());
    }
    ModelConfig cfg;
    cfg.attn.c_embed = j.at("c_embed").get<int>();
    cfg.attn.n_heads = j.at("n_heads").get<int>();
    cfg.attn.qk_heads = j.at("qk_heads").get<int>();
    cfg.attn.cross_embeddings = j.at("cross_embeddings").get<bool>();
    cfg.n_queries = j.at("n_queries").get<int>();
    cfg.grid_h = j.at("grid_h").get<int>();
    cfg.grid_w = j.at("grid_w").get<int>();
    cfg.decoder_layers = j.at("decoder_layers").get<int>();
    cfg.pca_layers = j.at("pca_layers").get<int>();
    cfg.mlp_hidden = j.at("mlp_hidden").get<int>();
    cfg.p_keep = j.at("p_keep").get<double>();
    cfg.m_bg = j.at("m_bg").get<double>();
    cfg.validate();
    return cfg;
}

MonoForward mono_forward(Graph& g, ParamStore& ps, const Tensor& raw, const ModelConfig& cfg) {
    cfg.validate();
    if (raw.ndim() != 2 || raw.dim(0) != cfg.hw() || raw.dim(1) != synth::kRawFeatureChannels)
        throw ShapeError("mono_forward expects [HW, 8] raw features");
    const int c = cfg.attn.c_embed;

    MonoForward out;
    NodeId raw_node = g.input(raw, "raw");
    out.raw_input = raw_node;
    NodeId tokens = diff::linear(g, ps, "enc.token", raw_node, synth::kRawFeatureChannels, c);
    NodeId pix = diff::linear(g, ps, "enc.pixel", raw_node, synth::kRawFeatureChannels, c);

    // learnable plane queries refined against the pixel tokens
    NodeId e = g.parameter("dec.queries",
                           ps.fetch("dec.queries", {cfg.n_queries, c}, c));
    for (int l = 0; l < cfg.decoder_layers; ++l) {
        const std::string prefix = "dec.l" + std::to_string(l);
        NodeId q = diff::linear(g, ps, prefix + ".q", e, c, c);
        e = g.add(e, attn::mca(g, ps, prefix, q, tokens, tokens, cfg.attn.n_heads));
    }

    out.e_plane = e;
    out.e_pixel = g.transpose(pix);
    out.props = head::decode_properties(g, ps, e, c);
    out.maps = head::decode_masks_depths(g, out.props.mask_emb, out.props.depth_emb, out.e_pixel);
    return out;
}

PairForward pair_forward(Graph& g, ParamStore& ps, const Tensor& raw0, const Tensor& raw1,
                         const ModelConfig& cfg) {
    PairForward out;
    out.view[0] = mono_forward(g, ps, raw0, cfg);
    out.view[1] = mono_forward(g, ps, raw1, cfg);
    out.pose = attn::pose_module_forward(g, ps, out.view[0].e_plane, out.view[1].e_plane,
                                         cfg.attn, cfg.mlp_hidden, cfg.pca_layers);
    return out;
}

std::vector<match::PredictedPlane> extract_predictions(const Graph& g, const MonoForward& fwd) {
    const Tensor& probs = g.value(fwd.props.probs);
    const Tensor& params = g.value(fwd.props.params);
    const Tensor& masks = g.value(fwd.maps.mask_probs);
    const Tensor& depths = g.value(fwd.maps.depths);
    const int n = probs.dim(0), hw = masks.dim(1);

    std::vector<match::PredictedPlane> out(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        auto& p = out[static_cast<size_t>(i)];
        p.prob = probs[i];
        p.param = {params.at2(i, 0), params.at2(i, 1), params.at2(i, 2)};
        p.mask.assign(masks.vec().begin() + static_cast<long>(i) * hw,
                      masks.vec().begin() + static_cast<long>(i + 1) * hw);
        p.depth.assign(depths.vec().begin() + static_cast<long>(i) * hw,
                       depths.vec().begin() + static_cast<long>(i + 1) * hw);
    }
    return out;
}

geo::PoseSE3 extract_pose(const Graph& g, const attn::PoseForwardOutput& pose) {
    const Tensor& q = g.value(pose.q);
    const Tensor& t = g.value(pose.t);
    return geo::PoseSE3(geo::Quat{q[0], q[1], q[2], q[3]}, geo::Vec3{t[0], t[1], t[2]});
}

loss::MonoGroundTruth mono_ground_truth(const synth::ViewGt& gt) {
    loss::MonoGroundTruth out;
    for (const auto& p : gt.planes) out.params.push_back(p.n);
    out.masks = gt.masks;
    out.depth = gt.depth;
    return out;
}

std::vector<match::GroundTruthPlane> matchable_ground_truth(const synth::ViewGt& gt) {
    std::vector<match::GroundTruthPlane> out;
    for (size_t i = 0; i < gt.planes.size(); ++i) out.push_back({gt.planes[i].n, gt.masks[i]});
    return out;
}

}  // namespace planeq::model
