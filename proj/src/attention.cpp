#include "planeq/attention.hpp"

#include <cmath>

namespace planeq::attn {

using diff::Graph;
using diff::NodeId;

const char* ablation_name(AblationVariant v) {
    switch (v) {
        case AblationVariant::Full: return "full";
        case AblationVariant::SplitQk: return "qk-split";
        case AblationVariant::SingleValueHead: return "v1";
        case AblationVariant::NoCrossEmbeddings: return "no-cross";
    }
    return "?";
}

AttentionConfig ablation_config(AttentionConfig base, AblationVariant v) {
    switch (v) {
        case AblationVariant::Full:
            break;
        case AblationVariant::SplitQk:
            base.qk_heads = base.n_heads;
            break;
        case AblationVariant::SingleValueHead:
            base.n_heads = 1;
            base.qk_heads = 1;
            break;
        case AblationVariant::NoCrossEmbeddings:
            base.cross_embeddings = false;
            break;
    }
    base.validate();
    return base;
}

NodeId mca(Graph& g, ParamStore& ps, const std::string& prefix, NodeId q, NodeId k, NodeId v,
           int n_heads) {
    const int c = g.value(q).dim(1);
    if (g.value(k).dim(1) != c || g.value(v).dim(1) != c)
        throw ShapeError("mca channel mismatch");
    if (g.value(k).dim(0) != g.value(v).dim(0)) throw ShapeError("mca key/value count mismatch");
    if (c % n_heads != 0) throw ShapeError("mca channels not divisible by heads");
    const int hd = c / n_heads;
    const double temp = 1.0 / std::sqrt(static_cast<double>(hd));

    std::vector<NodeId> heads;
    for (int h = 0; h < n_heads; ++h) {
        NodeId qh = g.slice_last(q, h * hd, hd);
        NodeId kh = g.slice_last(k, h * hd, hd);
        NodeId vh = g.slice_last(v, h * hd, hd);
        NodeId att = g.row_softmax(g.scale(g.matmul(qh, g.transpose(kh)), temp));
        heads.push_back(g.matmul(att, vh));
    }
    NodeId concat = n_heads == 1 ? heads[0] : g.concat_last(heads);
    return diff::linear(g, ps, prefix + ".out", concat, c, c);
}

namespace {

// Dual-softmax of S with temperature 1/sqrt(channels).
NodeId dual_softmax_node(Graph& g, NodeId s, int channels) {
    NodeId scaled = g.scale(s, 1.0 / std::sqrt(static_cast<double>(channels)));
    return g.mul(g.row_softmax(scaled), g.col_softmax(scaled));
}

}  // namespace

PcaOutput pca(Graph& g, ParamStore& ps, const std::string& prefix, NodeId e_a, NodeId e_b,
              const AttentionConfig& cfg) {
    cfg.validate();
    const int c = cfg.c_embed;
    if (g.value(e_a).dim(1) != c || g.value(e_b).dim(1) != c)
        throw ShapeError("pca channel mismatch");
    const int na = g.value(e_a).dim(0);
    const int nb = g.value(e_b).dim(0);
    if (!cfg.cross_embeddings && na != nb)
        throw ConfigError("non-cross embedding placement needs equal set sizes");

    NodeId q = diff::linear(g, ps, prefix + ".q", e_a, c, c);
    NodeId k = diff::linear(g, ps, prefix + ".k", e_b, c, c);

    PcaOutput out;
    const int qk_dim = c / cfg.qk_heads;
    for (int h = 0; h < cfg.qk_heads; ++h) {
        NodeId qh = cfg.qk_heads == 1 ? q : g.slice_last(q, h * qk_dim, qk_dim);
        NodeId kh = cfg.qk_heads == 1 ? k : g.slice_last(k, h * qk_dim, qk_dim);
        NodeId s = g.matmul(qh, g.transpose(kh));
        out.sim.push_back(s);
        out.corr.push_back(dual_softmax_node(g, s, qk_dim));
    }

    // Value projections. The left side always comes from e_a; the right side
    // comes from e_b when cross-placed, otherwise from e_a as well.
    NodeId v_left = diff::linear(g, ps, prefix + ".va", e_a, c, c);
    NodeId v_right = cfg.cross_embeddings ? diff::linear(g, ps, prefix + ".vb", e_b, c, c)
                                          : diff::linear(g, ps, prefix + ".vb", e_a, c, c);

    const int hd = cfg.head_dim();
    std::vector<NodeId> head_maps;
    for (int h = 0; h < cfg.n_heads; ++h) {
        NodeId vl = g.slice_last(v_left, h * hd, hd);
        NodeId vr = g.slice_last(v_right, h * hd, hd);
        NodeId cm = out.corr[static_cast<size_t>(cfg.qk_heads == 1 ? 0 : h % cfg.qk_heads)];
        NodeId m = g.matmul(g.transpose(vl), g.matmul(cm, vr));  // [hd, hd]
        head_maps.push_back(g.reshape(m, {1, hd * hd}));
    }
    NodeId flat = cfg.n_heads == 1 ? head_maps[0] : g.concat_last(head_maps);
    const int fdim = c * c / cfg.n_heads;
    out.feature_flat = diff::linear(g, ps, prefix + ".out", flat, fdim, fdim);
    out.pose_feature = g.reshape(out.feature_flat, {cfg.n_heads, hd, hd});

    // Residual message passing for layer stacking: each side receives the
    // correspondence-weighted value of the other side. The aggregation always
    // crosses views; only the bilinear sides react to cfg.cross_embeddings.
    NodeId m_b = diff::linear(g, ps, prefix + ".mb", e_b, c, c);
    NodeId m_a = diff::linear(g, ps, prefix + ".ma", e_a, c, c);
    if (cfg.qk_heads == 1) {
        out.a_next = g.add(e_a, g.matmul(out.corr[0], m_b));
        out.b_next = g.add(e_b, g.matmul(g.transpose(out.corr[0]), m_a));
    } else {
        std::vector<NodeId> ua, ub;
        for (int h = 0; h < cfg.qk_heads; ++h) {
            NodeId mb_h = g.slice_last(m_b, h * qk_dim, qk_dim);
            NodeId ma_h = g.slice_last(m_a, h * qk_dim, qk_dim);
            ua.push_back(g.matmul(out.corr[static_cast<size_t>(h)], mb_h));
            ub.push_back(g.matmul(g.transpose(out.corr[static_cast<size_t>(h)]), ma_h));
        }
        out.a_next = g.add(e_a, g.concat_last(ua));
        out.b_next = g.add(e_b, g.concat_last(ub));
    }
    return out;
}

PoseForwardOutput pose_module_forward(Graph& g, ParamStore& ps, NodeId e1, NodeId e2,
                                      const AttentionConfig& cfg, int mlp_hidden,
                                      int pca_layers) {
    cfg.validate();
    if (pca_layers < 1) throw ConfigError("need at least one attention layer");
    const int fdim = cfg.c_embed * cfg.c_embed / cfg.n_heads;

    auto run_direction = [&](const std::string& dir, NodeId a, NodeId b) {
        PcaOutput last;
        for (int l = 0; l < pca_layers; ++l) {
            last = pca(g, ps, "pose." + dir + ".l" + std::to_string(l), a, b, cfg);
            a = last.a_next;
            b = last.b_next;
        }
        return last;
    };

    const PcaOutput d12 = run_direction("d12", e1, e2);
    const PcaOutput d21 = run_direction("d21", e2, e1);

    NodeId feat = g.concat_last({d12.feature_flat, d21.feature_flat});  // [1, 2*fdim]

    NodeId h1 = g.relu(diff::linear(g, ps, "pose.mlp.l0", feat, 2 * fdim, mlp_hidden));
    NodeId h2 = g.relu(diff::linear(g, ps, "pose.mlp.l1", h1, mlp_hidden, mlp_hidden));

    // Zero-initialized head with an identity-quaternion bias: the fresh model
    // emits t = 0, q = (1,0,0,0).
    NodeId w_out = g.parameter("pose.mlp.out.w",
                               ps.fetch_init("pose.mlp.out.w", Tensor({mlp_hidden, 7})));
    NodeId b_out = g.parameter(
        "pose.mlp.out.b", ps.fetch_init("pose.mlp.out.b", Tensor({1, 7}, {0, 0, 0, 1, 0, 0, 0})));
    NodeId outrow = g.add(g.matmul(h2, w_out), b_out);  // [1,7]

    PoseForwardOutput out;
    out.t = g.reshape(g.slice_last(outrow, 0, 3), {3});
    NodeId qn = g.l2_normalize_last(g.reshape(g.slice_last(outrow, 3, 4), {4}));
    // canonical sign: multiply by sign(w)
    NodeId w = g.slice_last(qn, 0, 1);
    NodeId sgn = g.divide(w, g.clamp(g.abs(w), 1e-12, 1e300));
    NodeId ones4 = g.constant(Tensor::full({4, 1}, 1.0));
    NodeId sgn4 = g.reshape(g.matmul(ones4, g.reshape(sgn, {1, 1})), {4});
    out.q = g.mul(qn, sgn4);

    out.corr_12 = d12.corr;
    out.sim_12 = d12.sim;
    out.corr_21 = d21.corr;
    out.sim_21 = d21.sim;
    return out;
}

}  // namespace planeq::attn
