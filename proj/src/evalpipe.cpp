#include "planeq/evalpipe.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace planeq::eval {

using diff::Graph;
using nlohmann::json;

namespace {

struct ViewOutputs {
    std::vector<match::PredictedPlane> preds;
    head::InferenceResult infer;
};

struct PairOutputs {
    ViewOutputs view[2];
    geo::PoseSE3 pred_pose;
    Tensor c12, c21;  // head-averaged when the qk-split ablation is active
    Tensor s12, s21;
};

Tensor average_values(const Graph& g, const std::vector<diff::NodeId>& nodes) {
    Tensor out = g.value(nodes[0]);
    for (size_t h = 1; h < nodes.size(); ++h) {
        const Tensor& t = g.value(nodes[h]);
        for (int i = 0; i < out.numel(); ++i) out[i] += t[i];
    }
    for (int i = 0; i < out.numel(); ++i) out[i] /= static_cast<double>(nodes.size());
    return out;
}

PairOutputs model_pair_outputs(const synth::SceneSample& scene, ParamStore& ps,
                               const model::ModelConfig& cfg, double sigma) {
    Graph g;
    const Tensor raw0 = synth::featurize_pixels(scene, 0, sigma, 0);
    const Tensor raw1 = synth::featurize_pixels(scene, 1, sigma, 0);
    const model::PairForward fwd = model::pair_forward(g, ps, raw0, raw1, cfg);

    PairOutputs out;
    for (int v = 0; v < 2; ++v) {
        out.view[v].preds = model::extract_predictions(g, fwd.view[v]);
        out.view[v].infer =
            head::monocular_infer(out.view[v].preds, scene.cam, cfg.p_keep, cfg.m_bg);
    }
    out.pred_pose = model::extract_pose(g, fwd.pose);
    out.c12 = average_values(g, fwd.pose.corr_12);
    out.c21 = average_values(g, fwd.pose.corr_21);
    out.s12 = average_values(g, fwd.pose.sim_12);
    out.s21 = average_values(g, fwd.pose.sim_21);
    return out;
}

// Oracle outputs: the ground truth dressed up as predictions.
PairOutputs gt_pair_outputs(const synth::SceneSample& scene) {
    PairOutputs out;
    for (int v = 0; v < 2; ++v) {
        const synth::ViewGt& gt = scene.view[v];
        for (size_t i = 0; i < gt.planes.size(); ++i) {
            match::PredictedPlane p;
            p.prob = 1.0;
            p.param = gt.planes[i].n;
            p.mask = gt.masks[i];
            p.depth = gt.depth;
            out.view[v].preds.push_back(std::move(p));
        }
        out.view[v].infer = head::monocular_infer(out.view[v].preds, scene.cam, 0.5, 0.5);
    }
    out.pred_pose = scene.relative_pose();
    const int n1 = static_cast<int>(scene.view[0].planes.size());
    const int n2 = static_cast<int>(scene.view[1].planes.size());
    out.c12 = Tensor({std::max(n1, 1), std::max(n2, 1)});
    for (auto [a, b] : scene.correspondence) out.c12.at2(a, b) = 1.0;
    out.c21 = Tensor({std::max(n2, 1), std::max(n1, 1)});
    for (auto [a, b] : scene.correspondence) out.c21.at2(b, a) = 1.0;
    out.s12 = out.c12;
    out.s21 = out.c21;
    return out;
}

// Binary per-plane masks from the argmax segmentation.
std::vector<metrics::EvalPlane> kept_eval_planes(const ViewOutputs& v) {
    std::vector<metrics::EvalPlane> out;
    const size_t hw = v.infer.segmentation.size();
    for (size_t k = 0; k < v.infer.kept.size(); ++k) {
        metrics::EvalPlane p;
        p.param = v.preds[static_cast<size_t>(v.infer.kept[k])].param;
        p.mask.assign(hw, 0.0);
        for (size_t i = 0; i < hw; ++i)
            if (v.infer.segmentation[i] == static_cast<int>(k)) p.mask[i] = 1.0;
        out.push_back(std::move(p));
    }
    return out;
}

std::vector<metrics::EvalPlane> gt_eval_planes(const synth::ViewGt& gt) {
    std::vector<metrics::EvalPlane> out;
    for (size_t i = 0; i < gt.planes.size(); ++i) out.push_back({gt.planes[i].n, gt.masks[i]});
    return out;
}

std::vector<double> concat_mask(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> m(a.size() + b.size(), 0.0);
    std::copy(a.begin(), a.end(), m.begin());
    std::copy(b.begin(), b.end(), m.begin() + static_cast<long>(a.size()));
    return m;
}

struct ApInputs {
    std::vector<metrics::ApDetection> dets;  // masks span both views
    std::vector<metrics::EvalPlane> gts;
};

// Two-view reconstruction in the view-1 frame driven by the predicted pose
// and the MNN pairing of kept planes.
ApInputs build_ap_inputs(const synth::SceneSample& scene, const PairOutputs& po,
                         const match::Assignment& mnn_pairs) {
    ApInputs out;
    const size_t hw = scene.view[0].depth.size();
    const std::vector<double> zeros(hw, 0.0);

    const auto planes0 = kept_eval_planes(po.view[0]);
    const auto planes1 = kept_eval_planes(po.view[1]);

    // query index -> kept slot
    auto kept_slot = [](const ViewOutputs& v, int query) {
        for (size_t k = 0; k < v.infer.kept.size(); ++k)
            if (v.infer.kept[k] == query) return static_cast<int>(k);
        return -1;
    };

    std::vector<char> used0(planes0.size(), 0), used1(planes1.size(), 0);
    std::vector<geo::PlanePair> pairs;
    std::vector<std::pair<int, int>> pair_slots;
    for (auto [qa, qb] : mnn_pairs) {
        const int ka = kept_slot(po.view[0], qa);
        const int kb = kept_slot(po.view[1], qb);
        if (ka < 0 || kb < 0) continue;
        if (planes0[static_cast<size_t>(ka)].param.norm() == 0.0 ||
            planes1[static_cast<size_t>(kb)].param.norm() == 0.0)
            continue;
        pairs.push_back({geo::PlaneParam(planes0[static_cast<size_t>(ka)].param),
                         geo::PlaneParam(planes1[static_cast<size_t>(kb)].param), ka, kb});
        pair_slots.push_back({ka, kb});
    }

    const geo::FuseResult fused = geo::fuse_planes(pairs, po.pred_pose);
    for (const auto& f : fused.fused) {
        used0[static_cast<size_t>(f.left_index)] = 1;
        used1[static_cast<size_t>(f.right_index)] = 1;
        metrics::ApDetection d;
        d.param = f.plane.n;
        d.mask = concat_mask(planes0[static_cast<size_t>(f.left_index)].mask,
                             planes1[static_cast<size_t>(f.right_index)].mask);
        const int qa = po.view[0].infer.kept[static_cast<size_t>(f.left_index)];
        const int qb = po.view[1].infer.kept[static_cast<size_t>(f.right_index)];
        d.score = 0.5 * (po.view[0].preds[static_cast<size_t>(qa)].prob +
                         po.view[1].preds[static_cast<size_t>(qb)].prob);
        out.dets.push_back(std::move(d));
    }

    // unmatched (or rejected) kept planes become single-view detections
    const geo::PoseSE3 view1_from_2 = geo::se3_inverse(po.pred_pose);
    for (size_t k = 0; k < planes0.size(); ++k) {
        if (used0[k]) continue;
        if (planes0[k].param.norm() == 0.0) continue;
        const int q = po.view[0].infer.kept[k];
        out.dets.push_back({po.view[0].preds[static_cast<size_t>(q)].prob, planes0[k].param,
                            concat_mask(planes0[k].mask, zeros)});
    }
    for (size_t k = 0; k < planes1.size(); ++k) {
        if (used1[k]) continue;
        if (planes1[k].param.norm() == 0.0) continue;
        const int q = po.view[1].infer.kept[k];
        try {
            const geo::PlaneParam moved =
                geo::plane_transform(geo::PlaneParam(planes1[k].param), view1_from_2);
            out.dets.push_back({po.view[1].preds[static_cast<size_t>(q)].prob, moved.n,
                                concat_mask(zeros, planes1[k].mask)});
        } catch (const DomainError&) {
            // unfusable detection; dropped from the reconstruction
        }
    }

    // ground truth per instance, two-view masks, view-1 frame parameters
    const geo::PoseSE3 gt_view1_from_2 = geo::se3_inverse(scene.relative_pose());
    std::vector<int> instances;
    for (int inst : scene.view[0].visible) instances.push_back(inst);
    for (int inst : scene.view[1].visible)
        if (scene.view[0].index_of_instance(inst) < 0) instances.push_back(inst);
    for (int inst : instances) {
        const int i0 = scene.view[0].index_of_instance(inst);
        const int i1 = scene.view[1].index_of_instance(inst);
        metrics::EvalPlane g;
        if (i0 >= 0) {
            g.param = scene.view[0].planes[static_cast<size_t>(i0)].n;
        } else {
            g.param =
                geo::plane_transform(scene.view[1].planes[static_cast<size_t>(i1)], gt_view1_from_2)
                    .n;
        }
        g.mask = concat_mask(i0 >= 0 ? scene.view[0].masks[static_cast<size_t>(i0)] : zeros,
                             i1 >= 0 ? scene.view[1].masks[static_cast<size_t>(i1)] : zeros);
        out.gts.push_back(std::move(g));
    }
    return out;
}

// Greedy TP flags in descending-score order (matching inside one pair only).
std::vector<std::pair<double, char>> tp_flags(const ApInputs& in, const metrics::ApTier& tier) {
    std::vector<int> order(in.dets.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return in.dets[static_cast<size_t>(a)].score > in.dets[static_cast<size_t>(b)].score;
    });
    std::vector<char> used(in.gts.size(), 0);
    std::vector<std::pair<double, char>> out;
    for (int oi : order) {
        const auto& det = in.dets[static_cast<size_t>(oi)];
        int best = -1;
        double best_iou = 0.5 - 1e-12;
        for (size_t j = 0; j < in.gts.size(); ++j) {
            if (used[j]) continue;
            const double iou = metrics::mask_iou(det.mask, in.gts[j].mask);
            if (iou < best_iou) continue;
            if (!metrics::ap_conditions_hold(det.param, in.gts[j].param, tier)) continue;
            best = static_cast<int>(j);
            best_iou = iou;
        }
        if (best >= 0) used[static_cast<size_t>(best)] = 1;
        out.push_back({det.score, best >= 0 ? char(1) : char(0)});
    }
    return out;
}

match::Assignment mnn_on_pair(const PairOutputs& po, double theta, bool average_directions) {
    if (!average_directions) return match::mnn_filter(po.c12, theta);
    Tensor c = po.c12;
    for (int i = 0; i < c.dim(0); ++i)
        for (int j = 0; j < c.dim(1); ++j)
            c.at2(i, j) = 0.5 * (c.at2(i, j) + po.c21.at2(j, i));
    return match::mnn_filter(c, theta);
}

// Map query-index pairs into gt-index pairs through the per-view bipartite
// matching; unmatched queries turn into unique false-positive sentinels.
match::Assignment map_to_gt_pairs(const synth::SceneSample& scene, const PairOutputs& po,
                                  const match::Assignment& query_pairs) {
    std::array<std::vector<int>, 2> to_gt;
    for (int v = 0; v < 2; ++v) {
        to_gt[static_cast<size_t>(v)].assign(po.view[v].preds.size(), -1);
        const auto gts = model::matchable_ground_truth(scene.view[v]);
        const auto assignment =
            match::bipartite_match(po.view[v].preds, gts, scene.view[v].depth);
        for (auto [pi, gi] : assignment) to_gt[static_cast<size_t>(v)][static_cast<size_t>(pi)] = gi;
    }
    match::Assignment out;
    int sentinel = -1000;
    for (auto [qa, qb] : query_pairs) {
        const int ga = to_gt[0][static_cast<size_t>(qa)];
        const int gb = to_gt[1][static_cast<size_t>(qb)];
        if (ga >= 0 && gb >= 0) {
            out.push_back({ga, gb});
        } else {
            out.push_back({sentinel, sentinel - 1});
            sentinel -= 2;
        }
    }
    return out;
}

struct PairEvalResult {
    metrics::SegMetrics seg[2];
    metrics::ParamErrors perr[2];
    metrics::RecallCurves recalls[2];
    geo::PoseSE3 pred_pose, gt_pose;
    double pose_loss = 0.0;
    std::vector<long> corr_tp, corr_pred, corr_gt;  // per swept theta
    // per tier x {all, -offset, -normal}: (score, tp) plus gt count
    std::vector<std::pair<double, char>> ap_flags[kApTiers][3];
    double ap_gt_count = 0.0;
};

PairEvalResult evaluate_pair(const synth::SceneSample& scene, const PairOutputs& po,
                             const EvalOptions& options) {
    PairEvalResult r;
    for (int v = 0; v < 2; ++v) {
        const synth::ViewGt& gt = scene.view[v];
        r.seg[v] = metrics::seg_metrics(po.view[v].infer.segmentation, gt.seg);
        const auto pred_planes = kept_eval_planes(po.view[v]);
        r.recalls[v] = metrics::plane_recalls(pred_planes, gt_eval_planes(gt), gt.depth, scene.cam);
        if (!pred_planes.empty() && !gt.planes.empty()) {
            std::vector<geo::Vec3> pp, gg;
            for (const auto& p : pred_planes) pp.push_back(p.param);
            for (const auto& p : gt.planes) gg.push_back(p.n);
            r.perr[v] = metrics::param_errors(pp, gg);
        }
    }

    r.pred_pose = po.pred_pose;
    r.gt_pose = scene.relative_pose();
    r.pose_loss = loss::pose_loss_value(r.pred_pose, r.gt_pose);

    for (double theta : options.theta_sweep) {
        const auto query_pairs = mnn_on_pair(po, theta, options.average_directions);
        const auto mapped = map_to_gt_pairs(scene, po, query_pairs);
        const auto prf = match::correspondence_prf(mapped, scene.correspondence);
        r.corr_tp.push_back(prf.true_positives);
        r.corr_pred.push_back(static_cast<long>(mapped.size()));
        r.corr_gt.push_back(static_cast<long>(scene.correspondence.size()));
    }

    const auto gate_pairs =
        mnn_on_pair(po, options.theta_sweep[static_cast<size_t>(options.gate_theta_index)],
                    options.average_directions);
    const ApInputs ap_in = build_ap_inputs(scene, po, gate_pairs);
    r.ap_gt_count = static_cast<double>(ap_in.gts.size());
    for (int t = 0; t < kApTiers; ++t) {
        const metrics::ApTier all{kApNormalDeg[t], kApOffsetM[t], true, true};
        const metrics::ApTier no_off{kApNormalDeg[t], kApOffsetM[t], true, false};
        const metrics::ApTier no_norm{kApNormalDeg[t], kApOffsetM[t], false, true};
        r.ap_flags[t][0] = tp_flags(ap_in, all);
        r.ap_flags[t][1] = tp_flags(ap_in, no_off);
        r.ap_flags[t][2] = tp_flags(ap_in, no_norm);
    }
    return r;
}

}  // namespace

EvalReport evaluate_scenes(const std::vector<synth::SceneSample>& scenes,
                           const std::optional<train::Checkpoint>& ckpt, double dataset_sigma,
                           const EvalOptions& options) {
    if (scenes.empty()) throw ContractError("no scenes to evaluate");
    if (!options.gt_as_predictions && !ckpt) throw ContractError("evaluation needs a checkpoint");
    const double sigma = options.feature_noise >= 0.0 ? options.feature_noise : dataset_sigma;

    // worker threads must never mutate the store: materialize everything once
    ParamStore params = ckpt ? ckpt->params : ParamStore(1);
    model::ModelConfig mcfg = ckpt ? ckpt->model : model::ModelConfig{};
    if (!options.gt_as_predictions) {
        Graph warmup;
        (void)model::pair_forward(warmup, params,
                                  synth::featurize_pixels(scenes[0], 0, sigma, 0),
                                  synth::featurize_pixels(scenes[0], 1, sigma, 0), mcfg);
    }

    std::vector<PairEvalResult> results(scenes.size());
    train::parallel_for(static_cast<int>(scenes.size()), options.threads, [&](int i) {
        const synth::SceneSample& scene = scenes[static_cast<size_t>(i)];
        const PairOutputs po = options.gt_as_predictions
                                   ? gt_pair_outputs(scene)
                                   : model_pair_outputs(scene, params, mcfg, sigma);
        results[static_cast<size_t>(i)] = evaluate_pair(scene, po, options);
    });

    EvalReport rep;
    rep.pairs = static_cast<int>(scenes.size());

    std::vector<geo::PoseSE3> pred_poses, gt_poses;
    double perr_n = 0.0, perr_o = 0.0;
    long perr_cnt = 0;
    std::vector<long> tp(options.theta_sweep.size(), 0), np(options.theta_sweep.size(), 0),
        ng(options.theta_sweep.size(), 0);
    std::vector<std::pair<double, char>> ap_flags[kApTiers][3];
    double ap_gt = 0.0;

    for (const auto& r : results) {
        for (int v = 0; v < 2; ++v) {
            rep.seg.vi += r.seg[v].vi;
            rep.seg.ri += r.seg[v].ri;
            rep.seg.sc += r.seg[v].sc;
            rep.recalls.depth.merge(r.recalls[v].depth);
            rep.recalls.normal.merge(r.recalls[v].normal);
            perr_n += r.perr[v].mean_normal_deg * r.perr[v].matched;
            perr_o += r.perr[v].mean_offset_mm * r.perr[v].matched;
            perr_cnt += r.perr[v].matched;
        }
        pred_poses.push_back(r.pred_pose);
        gt_poses.push_back(r.gt_pose);
        rep.mean_pose_loss += r.pose_loss;
        for (size_t k = 0; k < options.theta_sweep.size(); ++k) {
            tp[k] += r.corr_tp[k];
            np[k] += r.corr_pred[k];
            ng[k] += r.corr_gt[k];
        }
        for (int t = 0; t < kApTiers; ++t)
            for (int vv = 0; vv < 3; ++vv)
                ap_flags[t][vv].insert(ap_flags[t][vv].end(), r.ap_flags[t][vv].begin(),
                                       r.ap_flags[t][vv].end());
        ap_gt += r.ap_gt_count;
    }

    const double views = 2.0 * rep.pairs;
    rep.seg.vi /= views;
    rep.seg.ri /= views;
    rep.seg.sc /= views;
    if (perr_cnt > 0) {
        rep.params.mean_normal_deg = perr_n / perr_cnt;
        rep.params.mean_offset_mm = perr_o / perr_cnt;
        rep.params.matched = static_cast<int>(perr_cnt);
    }
    rep.pose = metrics::pose_stats(pred_poses, gt_poses);
    rep.mean_pose_loss /= rep.pairs;

    for (size_t k = 0; k < options.theta_sweep.size(); ++k) {
        CorrStats c;
        c.theta = options.theta_sweep[k];
        c.true_positives = tp[k];
        c.predicted = np[k];
        c.actual = ng[k];
        c.precision = np[k] > 0 ? static_cast<double>(tp[k]) / np[k] : 0.0;
        c.recall = ng[k] > 0 ? static_cast<double>(tp[k]) / ng[k] : 0.0;
        c.f_score = (c.precision + c.recall) > 0
                        ? 2.0 * c.precision * c.recall / (c.precision + c.recall)
                        : 0.0;
        rep.corr.push_back(c);
    }

    for (int t = 0; t < kApTiers; ++t) {
        double* cells[3] = {&rep.ap[static_cast<size_t>(t)].all,
                            &rep.ap[static_cast<size_t>(t)].no_offset,
                            &rep.ap[static_cast<size_t>(t)].no_normal};
        for (int vv = 0; vv < 3; ++vv) {
            auto& flags = ap_flags[t][vv];
            std::stable_sort(flags.begin(), flags.end(),
                             [](const auto& a, const auto& b) { return a.first > b.first; });
            std::vector<char> seq;
            seq.reserve(flags.size());
            for (const auto& f : flags) seq.push_back(f.second);
            *cells[vv] = metrics::average_precision(seq, ap_gt);
        }
    }
    return rep;
}

EvalReport evaluate_dataset(const std::string& dataset_root,
                            const std::optional<train::Checkpoint>& ckpt,
                            const EvalOptions& options) {
    const data::DatasetInfo info = data::read_manifest(dataset_root);
    const auto scenes = train::load_split(dataset_root, info, true);
    return evaluate_scenes(scenes, ckpt, info.config.feature_noise, options);
}

std::string report_to_json(const EvalReport& r) {
    json j;
    j["pairs"] = r.pairs;
    j["segmentation"] = {{"vi", r.seg.vi}, {"ri", r.seg.ri}, {"sc", r.seg.sc}};
    j["plane_parameters"] = {{"mean_normal_deg", r.params.mean_normal_deg},
                             {"mean_offset_mm", r.params.mean_offset_mm},
                             {"matched", r.params.matched}};
    auto curve = [](const metrics::RecallCurve& c) {
        return json{{"thresholds", c.thresholds},
                    {"per_plane", c.per_plane},
                    {"per_pixel", c.per_pixel}};
    };
    j["recall"] = {{"depth", curve(r.recalls.depth)}, {"normal", curve(r.recalls.normal)}};
    j["pose"] = {{"rot_median_deg", r.pose.rot_median_deg},
                 {"rot_mean_deg", r.pose.rot_mean_deg},
                 {"trans_median_m", r.pose.trans_median_m},
                 {"trans_mean_m", r.pose.trans_mean_m},
                 {"trans_pct_le_1m", r.pose.trans_pct[0]},
                 {"trans_pct_le_0.5m", r.pose.trans_pct[1]},
                 {"trans_pct_le_0.2m", r.pose.trans_pct[2]},
                 {"rot_pct_le_30deg", r.pose.rot_pct[0]},
                 {"rot_pct_le_15deg", r.pose.rot_pct[1]},
                 {"rot_pct_le_10deg", r.pose.rot_pct[2]},
                 {"mean_pose_loss", r.mean_pose_loss}};
    json corr = json::array();
    for (const auto& c : r.corr)
        corr.push_back(json{{"theta", c.theta},
                            {"precision", c.precision},
                            {"recall", c.recall},
                            {"f_score", c.f_score},
                            {"tp", c.true_positives},
                            {"predicted", c.predicted},
                            {"actual", c.actual}});
    j["correspondence"] = corr;
    json ap = json::array();
    for (int t = 0; t < kApTiers; ++t)
        ap.push_back(json{{"normal_deg", kApNormalDeg[t]},
                          {"offset_m", kApOffsetM[t]},
                          {"all", r.ap[static_cast<size_t>(t)].all},
                          {"no_offset", r.ap[static_cast<size_t>(t)].no_offset},
                          {"no_normal", r.ap[static_cast<size_t>(t)].no_normal}});
    j["ap"] = ap;
    return j.dump(1);
}

PairArtifacts pair_artifacts(const synth::SceneSample& scene, const train::Checkpoint& ckpt,
                             double sigma, double theta, bool average_directions) {
    ParamStore params = ckpt.params;
    {
        Graph warmup;
        (void)model::pair_forward(warmup, params, synth::featurize_pixels(scene, 0, sigma, 0),
                                  synth::featurize_pixels(scene, 1, sigma, 0), ckpt.model);
    }
    const PairOutputs po = model_pair_outputs(scene, params, ckpt.model, sigma);
    PairArtifacts out;
    out.corr_12 = po.c12;
    out.corr_21 = po.c21;
    out.sim_12 = po.s12;
    out.sim_21 = po.s21;
    out.mnn = mnn_on_pair(po, theta, average_directions);
    out.pred_pose = po.pred_pose;
    for (int v = 0; v < 2; ++v) {
        out.preds[v] = po.view[v].preds;
        out.infer[v] = po.view[v].infer;
    }
    return out;
}

void write_reconstruction_ply(const std::string& path, const synth::SceneSample& scene,
                              const train::Checkpoint& ckpt, double sigma, double theta) {
    const PairArtifacts art = pair_artifacts(scene, ckpt, sigma, theta, false);

    struct Vert {
        geo::Vec3 p;
        int r, g, b;
    };
    std::vector<Vert> verts;
    std::vector<std::pair<int, int>> edges;

    auto slot_color = [](int view, int slot) {
        RngStream rng = RngStream::derive(0xC01AB5ull, static_cast<uint64_t>(view * 97 + slot));
        return std::array<int, 3>{rng.uniform_int(60, 255), rng.uniform_int(60, 255),
                                  rng.uniform_int(60, 255)};
    };

    // fused pairs share the view-1 color
    std::vector<int> pair_of_view2(art.infer[1].kept.size(), -1);
    for (auto [qa, qb] : art.mnn) {
        for (size_t k1 = 0; k1 < art.infer[1].kept.size(); ++k1)
            if (art.infer[1].kept[k1] == qb)
                for (size_t k0 = 0; k0 < art.infer[0].kept.size(); ++k0)
                    if (art.infer[0].kept[k0] == qa)
                        pair_of_view2[k1] = static_cast<int>(k0);
    }

    const geo::PoseSE3 view1_from_2 = geo::se3_inverse(art.pred_pose);
    for (int v = 0; v < 2; ++v) {
        const auto& inf = art.infer[v];
        for (int py = 0; py < scene.cam.height; ++py)
            for (int px = 0; px < scene.cam.width; ++px) {
                const size_t i = static_cast<size_t>(py) * scene.cam.width + px;
                const int slot = inf.segmentation[i];
                if (slot < 0 || inf.depth[i] <= 0.0) continue;
                geo::Vec3 x = scene.cam.ray(px + 0.5, py + 0.5) * inf.depth[i];
                if (v == 1) x = view1_from_2.apply(x);
                const int cslot =
                    v == 1 && pair_of_view2[static_cast<size_t>(slot)] >= 0
                        ? pair_of_view2[static_cast<size_t>(slot)]
                        : slot;
                const auto c = slot_color(v == 1 && pair_of_view2[static_cast<size_t>(slot)] >= 0
                                              ? 0
                                              : v,
                                          cslot);
                verts.push_back({x, c[0], c[1], c[2]});
            }
    }

    // camera frusta (apex + image-plane corners at 0.5 m)
    auto add_frustum = [&](const geo::PoseSE3& cam_from_world_1, int r, int gg, int b) {
        const int base = static_cast<int>(verts.size());
        const geo::PoseSE3 to_view1 = cam_from_world_1;
        const double z = 0.5;
        std::vector<geo::Vec3> pts = {
            {0, 0, 0},
            scene.cam.ray(0, 0) * z,
            scene.cam.ray(scene.cam.width, 0) * z,
            scene.cam.ray(scene.cam.width, scene.cam.height) * z,
            scene.cam.ray(0, scene.cam.height) * z,
        };
        for (const auto& p : pts) verts.push_back({to_view1.apply(p), r, gg, b});
        for (int k = 1; k <= 4; ++k) {
            edges.push_back({base, base + k});
            edges.push_back({base + k, base + (k % 4) + 1});
        }
    };
    add_frustum(geo::PoseSE3::identity(), 255, 40, 40);
    add_frustum(view1_from_2, 40, 40, 255);

    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "ply\nformat ascii 1.0\n";
    out << "element vertex " << verts.size() << "\n";
    out << "property float x\nproperty float y\nproperty float z\n";
    out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    out << "element edge " << edges.size() << "\n";
    out << "property int vertex1\nproperty int vertex2\n";
    out << "end_header\n";
    char buf[160];
    for (const auto& v : verts) {
        std::snprintf(buf, sizeof(buf), "%.6f %.6f %.6f %d %d %d\n", v.p.x, v.p.y, v.p.z, v.r,
                      v.g, v.b);
        out << buf;
    }
    for (const auto& e : edges) out << e.first << " " << e.second << "\n";
}

}  // namespace planeq::eval
