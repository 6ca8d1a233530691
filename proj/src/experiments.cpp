#include "planeq/experiments.hpp"
#include <set>
#include <functional>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "planeq/tensorfile.hpp"

namespace planeq::exp {

using diff::Graph;
using diff::NodeId;
using nlohmann::json;

namespace {

Tensor rand_t(std::vector<int> dims, RngStream& rng, double lo = -1.0, double hi = 1.0) {
    return Tensor::uniform(std::move(dims), rng, lo, hi);
}

Tensor rand_signed(std::vector<int> dims, RngStream& rng) {
    Tensor t = rand_t(std::move(dims), rng, 0.1, 1.0);
    for (double& v : t.vec())
        if (rng.uniform() < 0.5) v = -v;
    return t;
}

NodeId scalarize(Graph& g, NodeId x, RngStream& rng) {
    return g.sum(g.mul(x, g.constant(rand_t(g.value(x).dims(), rng, 0.25, 1.0))));
}

double check_all_params(Graph& g, NodeId lossn) {
    double worst = 0.0;
    for (NodeId p : g.parameter_nodes()) worst = std::max(worst, g.grad_check(lossn, p));
    return worst;
}

// Small scene/config pair used by the end-to-end graph checks.
synth::GenConfig tiny_gen_config(uint64_t seed) {
    synth::GenConfig cfg;
    cfg.seed = seed;
    cfg.width = 8;
    cfg.height = 6;
    cfg.focal = 5.0;
    cfg.min_visible_pixels = 3;
    cfg.min_shared_planes = 2;
    cfg.overlap_min = 0.05;
    cfg.overlap_max = 0.95;
    return cfg;
}

model::ModelConfig tiny_model_config() {
    model::ModelConfig cfg;
    cfg.attn.c_embed = 8;
    cfg.attn.n_heads = 2;
    cfg.n_queries = 6;  // scenes hold up to six planes
    cfg.grid_h = 6;
    cfg.grid_w = 8;
    cfg.mlp_hidden = 8;
    return cfg;
}

}  // namespace

GradCheckReport run_gradcheck_suite(uint64_t seed, int instances) {
    GradCheckReport report;

    // Registered op kinds, each embedded in a random linear functional.
    struct OpCase {
        const char* name;
        std::function<NodeId(Graph&, NodeId, NodeId, NodeId, NodeId)> build;
    };
    const std::vector<OpCase> cases = {
        {"matmul", [](Graph& g, NodeId a, NodeId, NodeId w, NodeId) { return g.matmul(a, w); }},
        {"transpose", [](Graph& g, NodeId a, NodeId, NodeId, NodeId) { return g.transpose(a); }},
        {"add", [](Graph& g, NodeId a, NodeId b, NodeId, NodeId) { return g.add(a, b); }},
        {"subtract", [](Graph& g, NodeId a, NodeId b, NodeId, NodeId) { return g.sub(a, b); }},
        {"elementwise-multiply",
         [](Graph& g, NodeId a, NodeId b, NodeId, NodeId) { return g.mul(a, b); }},
        {"scalar-scale", [](Graph& g, NodeId a, NodeId, NodeId, NodeId) { return g.scale(a, -1.3); }},
        {"concat-last-axis",
         [](Graph& g, NodeId a, NodeId b, NodeId, NodeId) { return g.concat_last({a, b}); }},
        {"slice", [](Graph& g, NodeId a, NodeId, NodeId, NodeId) { return g.slice_last(a, 1, 2); }},
        {"row-softmax", [](Graph& g, NodeId a, NodeId, NodeId, NodeId) { return g.row_softmax(a); }},
        {"column-softmax",
         [](Graph& g, NodeId a, NodeId, NodeId, NodeId) { return g.col_softmax(a); }},
        {"relu", [](Graph& g, NodeId a, NodeId, NodeId, NodeId) { return g.relu(a); }},
        {"sigmoid", [](Graph& g, NodeId a, NodeId, NodeId, NodeId) { return g.sigmoid(a); }},
        {"l2-normalize-last-axis",
         [](Graph& g, NodeId a, NodeId, NodeId, NodeId) { return g.l2_normalize_last(a); }},
        {"sum", [](Graph& g, NodeId a, NodeId, NodeId, NodeId) { return g.sum(a); }},
        {"mean", [](Graph& g, NodeId a, NodeId, NodeId, NodeId) { return g.mean(a); }},
        {"abs", [](Graph& g, NodeId a, NodeId, NodeId, NodeId) { return g.abs(a); }},
        {"log", [](Graph& g, NodeId, NodeId, NodeId, NodeId p) { return g.log(p); }},
        {"elementwise-dot",
         [](Graph& g, NodeId a, NodeId b, NodeId, NodeId) { return g.dot(a, b); }},
        {"sqrt", [](Graph& g, NodeId, NodeId, NodeId, NodeId p) { return g.sqrt(p); }},
        {"divide", [](Graph& g, NodeId a, NodeId, NodeId, NodeId p) { return g.divide(a, p); }},
        {"sin", [](Graph& g, NodeId a, NodeId, NodeId, NodeId) { return g.sin(a); }},
        {"cos", [](Graph& g, NodeId a, NodeId, NodeId, NodeId) { return g.cos(a); }},
        {"atan2", [](Graph& g, NodeId a, NodeId, NodeId, NodeId p) { return g.atan2(a, p); }},
        {"clamp", [](Graph& g, NodeId a, NodeId, NodeId, NodeId) { return g.clamp(a, -0.9, 0.9); }},
        {"reshape",
         [](Graph& g, NodeId a, NodeId, NodeId, NodeId) { return g.reshape(a, {4, 3}); }},
    };

    for (const auto& c : cases) {
        GradCheckEntry e;
        e.name = std::string("op:") + c.name;
        for (int k = 0; k < instances; ++k) {
            RngStream rng = RngStream::derive(seed, fnv1a64(e.name) + static_cast<uint64_t>(k));
            Graph g;
            NodeId a = g.parameter("a", rand_signed({3, 4}, rng));
            NodeId b = g.parameter("b", rand_signed({3, 4}, rng));
            NodeId w = g.parameter("w", rand_t({4, 5}, rng));
            NodeId pos = g.parameter("pos", rand_t({3, 4}, rng, 0.4, 2.0));
            NodeId lossn = scalarize(g, c.build(g, a, b, w, pos), rng);
            e.max_rel_err = std::max(e.max_rel_err, check_all_params(g, lossn));
        }
        report.entries.push_back(e);
    }

    // End-to-end monocular loss: toy decoder -> heads -> matching -> loss.
    {
        GradCheckEntry e;
        e.name = "graph:total-mono-loss";
        const model::ModelConfig mcfg = tiny_model_config();
        for (int k = 0; k < instances; ++k) {
            const synth::GenConfig gcfg = tiny_gen_config(seed + 31 * static_cast<uint64_t>(k));
            const synth::SceneSample scene = synth::generate_scene(gcfg, k);
            ParamStore ps(seed + static_cast<uint64_t>(k));
            Graph g;
            const Tensor raw = synth::featurize_pixels(scene, 0, 0.01, 1);
            const model::MonoForward fwd = model::mono_forward(g, ps, raw, mcfg);
            const auto preds = model::extract_predictions(g, fwd);
            const auto gts = model::matchable_ground_truth(scene.view[0]);
            const auto assignment = match::bipartite_match(preds, gts, scene.view[0].depth);
            loss::MonoLossInputs in{fwd.props.probs, fwd.props.params, fwd.maps.mask_probs,
                                    fwd.maps.depths};
            const auto parts =
                loss::total_mono_loss(g, in, model::mono_ground_truth(scene.view[0]), assignment);
            e.max_rel_err = std::max(e.max_rel_err, check_all_params(g, parts.total));
        }
        report.entries.push_back(e);
    }

    // End-to-end pose loss through the pose module.
    {
        GradCheckEntry e;
        e.name = "graph:pose-module-loss";
        for (int k = 0; k < instances; ++k) {
            RngStream rng = RngStream::derive(seed, 0x90DE + static_cast<uint64_t>(k));
            ParamStore ps(seed + 100 + static_cast<uint64_t>(k));
            // move the pose head off its zero initialization
            ps.fetch_init("pose.mlp.out.w", rand_t({8, 7}, rng, -0.3, 0.3));
            ps.fetch_init("pose.mlp.out.b",
                          Tensor({1, 7}, {0.05, -0.1, 0.2, 1.0, 0.1, -0.05, 0.2}));
            Graph g;
            NodeId e1 = g.parameter("e1", rand_t({3, 8}, rng));
            NodeId e2 = g.parameter("e2", rand_t({3, 8}, rng));
            attn::AttentionConfig acfg;
            acfg.c_embed = 8;
            acfg.n_heads = 2;
            const auto out = attn::pose_module_forward(g, ps, e1, e2, acfg, 8);
            const geo::PoseSE3 gt(
                geo::Quat::from_axis_angle(
                    {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.2, 1)},
                    rng.uniform(0.1, 0.6)),
                {rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8)});
            NodeId lossn = loss::pose_loss_node(g, out.q, out.t, gt);
            e.max_rel_err = std::max(e.max_rel_err, check_all_params(g, lossn));
        }
        report.entries.push_back(e);
    }

    // Dice-centric mask loss on soft masks.
    {
        GradCheckEntry e;
        e.name = "graph:dice-mask-loss";
        for (int k = 0; k < instances; ++k) {
            RngStream rng = RngStream::derive(seed, 0xD1CE + static_cast<uint64_t>(k));
            Graph g;
            NodeId logits = g.parameter("logits", rand_t({24}, rng, -2, 2));
            Tensor target({24});
            for (int i = 0; i < 24; ++i) target[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;
            NodeId lossn = loss::mask_loss_node(g, g.sigmoid(logits), target);
            e.max_rel_err = std::max(e.max_rel_err, check_all_params(g, lossn));
        }
        report.entries.push_back(e);
    }

    return report;
}

namespace {

// Uniformly random maximal injective assignment between two equal query sets.
match::Assignment random_assignment(int n, RngStream& rng) {
    std::vector<int> perm(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) perm[static_cast<size_t>(i)] = i;
    for (int i = n - 1; i > 0; --i)
        std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(rng.uniform_int(0, i))]);
    match::Assignment out;
    for (int i = 0; i < n; ++i) out.push_back({i, perm[static_cast<size_t>(i)]});
    return out;
}

}  // namespace

BenchmarkReport run_pose_benchmark(const std::string& dataset_root,
                                   const std::string& joint_checkpoint,
                                   const eval::EvalOptions& options, int random_draws) {
    const data::DatasetInfo info = data::read_manifest(dataset_root);
    const auto scenes = train::load_split(dataset_root, info, true);
    if (scenes.empty()) throw ContractError("benchmark needs a non-empty test split");
    const double sigma =
        options.feature_noise >= 0.0 ? options.feature_noise : info.config.feature_noise;

    BenchmarkReport rep;
    const train::Checkpoint trained = train::load_checkpoint(joint_checkpoint);
    rep.trained = eval::evaluate_scenes(scenes, trained, info.config.feature_noise, options);

    // Zero-initialized model: fresh parameters from the checkpoint's seed.
    train::Checkpoint fresh{trained.model, ParamStore(trained.params.init_seed())};
    rep.untrained = eval::evaluate_scenes(scenes, fresh, info.config.feature_noise, options);

    // Identity-pose baseline.
    {
        std::vector<geo::PoseSE3> ident(scenes.size()), gts;
        for (const auto& s : scenes) gts.push_back(s.relative_pose());
        rep.identity_baseline = metrics::pose_stats(ident, gts);
    }

    // Random-matching baseline: per pair, Monte-Carlo over random maximal
    // assignments mapped through the same bipartite matching as the model.
    {
        long tp = 0, npred = 0, ngt = 0;
        ParamStore params = trained.params;
        {
            Graph warmup;
            (void)model::pair_forward(warmup, params,
                                      synth::featurize_pixels(scenes[0], 0, sigma, 0),
                                      synth::featurize_pixels(scenes[0], 1, sigma, 0),
                                      trained.model);
        }
        for (size_t si = 0; si < scenes.size(); ++si) {
            const auto& scene = scenes[si];
            Graph g;
            const model::PairForward fwd =
                model::pair_forward(g, params, synth::featurize_pixels(scene, 0, sigma, 0),
                                    synth::featurize_pixels(scene, 1, sigma, 0), trained.model);
            std::array<std::vector<int>, 2> to_gt;
            for (int v = 0; v < 2; ++v) {
                const auto preds = model::extract_predictions(g, fwd.view[v]);
                to_gt[static_cast<size_t>(v)].assign(preds.size(), -1);
                const auto assignment = match::bipartite_match(
                    preds, model::matchable_ground_truth(scene.view[v]), scene.view[v].depth);
                for (auto [pi, gi] : assignment)
                    to_gt[static_cast<size_t>(v)][static_cast<size_t>(pi)] = gi;
            }
            RngStream rng = RngStream::derive(info.config.seed, 0xBA5E + si);
            std::set<std::pair<int, int>> gtset(scene.correspondence.begin(),
                                                scene.correspondence.end());
            for (int d = 0; d < random_draws; ++d) {
                const auto qpairs = random_assignment(trained.model.n_queries, rng);
                for (auto [qa, qb] : qpairs) {
                    const int ga = to_gt[0][static_cast<size_t>(qa)];
                    const int gb = to_gt[1][static_cast<size_t>(qb)];
                    if (ga >= 0 && gb >= 0 && gtset.count({ga, gb})) ++tp;
                }
                npred += trained.model.n_queries;
                ngt += static_cast<long>(scene.correspondence.size());
            }
        }
        rep.random_precision = npred > 0 ? static_cast<double>(tp) / npred : 0.0;
        rep.random_recall = ngt > 0 ? static_cast<double>(tp) / ngt : 0.0;
        rep.random_f = (rep.random_precision + rep.random_recall) > 0
                           ? 2.0 * rep.random_precision * rep.random_recall /
                                 (rep.random_precision + rep.random_recall)
                           : 0.0;
    }

    // Gates (fixed acceptance thresholds).
    const auto& gate_corr = rep.trained.gated_corr(options.gate_theta_index);
    auto add_gate = [&](std::string name, double measured, double threshold, bool at_least,
                        std::string detail) {
        GateResult g;
        g.name = std::move(name);
        g.measured = measured;
        g.threshold = threshold;
        g.at_least = at_least;
        g.pass = at_least ? measured >= threshold : measured <= threshold;
        g.detail = std::move(detail);
        rep.gates.push_back(std::move(g));
    };
    add_gate("heldout-pose-loss", rep.trained.mean_pose_loss, 0.5 * rep.untrained.mean_pose_loss,
             false, "trained mean pose loss vs 0.5 x zero-initialized model");
    add_gate("rotation-median", rep.trained.pose.rot_median_deg,
             0.5 * rep.identity_baseline.rot_median_deg, false,
             "trained rotation median vs 0.5 x identity baseline");
    add_gate("translation-median", rep.trained.pose.trans_median_m,
             0.5 * rep.identity_baseline.trans_median_m, false,
             "trained translation median vs 0.5 x identity baseline");
    add_gate("correspondence-f", gate_corr.f_score, 3.0 * rep.random_f, true,
             "MNN F-score at theta=0.1 vs 3 x random matching");
    add_gate("plane-recall-0.6m", rep.trained.recalls.depth.per_plane.back(),
             2.0 * rep.untrained.recalls.depth.per_plane.back(), true,
             "per-plane depth recall at 0.6 m vs 2 x untrained model");

    rep.config_hash = fnv1a64(dataset_root + "|" + joint_checkpoint);
    return rep;
}

std::string benchmark_to_json(const BenchmarkReport& r) {
    json j;
    j["trained"] = json::parse(eval::report_to_json(r.trained));
    j["untrained"] = json::parse(eval::report_to_json(r.untrained));
    j["identity_baseline"] = {{"rot_median_deg", r.identity_baseline.rot_median_deg},
                              {"trans_median_m", r.identity_baseline.trans_median_m},
                              {"rot_mean_deg", r.identity_baseline.rot_mean_deg},
                              {"trans_mean_m", r.identity_baseline.trans_mean_m}};
    j["random_baseline"] = {{"precision", r.random_precision},
                            {"recall", r.random_recall},
                            {"f_score", r.random_f}};
    json gates = json::array();
    for (const auto& g : r.gates)
        gates.push_back(json{{"name", g.name},
                             {"measured", g.measured},
                             {"threshold", g.threshold},
                             {"direction", g.at_least ? ">=" : "<="},
                             {"pass", g.pass},
                             {"detail", g.detail}});
    j["gates"] = gates;
    j["all_pass"] = r.all_pass();
    char hash[24];
    std::snprintf(hash, sizeof(hash), "%016llx", static_cast<unsigned long long>(r.config_hash));
    j["config_hash"] = hash;
    return j.dump(1);
}

std::string benchmark_to_markdown(const BenchmarkReport& r) {
    char buf[512];
    std::string md = "# Pose benchmark\n\n";
    std::snprintf(buf, sizeof(buf),
                  "| metric | trained | untrained | identity |\n|---|---|---|---|\n"
                  "| rotation median (deg) | %.3f | %.3f | %.3f |\n"
                  "| translation median (m) | %.4f | %.4f | %.4f |\n"
                  "| mean pose loss | %.4f | %.4f | - |\n"
                  "| corr F (theta=0.1) | %.4f | %.4f | random: %.4f |\n\n",
                  r.trained.pose.rot_median_deg, r.untrained.pose.rot_median_deg,
                  r.identity_baseline.rot_median_deg, r.trained.pose.trans_median_m,
                  r.untrained.pose.trans_median_m, r.identity_baseline.trans_median_m,
                  r.trained.mean_pose_loss, r.untrained.mean_pose_loss,
                  r.trained.corr.size() > 1 ? r.trained.corr[1].f_score : 0.0,
                  r.untrained.corr.size() > 1 ? r.untrained.corr[1].f_score : 0.0, r.random_f);
    md += buf;
    md += "| gate | measured | threshold | pass |\n|---|---|---|---|\n";
    for (const auto& g : r.gates) {
        std::snprintf(buf, sizeof(buf), "| %s | %.5f | %s %.5f | %s |\n", g.name.c_str(),
                      g.measured, g.at_least ? ">=" : "<=", g.threshold,
                      g.pass ? "yes" : "NO");
        md += buf;
    }
    return md;
}

AblationReport run_ablations(const train::TrainConfig& base, const std::string& mono_checkpoint,
                             const std::string& out_dir, const eval::EvalOptions& options) {
    std::filesystem::create_directories(out_dir);
    AblationReport rep;

    const attn::AblationVariant variants[] = {
        attn::AblationVariant::Full, attn::AblationVariant::NoCrossEmbeddings,
        attn::AblationVariant::SplitQk, attn::AblationVariant::SingleValueHead};

    for (const auto v : variants) {
        train::TrainConfig cfg = base;
        cfg.model.attn = attn::ablation_config(base.model.attn, v);
        cfg.init_checkpoint = mono_checkpoint;
        cfg.out_dir = out_dir + "/" + attn::ablation_name(v);
        const train::TrainResult tr = train::train_pose(cfg);

        const train::Checkpoint ck = train::load_checkpoint(tr.checkpoint_path);
        AblationRow row;
        row.variant = attn::ablation_name(v);
        row.report = eval::evaluate_dataset(cfg.dataset_root, ck, options);
        rep.rows.push_back(std::move(row));

        // correspondence heatmaps of the first test pair
        const data::DatasetInfo info = data::read_manifest(cfg.dataset_root);
        int first_test = -1;
        for (const auto& ref : info.scenes)
            if (ref.is_test) {
                first_test = ref.ordinal;
                break;
            }
        if (first_test >= 0) {
            const auto scene = data::load_scene(cfg.dataset_root, info, first_test);
            const auto art = eval::pair_artifacts(
                scene, ck, info.config.feature_noise,
                options.theta_sweep[static_cast<size_t>(options.gate_theta_index)],
                options.average_directions);
            io::save_tensor(out_dir + "/heatmap_" + attn::ablation_name(v) + "_c12.pqt",
                            art.corr_12);
        }
    }

    const double full_f = rep.rows[0].report.gated_corr(options.gate_theta_index).f_score;
    for (size_t i = 1; i < rep.rows.size(); ++i) {
        const double f = rep.rows[i].report.gated_corr(options.gate_theta_index).f_score;
        if (f > full_f)
            rep.notes.push_back("variant '" + rep.rows[i].variant +
                                "' beat the full model on F-score (" + std::to_string(f) + " vs " +
                                std::to_string(full_f) + ")");
    }
    rep.config_hash = fnv1a64(base.dataset_root + "|" + mono_checkpoint);
    return rep;
}

std::string ablation_to_json(const AblationReport& r) {
    json j;
    json rows = json::array();
    for (const auto& row : r.rows)
        rows.push_back(json{{"variant", row.variant},
                            {"report", json::parse(eval::report_to_json(row.report))}});
    j["rows"] = rows;
    j["notes"] = r.notes;
    return j.dump(1);
}

std::string ablation_to_markdown(const AblationReport& r) {
    std::string md = "# Ablations\n\n";
    md += "| variant | trans med (m) | rot med (deg) | corr P | corr R | corr F | AP "
          "(30deg,1m) | AP (5deg,0.2m) |\n|---|---|---|---|---|---|---|---|\n";
    char buf[320];
    for (const auto& row : r.rows) {
        const auto& rr = row.report;
        std::snprintf(buf, sizeof(buf),
                      "| %s | %.4f | %.3f | %.4f | %.4f | %.4f | %.4f | %.4f |\n",
                      row.variant.c_str(), rr.pose.trans_median_m, rr.pose.rot_median_deg,
                      rr.corr.size() > 1 ? rr.corr[1].precision : 0.0,
                      rr.corr.size() > 1 ? rr.corr[1].recall : 0.0,
                      rr.corr.size() > 1 ? rr.corr[1].f_score : 0.0, rr.ap[0].all, rr.ap[2].all);
        md += buf;
    }
    for (const auto& n : r.notes) md += "\n- " + n;
    md += "\n";
    return md;
}

}  // namespace planeq::exp
