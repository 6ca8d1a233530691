// planeq: synthetic two-view planar reconstruction toolkit.
//
// Subcommands: init-config, gen, train-mono, train-pose, eval, match,
// reconstruct, gradcheck, benchmark, ablate.
//
// Exit codes: 0 ok, 2 configuration, 3 i/o, 4 numeric failure,
// 5 acceptance-gate failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "planeq/experiments.hpp"
#include "planeq/tensorfile.hpp"

using nlohmann::json;
using namespace planeq;

namespace {

struct FullConfig {
    synth::GenConfig gen;
    int n_train = 2000, n_test = 200;
    model::ModelConfig model;
    loss::LossWeights weights;
    uint64_t train_seed = 1;
    int mono_epochs = 30, joint_epochs = 20;
    int batch_size = 16;
    double lr = 1e-4, weight_decay = 0.05;
    int threads = 0;
    std::vector<double> theta_sweep = {0.05, 0.1, 0.2};
    bool average_directions = false;
};

json default_config_json() {
    const FullConfig c;
    json j;
    j["comments"] = {
        {"gen.seed", "root seed; every scene derives its own stream from (seed, index)"},
        {"gen.max_rotation_deg", "relative camera rotation bound between the two views, degrees"},
        {"gen.max_translation_m", "relative camera translation bound, meters"},
        {"gen.overlap", "accepted co-visibility range of view-1 planar pixels"},
        {"gen.feature_noise", "gaussian sigma added to depth/color feature channels"},
        {"model.c_embed", "embedding channels shared by queries and pixels"},
        {"model.n_heads", "value head count of the attention layers"},
        {"model.qk_heads", "1 keeps query/key unsplit; n_heads enables the split ablation"},
        {"model.cross_embeddings", "bilinear sides from distinct views (false: same view)"},
        {"model.n_queries", "plane query slots per view"},
        {"model.p_keep", "probability filter for keeping a query at inference"},
        {"model.m_bg", "argmax mask value below which a pixel is background"},
        {"loss.lambda", "classification/depth weight in the monocular total (2)"},
        {"loss.omega", "matching-cost weights (2, 1, 2, 5, 5)"},
        {"loss.beta", "mask loss weights: bce 5, dice 5"},
        {"loss.lambda_t|lambda_q", "geodesic pose loss weights 5 and 15"},
        {"loss.w_noplane", "down-weight of non-plane classification terms"},
        {"loss.mono_scale_joint", "monocular loss scale during the joint phase (0.1)"},
        {"train.lr", "AdamW initial learning rate 1e-4"},
        {"train.weight_decay", "decoupled weight decay 0.05"},
        {"train.batch_size", "pairs (or views) per optimizer step, 16"},
        {"train.mono_epochs|joint_epochs", "two-phase schedule, 30 then 20 epochs"},
        {"eval.theta_sweep", "MNN correspondence thresholds; 0.1 drives the gates"},
    };
    j["gen"] = {{"seed", c.gen.seed},
                {"min_planes", c.gen.min_planes},
                {"max_planes", c.gen.max_planes},
                {"room_half_extent", c.gen.room_half_extent},
                {"room_height", c.gen.room_height},
                {"max_rotation_deg", c.gen.max_rotation_deg},
                {"max_translation_m", c.gen.max_translation_m},
                {"overlap_min", c.gen.overlap_min},
                {"overlap_max", c.gen.overlap_max},
                {"width", c.gen.width},
                {"height", c.gen.height},
                {"focal", c.gen.focal},
                {"min_visible_pixels", c.gen.min_visible_pixels},
                {"min_shared_planes", c.gen.min_shared_planes},
                {"max_attempts", c.gen.max_attempts},
                {"feature_noise", c.gen.feature_noise}};
    j["data"] = {{"n_train", c.n_train}, {"n_test", c.n_test}};
    j["model"] = json::parse(model::model_config_to_json(c.model));
    j["loss"] = {{"lambda", c.weights.lambda},
                 {"omega1", c.weights.omega1},
                 {"omega2", c.weights.omega2},
                 {"omega3", c.weights.omega3},
                 {"omega4", c.weights.omega4},
                 {"omega5", c.weights.omega5},
                 {"beta1", c.weights.beta1},
                 {"beta2", c.weights.beta2},
                 {"lambda_t", c.weights.lambda_t},
                 {"lambda_q", c.weights.lambda_q},
                 {"w_noplane", c.weights.w_noplane},
                 {"mono_scale_joint", c.weights.mono_scale_joint}};
    j["train"] = {{"seed", c.train_seed},
                  {"mono_epochs", c.mono_epochs},
                  {"joint_epochs", c.joint_epochs},
                  {"batch_size", c.batch_size},
                  {"lr", c.lr},
                  {"weight_decay", c.weight_decay},
                  {"threads", c.threads}};
    j["eval"] = {{"theta_sweep", c.theta_sweep},
                 {"average_directions", c.average_directions}};
    return j;
}

template <typename T>
void maybe(const json& j, const char* key, T& into) {
    if (j.contains(key)) into = j.at(key).get<T>();
}

FullConfig load_config(const std::string& path) {
    FullConfig c;
    if (path.empty()) return c;
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config parse failure: ") + e.what());
    }
    if (j.contains("gen")) {
        const json& g = j["gen"];
        maybe(g, "seed", c.gen.seed);
        maybe(g, "min_planes", c.gen.min_planes);
        maybe(g, "max_planes", c.gen.max_planes);
        maybe(g, "room_half_extent", c.gen.room_half_extent);
        maybe(g, "room_height", c.gen.room_height);
        maybe(g, "max_rotation_deg", c.gen.max_rotation_deg);
        maybe(g, "max_translation_m", c.gen.max_translation_m);
        maybe(g, "overlap_min", c.gen.overlap_min);
        maybe(g, "overlap_max", c.gen.overlap_max);
        maybe(g, "width", c.gen.width);
        maybe(g, "height", c.gen.height);
        maybe(g, "focal", c.gen.focal);
        maybe(g, "min_visible_pixels", c.gen.min_visible_pixels);
        maybe(g, "min_shared_planes", c.gen.min_shared_planes);
        maybe(g, "max_attempts", c.gen.max_attempts);
        maybe(g, "feature_noise", c.gen.feature_noise);
    }
    if (j.contains("data")) {
        maybe(j["data"], "n_train", c.n_train);
        maybe(j["data"], "n_test", c.n_test);
    }
    if (j.contains("model")) c.model = model::model_config_from_json(j["model"].dump());
    if (j.contains("loss")) {
        const json& l = j["loss"];
        maybe(l, "lambda", c.weights.lambda);
        maybe(l, "omega1", c.weights.omega1);
        maybe(l, "omega2", c.weights.omega2);
        maybe(l, "omega3", c.weights.omega3);
        maybe(l, "omega4", c.weights.omega4);
        maybe(l, "omega5", c.weights.omega5);
        maybe(l, "beta1", c.weights.beta1);
        maybe(l, "beta2", c.weights.beta2);
        maybe(l, "lambda_t", c.weights.lambda_t);
        maybe(l, "lambda_q", c.weights.lambda_q);
        maybe(l, "w_noplane", c.weights.w_noplane);
        maybe(l, "mono_scale_joint", c.weights.mono_scale_joint);
    }
    if (j.contains("train")) {
        const json& t = j["train"];
        maybe(t, "seed", c.train_seed);
        maybe(t, "mono_epochs", c.mono_epochs);
        maybe(t, "joint_epochs", c.joint_epochs);
        maybe(t, "batch_size", c.batch_size);
        maybe(t, "lr", c.lr);
        maybe(t, "weight_decay", c.weight_decay);
        maybe(t, "threads", c.threads);
    }
    if (j.contains("eval")) {
        maybe(j["eval"], "theta_sweep", c.theta_sweep);
        maybe(j["eval"], "average_directions", c.average_directions);
    }
    return c;
}

train::TrainConfig train_config_from(const FullConfig& c, const std::string& dataset,
                                     const std::string& out, int epochs) {
    train::TrainConfig t;
    t.dataset_root = dataset;
    t.out_dir = out;
    t.seed = c.train_seed;
    t.epochs = epochs;
    t.batch_size = c.batch_size;
    t.threads = c.threads;
    t.opt.lr = c.lr;
    t.opt.weight_decay = c.weight_decay;
    t.weights = c.weights;
    t.model = c.model;
    return t;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << text;
}

void apply_ablation_flags(model::ModelConfig& m, int qk_heads, int v_heads, bool no_cross) {
    if (v_heads > 0) m.attn.n_heads = v_heads;
    if (qk_heads > 0) m.attn.qk_heads = qk_heads;
    if (no_cross) m.attn.cross_embeddings = false;
    m.attn.validate();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"synthetic two-view plane reconstruction: data, training, evaluation"};
    app.require_subcommand(1);

    std::string config_path, dataset, out, ckpt, init_ckpt;
    uint64_t seed_flag = 0;
    bool seed_set = false, from_scratch = false, gt_as_pred = false, average_corr = false,
         gate = false, no_cross = false;
    int epochs_flag = -1, pair_ordinal = 0, qk_heads = 0, v_heads = 0, tier = 0, threads_flag = -1,
        draws = 100, n_train_flag = -1, n_test_flag = -1, instances = 10;
    double theta_flag = -1.0;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON configuration file");
    };

    CLI::App* c_init = app.add_subcommand("init-config", "write the annotated default config");
    c_init->add_option("--out", out, "output path")->required();

    CLI::App* c_gen = app.add_subcommand("gen", "generate the synthetic benchmark");
    add_common(c_gen);
    c_gen->add_option("--out", out, "dataset directory")->required();
    c_gen->add_option("--seed", seed_flag, "generator seed")->each([&](const std::string&) {
        seed_set = true;
    });
    c_gen->add_option("--n-train", n_train_flag, "train pairs");
    c_gen->add_option("--n-test", n_test_flag, "test pairs");

    CLI::App* c_mono = app.add_subcommand("train-mono", "monocular pre-training phase");
    add_common(c_mono);
    c_mono->add_option("--dataset", dataset, "dataset directory")->required();
    c_mono->add_option("--out", out, "output directory")->required();
    c_mono->add_option("--epochs", epochs_flag, "override epoch count");
    c_mono->add_option("--threads", threads_flag, "worker threads (0 = hardware)");
    c_mono->add_option("--seed", seed_flag, "training seed")->each([&](const std::string&) {
        seed_set = true;
    });

    CLI::App* c_pose = app.add_subcommand("train-pose", "joint two-view training phase");
    add_common(c_pose);
    c_pose->add_option("--dataset", dataset, "dataset directory")->required();
    c_pose->add_option("--out", out, "output directory")->required();
    c_pose->add_option("--init", init_ckpt, "monocular checkpoint to start from");
    c_pose->add_flag("--from-scratch", from_scratch, "skip the monocular checkpoint");
    c_pose->add_option("--epochs", epochs_flag, "override epoch count");
    c_pose->add_option("--threads", threads_flag, "worker threads (0 = hardware)");
    c_pose->add_option("--seed", seed_flag, "training seed")->each([&](const std::string&) {
        seed_set = true;
    });
    c_pose->add_option("--qk-heads", qk_heads, "split query/key into this many heads");
    c_pose->add_option("--v-heads", v_heads, "value head count");
    c_pose->add_flag("--no-cross-embeddings", no_cross, "same-view bilinear placement");

    CLI::App* c_eval = app.add_subcommand("eval", "metric report over the test split");
    add_common(c_eval);
    c_eval->add_option("--dataset", dataset, "dataset directory")->required();
    c_eval->add_option("--ckpt", ckpt, "checkpoint (omit with --gt-as-pred)");
    c_eval->add_option("--out", out, "metrics JSON path")->required();
    c_eval->add_flag("--gt-as-pred", gt_as_pred, "feed ground truth through the metrics");
    c_eval->add_option("--theta", theta_flag, "extra MNN threshold to include");
    c_eval->add_flag("--average-corr", average_corr, "average the two correspondence directions");
    c_eval->add_option("--tier", tier, "AP tier to print (0,1,2)")->check(CLI::Range(0, 2));
    c_eval->add_option("--threads", threads_flag, "worker threads");

    CLI::App* c_match = app.add_subcommand("match", "dump correspondence matrices + MNN pairs");
    add_common(c_match);
    c_match->add_option("--dataset", dataset, "dataset directory")->required();
    c_match->add_option("--ckpt", ckpt, "checkpoint")->required();
    c_match->add_option("--pair", pair_ordinal, "scene ordinal")->required();
    c_match->add_option("--out", out, "output directory")->required();
    c_match->add_option("--theta", theta_flag, "MNN threshold");
    c_match->add_flag("--average-corr", average_corr, "average the two directions");

    CLI::App* c_rec = app.add_subcommand("reconstruct", "fused two-view PLY export");
    add_common(c_rec);
    c_rec->add_option("--dataset", dataset, "dataset directory")->required();
    c_rec->add_option("--ckpt", ckpt, "checkpoint")->required();
    c_rec->add_option("--pair", pair_ordinal, "scene ordinal")->required();
    c_rec->add_option("--out", out, "PLY output path")->required();
    c_rec->add_option("--theta", theta_flag, "MNN threshold");

    CLI::App* c_grad = app.add_subcommand("gradcheck", "finite-difference verification suite");
    c_grad->add_option("--seed", seed_flag, "suite seed")->each([&](const std::string&) {
        seed_set = true;
    });
    c_grad->add_option("--instances", instances, "seeded instances per check");

    CLI::App* c_bench = app.add_subcommand("benchmark", "trained-vs-baseline pose benchmark");
    add_common(c_bench);
    c_bench->add_option("--dataset", dataset, "dataset directory")->required();
    c_bench->add_option("--ckpt", ckpt, "joint checkpoint")->required();
    c_bench->add_option("--out", out, "report directory")->required();
    c_bench->add_flag("--gate", gate, "exit 5 unless every gate passes");
    c_bench->add_option("--draws", draws, "random-baseline draws per pair");
    c_bench->add_option("--threads", threads_flag, "worker threads");

    CLI::App* c_abl = app.add_subcommand("ablate", "train and evaluate the ablation variants");
    add_common(c_abl);
    c_abl->add_option("--dataset", dataset, "dataset directory")->required();
    c_abl->add_option("--mono-ckpt", ckpt, "monocular checkpoint")->required();
    c_abl->add_option("--out", out, "report directory")->required();
    c_abl->add_option("--epochs", epochs_flag, "joint epochs per variant");
    c_abl->add_option("--threads", threads_flag, "worker threads");

    try {
        app.parse(argc, argv);

        FullConfig cfg = load_config(config_path);
        if (seed_set) {
            cfg.gen.seed = seed_flag;
            cfg.train_seed = seed_flag;
        }
        if (threads_flag >= 0) cfg.threads = threads_flag;
        if (n_train_flag > 0) cfg.n_train = n_train_flag;
        if (n_test_flag > 0) cfg.n_test = n_test_flag;

        eval::EvalOptions eopt;
        eopt.theta_sweep = cfg.theta_sweep;
        eopt.average_directions = average_corr || cfg.average_directions;
        eopt.threads = cfg.threads;
        if (theta_flag >= 0.0) {
            eopt.theta_sweep.push_back(theta_flag);
            std::sort(eopt.theta_sweep.begin(), eopt.theta_sweep.end());
            eopt.theta_sweep.erase(
                std::unique(eopt.theta_sweep.begin(), eopt.theta_sweep.end()),
                eopt.theta_sweep.end());
        }
        for (size_t i = 0; i < eopt.theta_sweep.size(); ++i)
            if (eopt.theta_sweep[i] == 0.1) eopt.gate_theta_index = static_cast<int>(i);

        if (c_init->parsed()) {
            write_text(out, default_config_json().dump(1) + "\n");
            std::printf("wrote %s\n", out.c_str());
        } else if (c_gen->parsed()) {
            const auto info = data::make_dataset(cfg.gen, cfg.n_train, cfg.n_test, out);
            std::printf("dataset: %d train / %d test pairs at %s\n", info.n_train, info.n_test,
                        out.c_str());
        } else if (c_mono->parsed()) {
            auto t = train_config_from(cfg, dataset, out,
                                       epochs_flag > 0 ? epochs_flag : cfg.mono_epochs);
            const auto r = train::train_mono(t);
            std::printf("mono phase done: %zu epochs, final loss %.6f -> %s\n",
                        r.epochs.size(), r.epochs.back().total, r.checkpoint_path.c_str());
        } else if (c_pose->parsed()) {
            auto t = train_config_from(cfg, dataset, out,
                                       epochs_flag > 0 ? epochs_flag : cfg.joint_epochs);
            apply_ablation_flags(t.model, qk_heads, v_heads, no_cross);
            t.init_checkpoint = init_ckpt;
            t.from_scratch = from_scratch;
            const auto r = train::train_pose(t);
            std::printf("joint phase done: %zu epochs, final loss %.6f -> %s\n",
                        r.epochs.size(), r.epochs.back().total, r.checkpoint_path.c_str());
        } else if (c_eval->parsed()) {
            eopt.gt_as_predictions = gt_as_pred;
            std::optional<train::Checkpoint> loaded;
            if (!gt_as_pred) {
                if (ckpt.empty()) throw ConfigError("eval needs --ckpt or --gt-as-pred");
                loaded = train::load_checkpoint(ckpt);
            }
            const auto rep = eval::evaluate_dataset(dataset, loaded, eopt);
            write_text(out, eval::report_to_json(rep) + "\n");
            std::printf("pairs=%d  VI=%.4f RI=%.4f SC=%.4f\n", rep.pairs, rep.seg.vi, rep.seg.ri,
                        rep.seg.sc);
            std::printf("pose: rot med %.3f deg / trans med %.4f m  mean pose loss %.4f\n",
                        rep.pose.rot_median_deg, rep.pose.trans_median_m, rep.mean_pose_loss);
            const auto& cs = rep.gated_corr(eopt.gate_theta_index);
            std::printf("corr (theta=%.2f): P=%.4f R=%.4f F=%.4f TP=%ld\n", cs.theta,
                        cs.precision, cs.recall, cs.f_score, cs.true_positives);
            std::printf("AP tier (%.0f deg, %.1f m): all=%.4f -offset=%.4f -normal=%.4f\n",
                        eval::kApNormalDeg[tier], eval::kApOffsetM[tier],
                        rep.ap[static_cast<size_t>(tier)].all,
                        rep.ap[static_cast<size_t>(tier)].no_offset,
                        rep.ap[static_cast<size_t>(tier)].no_normal);
            std::printf("report -> %s\n", out.c_str());
        } else if (c_match->parsed()) {
            const auto info = data::read_manifest(dataset);
            const auto scene = data::load_scene(dataset, info, pair_ordinal);
            const auto loaded = train::load_checkpoint(ckpt);
            const double theta = theta_flag >= 0.0 ? theta_flag : 0.1;
            const auto art = eval::pair_artifacts(scene, loaded, info.config.feature_noise,
                                                  theta, eopt.average_directions);
            std::filesystem::create_directories(out);
            io::save_tensor(out + "/corr_12.pqt", art.corr_12);
            io::save_tensor(out + "/corr_21.pqt", art.corr_21);
            io::save_tensor(out + "/sim_12.pqt", art.sim_12);
            io::save_tensor(out + "/sim_21.pqt", art.sim_21);
            json mj;
            mj["theta"] = theta;
            json pairs = json::array();
            for (auto [a, b] : art.mnn) pairs.push_back(json::array({a, b}));
            mj["mnn"] = pairs;
            json gtpairs = json::array();
            for (auto [a, b] : scene.correspondence) gtpairs.push_back(json::array({a, b}));
            mj["gt_correspondence"] = gtpairs;
            write_text(out + "/mnn.json", mj.dump(1) + "\n");
            std::printf("matching artifacts -> %s (pairs kept: %zu)\n", out.c_str(),
                        art.mnn.size());
        } else if (c_rec->parsed()) {
            const auto info = data::read_manifest(dataset);
            const auto scene = data::load_scene(dataset, info, pair_ordinal);
            const auto loaded = train::load_checkpoint(ckpt);
            eval::write_reconstruction_ply(out, scene, loaded, info.config.feature_noise,
                                           theta_flag >= 0.0 ? theta_flag : 0.1);
            std::printf("reconstruction -> %s\n", out.c_str());
        } else if (c_grad->parsed()) {
            const auto rep = exp::run_gradcheck_suite(seed_set ? seed_flag : 1, instances);
            double worst = 0.0;
            for (const auto& e : rep.entries) {
                std::printf("%-28s max rel err %.3e  [%s]\n", e.name.c_str(), e.max_rel_err,
                            e.pass() ? "ok" : "FAIL");
                worst = std::max(worst, e.max_rel_err);
            }
            std::printf("worst: %.3e (budget 1e-4)\n", worst);
            if (!rep.ok()) return 4;
        } else if (c_bench->parsed()) {
            const auto rep = exp::run_pose_benchmark(dataset, ckpt, eopt, draws);
            std::filesystem::create_directories(out);
            write_text(out + "/benchmark.json", exp::benchmark_to_json(rep) + "\n");
            write_text(out + "/benchmark.md", exp::benchmark_to_markdown(rep));
            for (const auto& g : rep.gates)
                std::printf("[%s] %-22s measured %.5f %s %.5f\n", g.pass ? "pass" : "FAIL",
                            g.name.c_str(), g.measured, g.at_least ? ">=" : "<=", g.threshold);
            std::printf("report -> %s\n", (out + "/benchmark.{json,md}").c_str());
            if (gate && !rep.all_pass()) return 5;
        } else if (c_abl->parsed()) {
            auto t = train_config_from(cfg, dataset, out,
                                       epochs_flag > 0 ? epochs_flag : cfg.joint_epochs);
            const auto rep = exp::run_ablations(t, ckpt, out, eopt);
            write_text(out + "/ablation.json", exp::ablation_to_json(rep) + "\n");
            write_text(out + "/ablation.md", exp::ablation_to_markdown(rep));
            std::printf("%s", exp::ablation_to_markdown(rep).c_str());
        }
        return 0;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 2;
    } catch (const ContractError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 2;
    } catch (const IoError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 3;
    } catch (const std::exception& e) {  // numeric/domain/shape/generation
        std::fprintf(stderr, "%s\n", e.what());
        return 4;
    }
}
