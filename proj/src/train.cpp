#include "planeq/train.hpp"

#include <atomic>
#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "planeq/tensorfile.hpp"

namespace planeq::train {

using diff::Graph;
using diff::NodeId;

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
    if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
    threads = std::max(1, std::min(threads, n));
    if (threads == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;
    auto work = [&] {
        for (int i; (i = next.fetch_add(1)) < n;) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

std::vector<synth::SceneSample> load_split(const std::string& root, const data::DatasetInfo& info,
                                           bool test_split) {
    std::vector<synth::SceneSample> out;
    for (const auto& ref : info.scenes)
        if (ref.is_test == test_split) out.push_back(data::load_scene(root, info, ref.ordinal));
    return out;
}

namespace {

struct SampleGrads {
    std::map<std::string, Tensor> grads;
    EpochStats stats;
};

void accumulate_grads(std::map<std::string, Tensor>& into,
                      const std::map<std::string, Tensor>& from) {
    for (const auto& [name, g] : from) {
        auto it = into.find(name);
        if (it == into.end()) {
            into.emplace(name, g);
        } else {
            Tensor& dst = it->second;
            for (int i = 0; i < g.numel(); ++i) dst[i] += g[i];
        }
    }
}

void scale_grads(std::map<std::string, Tensor>& grads, double s) {
    for (auto& [name, g] : grads)
        for (int i = 0; i < g.numel(); ++i) g[i] *= s;
}

std::vector<int> shuffled_order(int n, uint64_t seed, int epoch) {
    std::vector<int> order(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    RngStream rng = RngStream::derive(seed, 0x5EEDull + static_cast<uint64_t>(epoch));
    for (int i = n - 1; i > 0; --i)
        std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(rng.uniform_int(0, i))]);
    return order;
}

void write_loss_csv(const std::string& path, const std::vector<EpochStats>& stats,
                    bool with_pose) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "epoch,total,cls,param,mask,depth";
    if (with_pose) out << ",pose";
    out << "\n";
    char buf[256];
    for (const auto& s : stats) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g,%.17g", s.epoch, s.total,
                      s.cls, s.param, s.mask, s.depth);
        out << buf;
        if (with_pose) {
            std::snprintf(buf, sizeof(buf), ",%.17g", s.pose);
            out << buf;
        }
        out << "\n";
    }
}

double sigma_for(const TrainConfig& cfg, const data::DatasetInfo& info) {
    return cfg.feature_noise >= 0.0 ? cfg.feature_noise : info.config.feature_noise;
}

// One monocular training sample: forward, match, loss, backward.
SampleGrads mono_sample_pass(const TrainConfig& cfg, ParamStore& ps,
                             const synth::SceneSample& scene, int view, double sigma,
                             uint64_t noise_key) {
    Graph g;
    const Tensor raw = synth::featurize_pixels(scene, view, sigma, noise_key);
    const model::MonoForward fwd = model::mono_forward(g, ps, raw, cfg.model);

    const auto preds = model::extract_predictions(g, fwd);
    const auto gts = model::matchable_ground_truth(scene.view[view]);
    const auto assignment =
        match::bipartite_match(preds, gts, scene.view[view].depth, cfg.weights);

    loss::MonoLossInputs in{fwd.props.probs, fwd.props.params, fwd.maps.mask_probs,
                            fwd.maps.depths};
    const auto parts =
        loss::total_mono_loss(g, in, model::mono_ground_truth(scene.view[view]), assignment,
                              cfg.weights);

    SampleGrads out;
    out.grads = g.backward(parts.total);
    out.stats.total = g.value(parts.total)[0];
    out.stats.cls = g.value(parts.cls)[0];
    out.stats.param = g.value(parts.param)[0];
    out.stats.mask = g.value(parts.mask)[0];
    out.stats.depth = g.value(parts.depth)[0];
    return out;
}

// One joint training pair: both views plus the pose objective.
SampleGrads pair_sample_pass(const TrainConfig& cfg, ParamStore& ps,
                             const synth::SceneSample& scene, double sigma, uint64_t noise_key) {
    Graph g;
    const Tensor raw0 = synth::featurize_pixels(scene, 0, sigma, noise_key);
    const Tensor raw1 = synth::featurize_pixels(scene, 1, sigma, noise_key);
    const model::PairForward fwd = model::pair_forward(g, ps, raw0, raw1, cfg.model);

    NodeId mono_total;
    EpochStats stats;
    for (int v = 0; v < 2; ++v) {
        const auto preds = model::extract_predictions(g, fwd.view[v]);
        const auto gts = model::matchable_ground_truth(scene.view[v]);
        const auto assignment =
            match::bipartite_match(preds, gts, scene.view[v].depth, cfg.weights);
        loss::MonoLossInputs in{fwd.view[v].props.probs, fwd.view[v].props.params,
                                fwd.view[v].maps.mask_probs, fwd.view[v].maps.depths};
        const auto parts = loss::total_mono_loss(g, in, model::mono_ground_truth(scene.view[v]),
                                                 assignment, cfg.weights);
        mono_total = v == 0 ? parts.total : g.add(mono_total, parts.total);
        stats.cls += 0.5 * g.value(parts.cls)[0];
        stats.param += 0.5 * g.value(parts.param)[0];
        stats.mask += 0.5 * g.value(parts.mask)[0];
        stats.depth += 0.5 * g.value(parts.depth)[0];
    }

    NodeId pose_loss =
        loss::pose_loss_node(g, fwd.pose.q, fwd.pose.t, scene.relative_pose(), cfg.weights);
    NodeId total = g.add(pose_loss, g.scale(mono_total, cfg.weights.mono_scale_joint));

    SampleGrads out;
    out.grads = g.backward(total);
    out.stats = stats;
    out.stats.pose = g.value(pose_loss)[0];
    out.stats.total = g.value(total)[0];
    return out;
}

}  // namespace

TrainResult train_mono(const TrainConfig& cfg) {
    cfg.model.validate();
    cfg.weights.validate();
    const data::DatasetInfo info = data::read_manifest(cfg.dataset_root);
    const auto scenes = load_split(cfg.dataset_root, info, false);
    if (scenes.empty()) throw ContractError("empty train split");
    const double sigma = sigma_for(cfg, info);

    std::filesystem::create_directories(cfg.out_dir);
    ParamStore ps(cfg.seed);
    {
        // materialize every parameter once so worker threads never mutate
        Graph warmup;
        (void)model::mono_forward(warmup, ps, synth::featurize_pixels(scenes[0], 0, sigma, 1),
                                  cfg.model);
    }
    AdamW opt(cfg.opt);

    std::vector<std::pair<int, int>> samples;  // (scene, view)
    for (size_t i = 0; i < scenes.size(); ++i) {
        samples.push_back({static_cast<int>(i), 0});
        samples.push_back({static_cast<int>(i), 1});
    }

    TrainResult result;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto order = shuffled_order(static_cast<int>(samples.size()), cfg.seed, epoch);
        EpochStats es;
        es.epoch = epoch;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
            const int bn = static_cast<int>(
                std::min(order.size() - start, static_cast<size_t>(cfg.batch_size)));
            std::vector<SampleGrads> results(static_cast<size_t>(bn));
            parallel_for(bn, cfg.threads, [&](int k) {
                const auto [si, view] = samples[static_cast<size_t>(order[start + static_cast<size_t>(k)])];
                results[static_cast<size_t>(k)] =
                    mono_sample_pass(cfg, ps, scenes[static_cast<size_t>(si)], view, sigma,
                                     static_cast<uint64_t>(epoch) + 1);
            });
            std::map<std::string, Tensor> grads;
            for (const auto& r : results) {
                accumulate_grads(grads, r.grads);
                es.total += r.stats.total;
                es.cls += r.stats.cls;
                es.param += r.stats.param;
                es.mask += r.stats.mask;
                es.depth += r.stats.depth;
            }
            scale_grads(grads, 1.0 / bn);
            opt.step(ps, grads);
        }
        const double n = static_cast<double>(samples.size());
        es.total /= n;
        es.cls /= n;
        es.param /= n;
        es.mask /= n;
        es.depth /= n;
        result.epochs.push_back(es);
    }

    result.checkpoint_path = cfg.out_dir + "/mono.ckpt";
    save_checkpoint(result.checkpoint_path, cfg.model, ps);
    write_loss_csv(cfg.out_dir + "/mono_loss.csv", result.epochs, false);
    return result;
}

TrainResult train_pose(const TrainConfig& cfg) {
    cfg.model.validate();
    cfg.weights.validate();
    const data::DatasetInfo info = data::read_manifest(cfg.dataset_root);
    const auto scenes = load_split(cfg.dataset_root, info, false);
    if (scenes.empty()) throw ContractError("empty train split");
    const double sigma = sigma_for(cfg, info);

    std::filesystem::create_directories(cfg.out_dir);
    std::unique_ptr<ParamStore> store;
    if (cfg.from_scratch || cfg.init_checkpoint.empty()) {
        if (!cfg.from_scratch)
            throw ConfigError("joint training needs a monocular checkpoint or --from-scratch");
        store = std::make_unique<ParamStore>(cfg.seed);
    } else {
        Checkpoint ck = load_checkpoint(cfg.init_checkpoint);
        if (model_config_mismatch(ck.model, cfg.model))
            throw ConfigError("checkpoint model configuration does not match");
        store = std::make_unique<ParamStore>(std::move(ck.params));
    }
    ParamStore& ps = *store;
    {
        Graph warmup;
        (void)model::pair_forward(warmup, ps, synth::featurize_pixels(scenes[0], 0, sigma, 1),
                                  synth::featurize_pixels(scenes[0], 1, sigma, 1), cfg.model);
    }
    AdamW opt(cfg.opt);

    TrainResult result;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto order = shuffled_order(static_cast<int>(scenes.size()), cfg.seed, 7777 + epoch);
        EpochStats es;
        es.epoch = epoch;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
            const int bn = static_cast<int>(
                std::min(order.size() - start, static_cast<size_t>(cfg.batch_size)));
            std::vector<SampleGrads> results(static_cast<size_t>(bn));
            parallel_for(bn, cfg.threads, [&](int k) {
                const int si = order[start + static_cast<size_t>(k)];
                results[static_cast<size_t>(k)] =
                    pair_sample_pass(cfg, ps, scenes[static_cast<size_t>(si)], sigma,
                                     static_cast<uint64_t>(epoch) + 1);
            });
            std::map<std::string, Tensor> grads;
            for (const auto& r : results) {
                accumulate_grads(grads, r.grads);
                es.total += r.stats.total;
                es.cls += r.stats.cls;
                es.param += r.stats.param;
                es.mask += r.stats.mask;
                es.depth += r.stats.depth;
                es.pose += r.stats.pose;
            }
            scale_grads(grads, 1.0 / bn);
            opt.step(ps, grads);
        }
        const double n = static_cast<double>(scenes.size());
        es.total /= n;
        es.cls /= n;
        es.param /= n;
        es.mask /= n;
        es.depth /= n;
        es.pose /= n;
        result.epochs.push_back(es);
    }

    result.checkpoint_path = cfg.out_dir + "/joint.ckpt";
    save_checkpoint(result.checkpoint_path, cfg.model, ps);
    write_loss_csv(cfg.out_dir + "/joint_loss.csv", result.epochs, true);
    return result;
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};

void put_u32(std::FILE* f, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    if (std::fwrite(b, 1, 4, f) != 4) throw IoError("short write");
}

uint32_t get_u32(std::FILE* f) {
    unsigned char b[4];
    if (std::fread(b, 1, 4, f) != 4) throw IoError("short read");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

bool model_config_mismatch(const model::ModelConfig& a, const model::ModelConfig& b) {
    return model::model_config_to_json(a) != model::model_config_to_json(b);
}

void save_checkpoint(const std::string& path, const model::ModelConfig& cfg,
                     const ParamStore& params) {
    std::unique_ptr<std::FILE, FileCloser> f(std::fopen(path.c_str(), "wb"));
    if (!f) throw IoError("cannot write " + path);
    if (std::fwrite("PQCK", 1, 4, f.get()) != 4) throw IoError("short write");
    put_u32(f.get(), 1);  // version
    nlohmann::json header;
    header["model"] = nlohmann::json::parse(model::model_config_to_json(cfg));
    header["init_seed"] = params.init_seed();
    const std::string htext = header.dump();
    put_u32(f.get(), static_cast<uint32_t>(htext.size()));
    if (std::fwrite(htext.data(), 1, htext.size(), f.get()) != htext.size())
        throw IoError("short write");
    put_u32(f.get(), static_cast<uint32_t>(params.values().size()));
    for (const auto& [name, t] : params.values()) io::write_named_tensor(f.get(), name, t);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::unique_ptr<std::FILE, FileCloser> f(std::fopen(path.c_str(), "rb"));
    if (!f) throw IoError("cannot read " + path);
    char magic[4];
    if (std::fread(magic, 1, 4, f.get()) != 4 || std::memcmp(magic, "PQCK", 4) != 0)
        throw IoError("bad checkpoint magic in " + path);
    if (get_u32(f.get()) != 1) throw IoError("unsupported checkpoint version");
    const uint32_t hlen = get_u32(f.get());
    std::string htext(hlen, '\0');
    if (std::fread(htext.data(), 1, hlen, f.get()) != hlen) throw IoError("short read");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(htext);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("checkpoint header parse failure: ") + e.what());
    }

    Checkpoint out{model::model_config_from_json(header.at("model").dump()),
                   ParamStore(header.at("init_seed").get<uint64_t>())};
    const uint32_t count = get_u32(f.get());
    for (uint32_t i = 0; i < count; ++i) {
        auto [name, t] = io::read_named_tensor(f.get());
        out.params.fetch_init(name, t);
    }
    return out;
}

}  // namespace planeq::train
