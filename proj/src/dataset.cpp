#include "planeq/dataset.hpp"

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>

#include <json.hpp>

#include "planeq/tensorfile.hpp"

namespace planeq::data {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json to_json(const synth::GenConfig& c) {
    return json{{"seed", c.seed},
                {"min_planes", c.min_planes},
                {"max_planes", c.max_planes},
                {"room_half_extent", c.room_half_extent},
                {"room_height", c.room_height},
                {"max_rotation_deg", c.max_rotation_deg},
                {"max_translation_m", c.max_translation_m},
                {"overlap_min", c.overlap_min},
                {"overlap_max", c.overlap_max},
                {"width", c.width},
                {"height", c.height},
                {"focal", c.focal},
                {"min_visible_pixels", c.min_visible_pixels},
                {"min_shared_planes", c.min_shared_planes},
                {"max_attempts", c.max_attempts},
                {"feature_noise", c.feature_noise}};
}

synth::GenConfig config_from_json(const json& j) {
    synth::GenConfig c;
    c.seed = j.at("seed").get<uint64_t>();
    c.min_planes = j.at("min_planes").get<int>();
    c.max_planes = j.at("max_planes").get<int>();
    c.room_half_extent = j.at("room_half_extent").get<double>();
    c.room_height = j.at("room_height").get<double>();
    c.max_rotation_deg = j.at("max_rotation_deg").get<double>();
    c.max_translation_m = j.at("max_translation_m").get<double>();
    c.overlap_min = j.at("overlap_min").get<double>();
    c.overlap_max = j.at("overlap_max").get<double>();
    c.width = j.at("width").get<int>();
    c.height = j.at("height").get<int>();
    c.focal = j.at("focal").get<double>();
    c.min_visible_pixels = j.at("min_visible_pixels").get<int>();
    c.min_shared_planes = j.at("min_shared_planes").get<int>();
    c.max_attempts = j.at("max_attempts").get<int>();
    c.feature_noise = j.at("feature_noise").get<double>();
    return c;
}

json vec3_json(const geo::Vec3& v) { return json::array({v.x, v.y, v.z}); }
geo::Vec3 vec3_from(const json& j) { return {j.at(0), j.at(1), j.at(2)}; }

json pose_json(const geo::PoseSE3& p) {
    return json{{"q", {p.q.w, p.q.x, p.q.y, p.q.z}}, {"t", vec3_json(p.t)}};
}

geo::PoseSE3 pose_from(const json& j) {
    const auto& q = j.at("q");
    return geo::PoseSE3(geo::Quat{q.at(0), q.at(1), q.at(2), q.at(3)}, vec3_from(j.at("t")));
}

std::string ordinal_name(int ordinal) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d", ordinal);
    return buf;
}

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};

}  // namespace

std::string scene_json_path(const std::string& root, int ordinal) {
    return root + "/scenes/" + ordinal_name(ordinal) + ".json";
}

std::string scene_bin_path(const std::string& root, int ordinal) {
    return root + "/tensors/" + ordinal_name(ordinal) + ".bin";
}

void write_scene_files(const std::string& root, int ordinal, const synth::SceneSample& s) {
    json j;
    j["index"] = s.index;
    j["scene_key"] = s.scene_key;
    j["overlap"] = s.overlap;
    j["poses"] = json::array({pose_json(s.pose[0]), pose_json(s.pose[1])});

    json planes = json::array();
    for (const auto& p : s.planes) {
        planes.push_back(json{{"instance", p.instance},
                              {"n", vec3_json(p.n_world)},
                              {"d", p.d_world},
                              {"center", vec3_json(p.center)},
                              {"axis_u", vec3_json(p.axis_u)},
                              {"axis_v", vec3_json(p.axis_v)},
                              {"half_u", p.half_u},
                              {"half_v", p.half_v}});
    }
    j["planes"] = planes;

    for (int v = 0; v < 2; ++v) {
        json view;
        view["visible"] = s.view[v].visible;
        json params = json::array();
        for (const auto& p : s.view[v].planes) params.push_back(vec3_json(p.n));
        view["params"] = params;
        j["views"].push_back(view);
    }

    json corr = json::array();
    for (auto [a, b] : s.correspondence) corr.push_back(json::array({a, b}));
    j["correspondence"] = corr;

    std::ofstream out(scene_json_path(root, ordinal));
    if (!out) throw IoError("cannot write " + scene_json_path(root, ordinal));
    out << j.dump(1) << "\n";
    out.close();

    std::unique_ptr<std::FILE, FileCloser> f(
        std::fopen(scene_bin_path(root, ordinal).c_str(), "wb"));
    if (!f) throw IoError("cannot write " + scene_bin_path(root, ordinal));
    for (int v = 0; v < 2; ++v) {
        const auto& gt = s.view[v];
        Tensor seg({static_cast<int>(gt.seg.size())});
        Tensor dep({static_cast<int>(gt.depth.size())});
        for (size_t i = 0; i < gt.seg.size(); ++i) {
            seg[static_cast<int>(i)] = gt.seg[i];
            dep[static_cast<int>(i)] = gt.depth[i];
        }
        io::write_named_tensor(f.get(), "seg" + std::to_string(v), seg);
        io::write_named_tensor(f.get(), "depth" + std::to_string(v), dep);
    }
}

DatasetInfo make_dataset(const synth::GenConfig& cfg, int n_train, int n_test,
                         const std::string& root) {
    cfg.validate();
    if (n_train < 1 || n_test < 1 || n_train + n_test > 9999)
        throw ConfigError("split sizes must be in [1, 9999] total");

    fs::create_directories(root + "/scenes");
    fs::create_directories(root + "/tensors");

    DatasetInfo info;
    info.config = cfg;
    info.n_train = n_train;
    info.n_test = n_test;

    json files = json::array();
    for (int k = 0; k < n_train + n_test; ++k) {
        const bool is_test = k >= n_train;
        const int stream = is_test ? kTestStreamOffset + (k - n_train) : k;
        const synth::SceneSample s = synth::generate_scene(cfg, stream);
        write_scene_files(root, k, s);
        info.scenes.push_back({k, stream, is_test});
        char jh[24], bh[24];
        std::snprintf(jh, sizeof(jh), "%016" PRIx64, io::file_fnv64(scene_json_path(root, k)));
        std::snprintf(bh, sizeof(bh), "%016" PRIx64, io::file_fnv64(scene_bin_path(root, k)));
        files.push_back(json{{"ordinal", k},
                             {"stream_index", stream},
                             {"split", is_test ? "test" : "train"},
                             {"json_fnv64", jh},
                             {"bin_fnv64", bh}});
    }

    json manifest;
    manifest["format"] = 1;
    manifest["config"] = to_json(cfg);
    manifest["n_train"] = n_train;
    manifest["n_test"] = n_test;
    manifest["scenes"] = files;

    std::ofstream out(root + "/manifest.json");
    if (!out) throw IoError("cannot write manifest");
    out << manifest.dump(1) << "\n";
    return info;
}

DatasetInfo read_manifest(const std::string& root) {
    std::ifstream in(root + "/manifest.json");
    if (!in) throw IoError("cannot read " + root + "/manifest.json");
    json manifest;
    try {
        in >> manifest;
    } catch (const json::exception& e) {
        throw IoError(std::string("manifest parse failure: ") + e.what());
    }
    DatasetInfo info;
    info.config = config_from_json(manifest.at("config"));
    info.n_train = manifest.at("n_train").get<int>();
    info.n_test = manifest.at("n_test").get<int>();
    for (const auto& s : manifest.at("scenes"))
        info.scenes.push_back({s.at("ordinal").get<int>(), s.at("stream_index").get<int>(),
                               s.at("split").get<std::string>() == "test"});
    return info;
}

synth::SceneSample load_scene(const std::string& root, const DatasetInfo& info, int ordinal) {
    std::ifstream in(scene_json_path(root, ordinal));
    if (!in) throw IoError("cannot read " + scene_json_path(root, ordinal));
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IoError(std::string("scene parse failure: ") + e.what());
    }

    synth::SceneSample s;
    s.index = j.at("index").get<int>();
    s.scene_key = j.at("scene_key").get<uint64_t>();
    s.overlap = j.at("overlap").get<double>();
    s.pose[0] = pose_from(j.at("poses").at(0));
    s.pose[1] = pose_from(j.at("poses").at(1));
    s.cam = info.config.intrinsics();

    for (const auto& p : j.at("planes")) {
        synth::ScenePlane sp;
        sp.instance = p.at("instance").get<int>();
        sp.n_world = vec3_from(p.at("n"));
        sp.d_world = p.at("d").get<double>();
        sp.center = vec3_from(p.at("center"));
        sp.axis_u = vec3_from(p.at("axis_u"));
        sp.axis_v = vec3_from(p.at("axis_v"));
        sp.half_u = p.at("half_u").get<double>();
        sp.half_v = p.at("half_v").get<double>();
        s.planes.push_back(sp);
    }

    std::unique_ptr<std::FILE, FileCloser> f(
        std::fopen(scene_bin_path(root, ordinal).c_str(), "rb"));
    if (!f) throw IoError("cannot read " + scene_bin_path(root, ordinal));
    const int hw = s.cam.width * s.cam.height;
    for (int v = 0; v < 2; ++v) {
        auto [sname, seg] = io::read_named_tensor(f.get());
        auto [dname, dep] = io::read_named_tensor(f.get());
        if (sname != "seg" + std::to_string(v) || dname != "depth" + std::to_string(v))
            throw IoError("unexpected record order in " + scene_bin_path(root, ordinal));
        if (seg.numel() != hw || dep.numel() != hw)
            throw IoError("tensor size mismatch in " + scene_bin_path(root, ordinal));
        auto& gt = s.view[v];
        gt.seg.resize(static_cast<size_t>(hw));
        gt.depth.resize(static_cast<size_t>(hw));
        for (int i = 0; i < hw; ++i) {
            gt.seg[static_cast<size_t>(i)] = static_cast<int>(seg[i]);
            gt.depth[static_cast<size_t>(i)] = dep[i];
        }

        const auto& view = j.at("views").at(static_cast<size_t>(v));
        gt.visible = view.at("visible").get<std::vector<int>>();
        for (const auto& p : view.at("params")) gt.planes.push_back(geo::PlaneParam(vec3_from(p)));
        for (int inst : gt.visible) {
            std::vector<double> mask(static_cast<size_t>(hw), 0.0);
            for (int i = 0; i < hw; ++i)
                if (gt.seg[static_cast<size_t>(i)] == inst) mask[static_cast<size_t>(i)] = 1.0;
            gt.masks.push_back(std::move(mask));
        }
    }

    for (const auto& c : j.at("correspondence"))
        s.correspondence.push_back({c.at(0).get<int>(), c.at(1).get<int>()});
    return s;
}

}  // namespace planeq::data
