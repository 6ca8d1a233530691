#pragma once

#include <cstdint>
#include <vector>

#include "planeq/geometry.hpp"
#include "planeq/matching.hpp"
#include "planeq/rng.hpp"
#include "planeq/tensor.hpp"

namespace planeq::synth {

struct GenConfig {
    uint64_t seed = 1;
    int min_planes = 3, max_planes = 6;
    double room_half_extent = 3.0;   // max half extent of the room in x/y, meters
    double room_height = 2.8;        // max ceiling height, meters
    double max_rotation_deg = 30.0;  // relative camera rotation bound
    double max_translation_m = 1.0;  // relative camera translation bound
    double overlap_min = 0.15, overlap_max = 0.5;
    int width = 32, height = 24;
    double focal = 20.0;             // fx = fy, pixels
    int min_visible_pixels = 10;     // plane counts as visible above this
    int min_shared_planes = 3;       // accepted pairs share at least this many
    int max_attempts = 1000;
    double feature_noise = 0.02;     // default sigma for featurize_pixels

    geo::CameraIntrinsics intrinsics() const {
        return {focal, focal, width / 2.0, height / 2.0, width, height};
    }
    void validate() const {
        if (min_planes < 3 || max_planes < min_planes || max_planes > 8)
            throw ConfigError("plane count range must satisfy 3 <= min <= max <= 8");
        if (overlap_min >= overlap_max || overlap_min < 0.0 || overlap_max > 1.0)
            throw ConfigError("overlap range is degenerate");
        if (width <= 0 || height <= 0 || focal <= 0) throw ConfigError("bad camera geometry");
    }
};

// World-space finite rectangle; room faces are full-face rectangles, interior
// planes smaller ones. The normal faces the cameras (front side only).
struct ScenePlane {
    int instance = -1;
    geo::Vec3 n_world;                 // unit
    double d_world = 0.0;              // n . X = d
    geo::Vec3 center, axis_u, axis_v;  // orthonormal in-plane frame
    double half_u = 0.0, half_v = 0.0;
};

struct ViewGt {
    std::vector<int> seg;                  // HW, instance ids, -1 background
    std::vector<double> depth;             // HW, meters, 0 background
    std::vector<int> visible;              // instance ids with enough pixels
    std::vector<geo::PlaneParam> planes;   // camera-frame params, aligned with visible
    std::vector<std::vector<double>> masks;  // binary per visible plane

    int index_of_instance(int instance) const {
        for (size_t i = 0; i < visible.size(); ++i)
            if (visible[i] == instance) return static_cast<int>(i);
        return -1;
    }
};

struct SceneSample {
    int index = 0;
    uint64_t scene_key = 0;    // stream key; colors and noise derive from it
    std::vector<ScenePlane> planes;
    geo::PoseSE3 pose[2];      // world -> camera
    geo::CameraIntrinsics cam;
    ViewGt view[2];
    match::Assignment correspondence;  // (index into view0.visible, index into view1.visible)
    double overlap = 0.0;

    geo::PoseSE3 relative_pose() const {  // camera-2 from camera-1
        return geo::se3_compose(pose[1], geo::se3_inverse(pose[0]));
    }
};

// Deterministic per (cfg.seed, index); throws GenerationError after
// cfg.max_attempts rejected layouts.
SceneSample generate_scene(const GenConfig& cfg, int index);

// Render segmentation/depth for an arbitrary pose against the scene planes.
ViewGt render_view(const std::vector<ScenePlane>& planes, const geo::PoseSE3& T,
                   const geo::CameraIntrinsics& cam, int min_visible_pixels);

// Fraction of view-1 planar pixels whose 3-D point lands inside view 2 with
// consistent rendered depth (|dz| <= 5% of max(1m, depth)).
double overlap_ratio(const ViewGt& v1, const ViewGt& v2, const geo::PoseSE3& T1,
                     const geo::PoseSE3& T2, const geo::CameraIntrinsics& cam);

// Raw per-pixel features [HW, 8]: ray direction (3), noisy depth (1), noisy
// per-instance color code (3), constant bias (1). `noise_key` selects an
// independent deterministic noise draw (e.g. the training epoch).
Tensor featurize_pixels(const SceneSample& sample, int view, double sigma,
                        uint64_t noise_key = 0);

inline constexpr int kRawFeatureChannels = 8;

geo::Vec3 instance_color(uint64_t scene_key, int instance);

}  // namespace planeq::synth
