#include "planeq/synth.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace planeq::synth {

namespace {

using geo::PoseSE3;
using geo::Quat;
using geo::Vec3;

constexpr double kNearClip = 0.05;
constexpr double kFarClip = 100.0;

// World -> camera pose for a camera at `center` with the given yaw/pitch
// (z-up world, optical axis +z, x right, y down).
PoseSE3 camera_pose(const Vec3& center, double yaw, double pitch) {
    const Vec3 fwd{std::cos(yaw) * std::cos(pitch), std::sin(yaw) * std::cos(pitch),
                   -std::sin(pitch)};
    const Vec3 up{0, 0, 1};
    const Vec3 right = fwd.cross(up).normalized() * -1.0;  // x axis
    const Vec3 down = fwd.cross(right);                    // y axis (down)
    // rows of R are the camera axes in world coordinates
    geo::Mat3 r;
    r.m = {right.x, right.y, right.z, down.x, down.y, down.z, fwd.x, fwd.y, fwd.z};
    // quaternion from rotation matrix (rows orthonormal)
    const double tr = r.m[0] + r.m[4] + r.m[8];
    Quat q;
    if (tr > 0) {
        double s = std::sqrt(tr + 1.0) * 2;
        q = {0.25 * s, (r.m[7] - r.m[5]) / s, (r.m[2] - r.m[6]) / s, (r.m[3] - r.m[1]) / s};
    } else if (r.m[0] > r.m[4] && r.m[0] > r.m[8]) {
        double s = std::sqrt(1.0 + r.m[0] - r.m[4] - r.m[8]) * 2;
        q = {(r.m[7] - r.m[5]) / s, 0.25 * s, (r.m[1] + r.m[3]) / s, (r.m[2] + r.m[6]) / s};
    } else if (r.m[4] > r.m[8]) {
        double s = std::sqrt(1.0 + r.m[4] - r.m[0] - r.m[8]) * 2;
        q = {(r.m[2] - r.m[6]) / s, (r.m[1] + r.m[3]) / s, 0.25 * s, (r.m[5] + r.m[7]) / s};
    } else {
        double s = std::sqrt(1.0 + r.m[8] - r.m[0] - r.m[4]) * 2;
        q = {(r.m[3] - r.m[1]) / s, (r.m[2] + r.m[6]) / s, (r.m[5] + r.m[7]) / s, 0.25 * s};
    }
    const Quat qn = q.normalized();
    return PoseSE3(qn, -qn.rotate(center));
}

ScenePlane make_rect(int instance, const Vec3& n, double d, const Vec3& center, const Vec3& u,
                     double hu, double hv) {
    ScenePlane p;
    p.instance = instance;
    p.n_world = n.normalized();
    p.d_world = d;
    p.center = center;
    p.axis_u = u.normalized();
    p.axis_v = p.n_world.cross(p.axis_u).normalized();
    p.half_u = hu;
    p.half_v = hv;
    return p;
}

struct RoomLayout {
    double hx, hy, hz;  // half extents in x/y, full height in z is [0, hz]
};

// Room faces as full rectangles with outward normals (cameras inside see the
// front side of every face).
void add_room_faces(std::vector<ScenePlane>& planes, const RoomLayout& room,
                    const std::vector<int>& wall_ids, int& next_instance) {
    const double hx = room.hx, hy = room.hy, hz = room.hz;
    // floor and ceiling
    planes.push_back(make_rect(next_instance++, {0, 0, -1}, 0.0, {0, 0, 0}, {1, 0, 0}, hx, hy));
    planes.push_back(make_rect(next_instance++, {0, 0, 1}, hz, {0, 0, hz}, {1, 0, 0}, hx, hy));
    for (int w : wall_ids) {
        switch (w) {
            case 0:  // x = +hx
                planes.push_back(make_rect(next_instance++, {1, 0, 0}, hx, {hx, 0, hz / 2},
                                           {0, 1, 0}, hy, hz / 2));
                break;
            case 1:  // x = -hx
                planes.push_back(make_rect(next_instance++, {-1, 0, 0}, hx, {-hx, 0, hz / 2},
                                           {0, 1, 0}, hy, hz / 2));
                break;
            case 2:  // y = +hy
                planes.push_back(make_rect(next_instance++, {0, 1, 0}, hy, {0, hy, hz / 2},
                                           {1, 0, 0}, hx, hz / 2));
                break;
            default:  // y = -hy
                planes.push_back(make_rect(next_instance++, {0, -1, 0}, hy, {0, -hy, hz / 2},
                                           {1, 0, 0}, hx, hz / 2));
                break;
        }
    }
}

}  // namespace

ViewGt render_view(const std::vector<ScenePlane>& planes, const PoseSE3& T,
                   const geo::CameraIntrinsics& cam, int min_visible_pixels) {
    const int hw = cam.width * cam.height;
    ViewGt out;
    out.seg.assign(static_cast<size_t>(hw), -1);
    out.depth.assign(static_cast<size_t>(hw), 0.0);

    const Vec3 center = se3_inverse(T).t;  // camera center in world
    struct CamPlane {
        Vec3 n_c;
        double d_c;
        bool usable;
    };
    std::vector<CamPlane> cp;
    for (const ScenePlane& p : planes) {
        const double d_c = p.d_world - p.n_world.dot(center);
        cp.push_back({T.q.rotate(p.n_world), d_c, d_c > 1e-4});
    }

    const Quat q_inv = T.q.conj();
    for (int v = 0; v < cam.height; ++v) {
        for (int u = 0; u < cam.width; ++u) {
            const Vec3 r = cam.ray(u + 0.5, v + 0.5);
            double best_z = kFarClip;
            int best_id = -1;
            for (size_t k = 0; k < planes.size(); ++k) {
                if (!cp[k].usable) continue;
                const double denom = cp[k].n_c.dot(r);
                if (denom <= 1e-6) continue;  // back face or parallel
                const double z = cp[k].d_c / denom;
                if (z < kNearClip || z >= best_z) continue;
                const Vec3 x_w = q_inv.rotate(r * z - T.t);  // world point
                const Vec3 rel = x_w - planes[k].center;
                if (std::fabs(rel.dot(planes[k].axis_u)) > planes[k].half_u) continue;
                if (std::fabs(rel.dot(planes[k].axis_v)) > planes[k].half_v) continue;
                best_z = z;
                best_id = planes[k].instance;
            }
            if (best_id >= 0) {
                const size_t i = static_cast<size_t>(v) * cam.width + u;
                out.seg[i] = best_id;
                out.depth[i] = best_z;
            }
        }
    }

    // visible instances with camera-frame parameters and binary masks
    std::vector<int> counts(planes.size(), 0);
    for (int id : out.seg)
        if (id >= 0) ++counts[static_cast<size_t>(id)];
    for (size_t k = 0; k < planes.size(); ++k) {
        if (counts[k] < min_visible_pixels) continue;
        out.visible.push_back(planes[k].instance);
        out.planes.push_back(geo::PlaneParam::from_normal_offset(cp[k].n_c, cp[k].d_c));
        std::vector<double> mask(static_cast<size_t>(hw), 0.0);
        for (int i = 0; i < hw; ++i)
            if (out.seg[static_cast<size_t>(i)] == planes[k].instance)
                mask[static_cast<size_t>(i)] = 1.0;
        out.masks.push_back(std::move(mask));
    }
    return out;
}

double overlap_ratio(const ViewGt& v1, const ViewGt& v2, const PoseSE3& T1, const PoseSE3& T2,
                     const geo::CameraIntrinsics& cam) {
    const PoseSE3 rel = geo::se3_compose(T2, geo::se3_inverse(T1));
    int planar = 0, covisible = 0;
    for (int v = 0; v < cam.height; ++v) {
        for (int u = 0; u < cam.width; ++u) {
            const size_t i = static_cast<size_t>(v) * cam.width + u;
            if (v1.seg[i] < 0) continue;
            ++planar;
            const Vec3 x1 = cam.ray(u + 0.5, v + 0.5) * v1.depth[i];
            const Vec3 x2 = rel.apply(x1);
            if (x2.z <= kNearClip) continue;
            const int u2 = static_cast<int>(std::floor(cam.fx * x2.x / x2.z + cam.cx));
            const int r2 = static_cast<int>(std::floor(cam.fy * x2.y / x2.z + cam.cy));
            if (u2 < 0 || u2 >= cam.width || r2 < 0 || r2 >= cam.height) continue;
            const double dref = v2.depth[static_cast<size_t>(r2) * cam.width + u2];
            if (dref <= 0.0) continue;
            if (std::fabs(dref - x2.z) <= 0.05 * std::max(1.0, x2.z)) ++covisible;
        }
    }
    return planar == 0 ? 0.0 : static_cast<double>(covisible) / planar;
}

SceneSample generate_scene(const GenConfig& cfg, int index) {
    cfg.validate();
    const geo::CameraIntrinsics cam = cfg.intrinsics();
    const uint64_t scene_key = RngStream::derive(cfg.seed, static_cast<uint64_t>(index)).seed();

    std::string last_reason = "none";
    for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
        RngStream rng(RngStream::derive(scene_key, static_cast<uint64_t>(attempt)).seed());

        RoomLayout room;
        room.hx = rng.uniform(0.65, 1.0) * cfg.room_half_extent;
        room.hy = rng.uniform(0.65, 1.0) * cfg.room_half_extent;
        room.hz = rng.uniform(0.8, 1.0) * cfg.room_height;

        const int n_walls = rng.uniform_int(2, 4);
        std::vector<int> wall_ids = {0, 1, 2, 3};
        // drop walls deterministically
        while (static_cast<int>(wall_ids.size()) > n_walls)
            wall_ids.erase(wall_ids.begin() + rng.uniform_int(0, static_cast<int>(wall_ids.size()) - 1));

        const int base = 2 + n_walls;
        const int max_interior = std::min(2, cfg.max_planes - base);
        const int min_interior = std::max(0, cfg.min_planes - base);
        const int n_interior =
            max_interior <= min_interior ? std::max(0, max_interior)
                                         : rng.uniform_int(min_interior, max_interior);

        std::vector<ScenePlane> planes;
        int next_instance = 0;
        add_room_faces(planes, room, wall_ids, next_instance);

        // camera pair
        const Vec3 c1{rng.uniform(-room.hx + 0.7, room.hx - 0.7),
                      rng.uniform(-room.hy + 0.7, room.hy - 0.7),
                      rng.uniform(0.9, room.hz - 0.7)};
        const PoseSE3 t1 = camera_pose(c1, rng.uniform(0.0, 2.0 * M_PI),
                                       rng.uniform(-0.3, 0.3));

        const double rot_mag =
            rng.uniform(0.35, 1.0) * cfg.max_rotation_deg * M_PI / 180.0;
        Vec3 rot_axis{rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4), rng.uniform(-1.0, 1.0)};
        if (rot_axis.norm() < 1e-6) rot_axis = {0, 0, 1};
        Vec3 tr{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-0.35, 0.35)};
        if (tr.norm() < 1e-6) tr = {1, 0, 0};
        tr = tr.normalized() * (rng.uniform(0.3, 1.0) * cfg.max_translation_m);
        const PoseSE3 delta(Quat::from_axis_angle(rot_axis, rot_mag), tr);
        const PoseSE3 t2 = geo::se3_compose(delta, t1);

        const Vec3 c2 = geo::se3_inverse(t2).t;
        if (std::fabs(c2.x) > room.hx - 0.3 || std::fabs(c2.y) > room.hy - 0.3 ||
            c2.z < 0.4 || c2.z > room.hz - 0.3) {
            last_reason = "camera 2 outside the room";
            continue;
        }

        // interior rectangles, both cameras strictly on the front side
        bool interior_ok = true;
        for (int k = 0; k < n_interior; ++k) {
            const Vec3 center{rng.uniform(-room.hx + 0.8, room.hx - 0.8),
                              rng.uniform(-room.hy + 0.8, room.hy - 0.8),
                              rng.uniform(0.7, room.hz - 0.6)};
            Vec3 n{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-0.5, 0.5)};
            if (n.norm() < 1e-3) n = {1, 0, 0};
            n = n.normalized();
            double d = n.dot(center);
            const double s1 = n.dot(c1) - d, s2 = n.dot(c2) - d;
            if (s1 * s2 <= 0.0 || std::fabs(s1) < 0.25 || std::fabs(s2) < 0.25) {
                interior_ok = false;
                break;
            }
            if (s1 > 0) {  // flip so cameras sit on the negative side (positive offset)
                n = -n;
                d = -d;
            }
            Vec3 seed_u = std::fabs(n.z) < 0.9 ? Vec3{0, 0, 1} : Vec3{1, 0, 0};
            const Vec3 u = seed_u.cross(n).normalized();
            planes.push_back(make_rect(next_instance++, n, d, center, u,
                                       rng.uniform(0.45, 1.0), rng.uniform(0.45, 1.0)));
        }
        if (!interior_ok) {
            last_reason = "interior plane straddles the cameras";
            continue;
        }

        SceneSample s;
        s.index = index;
        s.scene_key = scene_key;
        s.planes = planes;
        s.pose[0] = t1;
        s.pose[1] = t2;
        s.cam = cam;
        s.view[0] = render_view(planes, t1, cam, cfg.min_visible_pixels);
        s.view[1] = render_view(planes, t2, cam, cfg.min_visible_pixels);

        if (static_cast<int>(s.view[0].visible.size()) < cfg.min_planes ||
            static_cast<int>(s.view[1].visible.size()) < cfg.min_planes) {
            last_reason = "too few visible planes";
            continue;
        }

        for (size_t i1 = 0; i1 < s.view[0].visible.size(); ++i1) {
            const int i2 = s.view[1].index_of_instance(s.view[0].visible[i1]);
            if (i2 >= 0) s.correspondence.push_back({static_cast<int>(i1), i2});
        }
        if (static_cast<int>(s.correspondence.size()) < cfg.min_shared_planes) {
            last_reason = "too few shared planes";
            continue;
        }

        s.overlap = overlap_ratio(s.view[0], s.view[1], t1, t2, cam);
        if (s.overlap < cfg.overlap_min || s.overlap > cfg.overlap_max) {
            last_reason = "overlap outside target range";
            continue;
        }
        return s;
    }
    throw GenerationError("scene " + std::to_string(index) + ": exhausted " +
                          std::to_string(cfg.max_attempts) + " attempts (last: " + last_reason +
                          ")");
}

geo::Vec3 instance_color(uint64_t scene_key, int instance) {
    RngStream rng = RngStream::derive(scene_key, 0xC0103ull + static_cast<uint64_t>(instance));
    return {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
}

Tensor featurize_pixels(const SceneSample& sample, int view, double sigma, uint64_t noise_key) {
    if (view != 0 && view != 1) throw ContractError("view must be 0 or 1");
    if (sigma < 0.0) throw ContractError("noise sigma must be non-negative");
    const geo::CameraIntrinsics& cam = sample.cam;
    const ViewGt& gt = sample.view[view];
    const int hw = cam.width * cam.height;
    Tensor out({hw, kRawFeatureChannels});

    RngStream noise = RngStream::derive(
        sample.scene_key, 0xFEA7ull ^ (static_cast<uint64_t>(view) << 32) ^ (noise_key * 1000003ull));

    for (int v = 0; v < cam.height; ++v) {
        for (int u = 0; u < cam.width; ++u) {
            const int i = v * cam.width + u;
            const Vec3 r = cam.ray(u + 0.5, v + 0.5);
            const int inst = gt.seg[static_cast<size_t>(i)];
            const Vec3 color = inst >= 0 ? instance_color(sample.scene_key, inst) : Vec3{0, 0, 0};
            double* row = out.data() + static_cast<size_t>(i) * kRawFeatureChannels;
            row[0] = r.x;
            row[1] = r.y;
            row[2] = r.z;
            row[3] = gt.depth[static_cast<size_t>(i)] + sigma * noise.normal();
            row[4] = color.x + sigma * noise.normal();
            row[5] = color.y + sigma * noise.normal();
            row[6] = color.z + sigma * noise.normal();
            row[7] = 1.0;
        }
    }
    return out;
}

}  // namespace planeq::synth
