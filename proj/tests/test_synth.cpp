#include <doctest.h>

#include <cmath>
#include <set>

#include "planeq/synth.hpp"

using namespace planeq;
using namespace planeq::synth;

namespace {

GenConfig test_config(uint64_t seed = 11) {
    GenConfig cfg;
    cfg.seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("scene generation") {
    const GenConfig cfg = test_config();

    SUBCASE("deterministic for a fixed seed") {
        const SceneSample a = generate_scene(cfg, 3);
        const SceneSample b = generate_scene(cfg, 3);
        CHECK(a.overlap == b.overlap);
        CHECK(a.view[0].seg == b.view[0].seg);
        CHECK(a.view[1].depth == b.view[1].depth);
        CHECK(a.pose[1].q.w == b.pose[1].q.w);
        CHECK(a.pose[1].t.x == b.pose[1].t.x);
        const SceneSample c = generate_scene(test_config(12), 3);
        CHECK(a.view[0].seg != c.view[0].seg);
    }

    SUBCASE("sample invariants over a batch of scenes") {
        for (int idx = 0; idx < 20; ++idx) {
            const SceneSample s = generate_scene(cfg, idx);

            CHECK(s.overlap >= cfg.overlap_min);
            CHECK(s.overlap <= cfg.overlap_max);
            CHECK(static_cast<int>(s.planes.size()) <= cfg.max_planes);
            CHECK(static_cast<int>(s.correspondence.size()) >= cfg.min_shared_planes);

            // relative pose within the configured perturbation bounds
            const geo::PoseSE3 rel = s.relative_pose();
            CHECK(rel.t.norm() <= cfg.max_translation_m + 1e-9);
            CHECK(2.0 * std::acos(std::min(1.0, std::fabs(rel.q.w))) <=
                  cfg.max_rotation_deg * M_PI / 180.0 + 1e-9);

            for (int v = 0; v < 2; ++v) {
                const ViewGt& gt = s.view[v];
                // depth satisfies the camera-frame plane equation on every pixel
                for (int py = 0; py < s.cam.height; ++py)
                    for (int px = 0; px < s.cam.width; ++px) {
                        const size_t i = static_cast<size_t>(py) * s.cam.width + px;
                        if (gt.seg[i] < 0) {
                            CHECK(gt.depth[i] == 0.0);
                            continue;
                        }
                        const int vi = gt.index_of_instance(gt.seg[i]);
                        if (vi < 0) continue;  // sub-threshold instance
                        const geo::Vec3 x =
                            s.cam.ray(px + 0.5, py + 0.5) * gt.depth[i];
                        CHECK(std::fabs(gt.planes[static_cast<size_t>(vi)].n.dot(x) - 1.0) <
                              1e-6);
                    }
            }

            // correspondence is injective both ways
            std::set<int> l, r;
            for (auto [a, b] : s.correspondence) {
                CHECK(l.insert(a).second);
                CHECK(r.insert(b).second);
            }

            // cross-view consistency: transform of a view-1 plane equals the
            // stored view-2 plane of the same instance
            const geo::PoseSE3 t21 = s.relative_pose();
            for (auto [i1, i2] : s.correspondence) {
                const geo::PlaneParam moved =
                    geo::plane_transform(s.view[0].planes[static_cast<size_t>(i1)], t21);
                const geo::Vec3 diff =
                    moved.n - s.view[1].planes[static_cast<size_t>(i2)].n;
                CHECK(diff.norm() < 1e-9);
            }
        }
    }

    SUBCASE("rendered depth matches the analytic renderer on segmented pixels") {
        const SceneSample s = generate_scene(cfg, 5);
        const ViewGt& gt = s.view[0];
        for (int py = 0; py < s.cam.height; ++py)
            for (int px = 0; px < s.cam.width; ++px) {
                const size_t i = static_cast<size_t>(py) * s.cam.width + px;
                if (gt.seg[i] < 0) continue;
                const int vi = gt.index_of_instance(gt.seg[i]);
                if (vi < 0) continue;
                const double z = geo::render_plane_depth(gt.planes[static_cast<size_t>(vi)],
                                                         s.cam, px + 0.5, py + 0.5);
                CHECK(std::fabs(z - gt.depth[i]) < 1e-9);
            }
    }

    SUBCASE("identity pose pair covers everything") {
        const SceneSample s = generate_scene(cfg, 7);
        CHECK(overlap_ratio(s.view[0], s.view[0], s.pose[0], s.pose[0], s.cam) ==
              doctest::Approx(1.0));
    }

    SUBCASE("impossible overlap target raises a generation error") {
        GenConfig bad = cfg;
        bad.overlap_min = 0.998;
        bad.overlap_max = 0.999;
        bad.max_attempts = 25;
        CHECK_THROWS_AS(generate_scene(bad, 0), GenerationError);
    }
}

TEST_CASE("pixel featurizer") {
    const GenConfig cfg = test_config();
    const SceneSample s = generate_scene(cfg, 2);

    SUBCASE("shape and bias channel") {
        const Tensor f = featurize_pixels(s, 0, 0.0);
        CHECK(f.dims() == std::vector<int>{768, 8});
        for (int i = 0; i < 768; ++i) CHECK(f.at2(i, 7) == 1.0);
    }

    SUBCASE("center pixel ray is the optical axis") {
        const Tensor f = featurize_pixels(s, 0, 0.0);
        const int center = (s.cam.height / 2) * s.cam.width + s.cam.width / 2;
        // cam.ray uses the pixel midpoint; the principal point sits on the
        // corner of the four central pixels, so the ray tilts by half a pixel
        CHECK(f.at2(center, 0) == doctest::Approx(0.5 / s.cam.fx));
        CHECK(f.at2(center, 1) == doctest::Approx(0.5 / s.cam.fy));
        CHECK(f.at2(center, 2) == 1.0);
    }

    SUBCASE("noise-free pixels of one plane share a color code") {
        const Tensor f = featurize_pixels(s, 0, 0.0);
        const ViewGt& gt = s.view[0];
        int seen = -1;
        double c4 = 0, c5 = 0, c6 = 0;
        for (int i = 0; i < 768; ++i) {
            if (gt.seg[static_cast<size_t>(i)] != gt.visible[0]) continue;
            if (seen < 0) {
                seen = i;
                c4 = f.at2(i, 4);
                c5 = f.at2(i, 5);
                c6 = f.at2(i, 6);
            } else {
                CHECK(f.at2(i, 4) == c4);
                CHECK(f.at2(i, 5) == c5);
                CHECK(f.at2(i, 6) == c6);
            }
        }
        CHECK(seen >= 0);
    }

    SUBCASE("noise draws are deterministic per key and differ across keys") {
        const Tensor a = featurize_pixels(s, 0, 0.05, 3);
        const Tensor b = featurize_pixels(s, 0, 0.05, 3);
        const Tensor c = featurize_pixels(s, 0, 0.05, 4);
        CHECK(a.vec() == b.vec());
        CHECK(a.vec() != c.vec());
    }
}
