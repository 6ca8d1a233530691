#include <doctest.h>

#include <cmath>

#include "planeq/geometry.hpp"
#include "planeq/rng.hpp"

using namespace planeq;
using namespace planeq::geo;

namespace {

PoseSE3 random_pose(RngStream& rng, double max_angle = M_PI - 1e-3) {
    const Vec3 axis{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const double angle = rng.uniform(0.0, max_angle);
    const Vec3 t{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
    if (axis.norm() < 1e-6) return PoseSE3(Quat::identity(), t);
    return PoseSE3(Quat::from_axis_angle(axis, angle), t);
}

double pose_diff(const PoseSE3& a, const PoseSE3& b) {
    const double qd = std::min(
        std::sqrt((a.q.w - b.q.w) * (a.q.w - b.q.w) + (a.q.x - b.q.x) * (a.q.x - b.q.x) +
                  (a.q.y - b.q.y) * (a.q.y - b.q.y) + (a.q.z - b.q.z) * (a.q.z - b.q.z)),
        std::sqrt((a.q.w + b.q.w) * (a.q.w + b.q.w) + (a.q.x + b.q.x) * (a.q.x + b.q.x) +
                  (a.q.y + b.q.y) * (a.q.y + b.q.y) + (a.q.z + b.q.z) * (a.q.z + b.q.z)));
    return qd + (a.t - b.t).norm();
}

}  // namespace

TEST_CASE("se3 compose and inverse") {
    RngStream rng(5);

    SUBCASE("identity law") {
        const PoseSE3 a = random_pose(rng);
        CHECK(pose_diff(se3_compose(a, PoseSE3::identity()), a) < 1e-14);
        CHECK(pose_diff(se3_compose(PoseSE3::identity(), a), a) < 1e-14);
    }

    SUBCASE("pure translation inverse") {
        const PoseSE3 a(Quat::identity(), {1, 0, 0});
        const PoseSE3 inv = se3_inverse(a);
        CHECK(inv.t.x == doctest::Approx(-1.0));
        CHECK(inv.q.w == doctest::Approx(1.0));
    }

    SUBCASE("associativity") {
        for (int i = 0; i < 100; ++i) {
            const PoseSE3 a = random_pose(rng), b = random_pose(rng), c = random_pose(rng);
            CHECK(pose_diff(se3_compose(se3_compose(a, b), c),
                            se3_compose(a, se3_compose(b, c))) < 1e-12);
        }
    }

    SUBCASE("compose with inverse gives identity") {
        for (int i = 0; i < 100; ++i) {
            const PoseSE3 a = random_pose(rng);
            const PoseSE3 e = se3_compose(a, se3_inverse(a));
            CHECK(pose_diff(e, PoseSE3::identity()) < 1e-12);
        }
    }
}

TEST_CASE("se3 log and exp") {
    SUBCASE("identity maps to exact zero") {
        const Twist g = se3_log(PoseSE3::identity());
        for (double v : g) CHECK(v == 0.0);
    }

    SUBCASE("pure translation") {
        const Twist g = se3_log(PoseSE3(Quat::identity(), {0.3, 0, 0}));
        CHECK(g[0] == doctest::Approx(0.3));
        CHECK(g[1] == 0.0);
        CHECK(g[2] == 0.0);
        CHECK(g[3] == 0.0);
        CHECK(g[4] == 0.0);
        CHECK(g[5] == 0.0);
    }

    SUBCASE("pure rotation about z") {
        const Twist g = se3_log(PoseSE3(Quat::from_axis_angle({0, 0, 1}, M_PI / 2), {0, 0, 0}));
        CHECK(g[5] == doctest::Approx(M_PI / 2).epsilon(1e-12));
        for (int i = 0; i < 5; ++i) CHECK(std::fabs(g[i]) < 1e-12);
    }

    SUBCASE("round trip over 10000 random poses") {
        RngStream rng(17);
        double worst = 0.0;
        for (int i = 0; i < 10000; ++i) {
            const PoseSE3 T = random_pose(rng);
            const PoseSE3 back = se3_exp(se3_log(T));
            worst = std::max(worst, pose_diff(back, T));
        }
        CHECK(worst < 1e-9);
    }

    SUBCASE("round trip near zero and near pi") {
        RngStream rng(18);
        for (int i = 0; i < 200; ++i) {
            const Vec3 axis{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.2, 1)};
            for (double angle : {1e-12, 1e-8, 1e-5, M_PI - 1e-3, M_PI - 1e-7}) {
                const PoseSE3 T(Quat::from_axis_angle(axis, angle),
                                {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
                CHECK(pose_diff(se3_exp(se3_log(T)), T) < 1e-9);
            }
        }
    }
}

TEST_CASE("plane transform") {
    SUBCASE("identity pose keeps plane") {
        const PlaneParam p = PlaneParam::from_normal_offset({0, 0, 1}, 2.0);
        const PlaneParam q = plane_transform(p, PoseSE3::identity());
        CHECK((q.n - p.n).norm() < 1e-15);
    }

    SUBCASE("translation toward plane reduces offset") {
        const PlaneParam p = PlaneParam::from_normal_offset({0, 0, 1}, 2.0);
        const PlaneParam q = plane_transform(p, PoseSE3(Quat::identity(), {0, 0, -1}));
        CHECK(q.offset() == doctest::Approx(1.0));
        CHECK((q.unit_normal() - Vec3{0, 0, 1}).norm() < 1e-15);
    }

    SUBCASE("round trip through inverse") {
        RngStream rng(23);
        for (int i = 0; i < 200; ++i) {
            PoseSE3 T = random_pose(rng);
            const PlaneParam p = PlaneParam::from_normal_offset(
                Vec3{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.2, 1)}.normalized(),
                rng.uniform(0.5, 4.0));
            try {
                const PlaneParam q = plane_transform(p, T);
                const PlaneParam back = plane_transform(q, se3_inverse(T));
                CHECK((back.n - p.n).norm() < 1e-12);
            } catch (const DomainError&) {
                // degenerate transforms are allowed to refuse
            }
        }
    }

    SUBCASE("composition property") {
        RngStream rng(29);
        int checked = 0;
        while (checked < 100) {
            const PoseSE3 a = random_pose(rng), b = random_pose(rng);
            const PlaneParam p = PlaneParam::from_normal_offset(
                Vec3{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.2, 1)}.normalized(),
                rng.uniform(1.0, 5.0));
            try {
                const PlaneParam two_step = plane_transform(plane_transform(p, b), a);
                const PlaneParam one_step = plane_transform(p, se3_compose(a, b));
                CHECK((two_step.n - one_step.n).norm() < 1e-10);
                ++checked;
            } catch (const DomainError&) {
            }
        }
    }

    SUBCASE("degenerate plane raises") {
        const PlaneParam p = PlaneParam::from_normal_offset({0, 0, 1}, 1.0);
        CHECK_THROWS_AS(plane_transform(p, PoseSE3(Quat::identity(), {0, 0, -1})), DomainError);
    }
}

TEST_CASE("plane depth rendering") {
    CameraIntrinsics cam{20.0, 20.0, 16.0, 12.0, 32, 24};
    cam.validate();

    SUBCASE("fronto-parallel plane at optical axis") {
        const PlaneParam p = PlaneParam::from_normal_offset({0, 0, 1}, 2.0);
        CHECK(render_plane_depth(p, cam, 16.0, 12.0) == doctest::Approx(2.0));
    }

    SUBCASE("tilted plane") {
        const PlaneParam p =
            PlaneParam::from_normal_offset(Vec3{0, 1, 1}.normalized(), 1.0);
        CHECK(render_plane_depth(p, cam, 16.0, 12.0) == doctest::Approx(std::sqrt(2.0)));
    }

    SUBCASE("parallel ray raises") {
        const PlaneParam p = PlaneParam::from_normal_offset({0, 1, 0}, 1.0);
        // center ray is (0,0,1): n.r = 0
        CHECK_THROWS_AS(render_plane_depth(p, cam, 16.0, 12.0), DomainError);
    }

    SUBCASE("rendered points satisfy the plane equation") {
        RngStream rng(31);
        for (int i = 0; i < 500; ++i) {
            const PlaneParam p = PlaneParam::from_normal_offset(
                Vec3{rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), 1.0}.normalized(),
                rng.uniform(0.5, 5.0));
            const double u = rng.uniform(0.0, 32.0), v = rng.uniform(0.0, 24.0);
            double z;
            try {
                z = render_plane_depth(p, cam, u, v);
            } catch (const DomainError&) {
                continue;
            }
            const Vec3 x = cam.ray(u, v) * z;
            CHECK(std::fabs(p.n.dot(x) - 1.0) < 1e-9);
        }
    }
}

TEST_CASE("depth map from planes") {
    CameraIntrinsics cam{20.0, 20.0, 16.0, 12.0, 32, 24};

    SUBCASE("single fronto-parallel plane fills the map") {
        std::vector<int> seg(32 * 24, 0);
        const auto r = depth_map_from_planes(
            seg, {PlaneParam::from_normal_offset({0, 0, 1}, 2.0)}, cam);
        for (double d : r.depth) CHECK(d == doctest::Approx(2.0));
        CHECK(r.invalid_count == 0);
    }

    SUBCASE("all background gives zero map") {
        std::vector<int> seg(32 * 24, -1);
        const auto r = depth_map_from_planes(seg, {}, cam);
        for (double d : r.depth) CHECK(d == 0.0);
    }

    SUBCASE("matches per-pixel oracle on a two-plane scene") {
        std::vector<PlaneParam> planes = {
            PlaneParam::from_normal_offset({0, 0, 1}, 3.0),
            PlaneParam::from_normal_offset(Vec3{0.2, 0.1, 1.0}.normalized(), 1.5)};
        std::vector<int> seg(32 * 24);
        for (int v = 0; v < 24; ++v)
            for (int u = 0; u < 32; ++u) seg[static_cast<size_t>(v) * 32 + u] = u < 16 ? 0 : 1;
        const auto r = depth_map_from_planes(seg, planes, cam);
        for (int v = 0; v < 24; ++v)
            for (int u = 0; u < 32; ++u) {
                const size_t i = static_cast<size_t>(v) * 32 + u;
                const double want = render_plane_depth(planes[static_cast<size_t>(seg[i])], cam,
                                                       u + 0.5, v + 0.5);
                CHECK(r.depth[i] == want);
            }
    }

    SUBCASE("out-of-range plane index raises") {
        std::vector<int> seg(32 * 24, 3);
        CHECK_THROWS_AS(
            depth_map_from_planes(seg, {PlaneParam::from_normal_offset({0, 0, 1}, 1.0)}, cam),
            ContractError);
    }
}

TEST_CASE("plane fusion") {
    SUBCASE("identical planes under identity pose fuse to themselves") {
        RngStream rng(37);
        for (int i = 0; i < 50; ++i) {
            const PlaneParam p = PlaneParam::from_normal_offset(
                Vec3{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.3, 1)}.normalized(),
                rng.uniform(0.5, 4.0));
            const auto r = fuse_planes({{p, p, 0, 0}}, PoseSE3::identity());
            REQUIRE(r.fused.size() == 1);
            CHECK((r.fused[0].plane.n - p.n).norm() < 1e-12);
        }
    }

    SUBCASE("angle beyond threshold is rejected") {
        const PlaneParam a = PlaneParam::from_normal_offset({0, 0, 1}, 2.0);
        const PlaneParam b = PlaneParam::from_normal_offset(
            {std::sin(45.0 * M_PI / 180.0), 0, std::cos(45.0 * M_PI / 180.0)}, 2.0);
        const auto r = fuse_planes({{a, b, 0, 0}}, PoseSE3::identity());
        CHECK(r.fused.empty());
        REQUIRE(r.rejected.size() == 1);
        CHECK(r.rejected[0].reason == FuseReject::NormalDeviation);
    }

    SUBCASE("offset gap beyond threshold is rejected") {
        const PlaneParam a = PlaneParam::from_normal_offset({0, 0, 1}, 1.0);
        const PlaneParam b = PlaneParam::from_normal_offset({0, 0, 1}, 1.8);
        const auto r = fuse_planes({{a, b, 0, 0}}, PoseSE3::identity());
        REQUIRE(r.rejected.size() == 1);
        CHECK(r.rejected[0].reason == FuseReject::OffsetDeviation);
    }

    SUBCASE("ten-degree pair fuses to averaged attributes") {
        const double ang = 10.0 * M_PI / 180.0;
        const PlaneParam a = PlaneParam::from_normal_offset({0, 0, 1}, 2.0);
        const PlaneParam b =
            PlaneParam::from_normal_offset({std::sin(ang), 0, std::cos(ang)}, 2.2);
        const auto r = fuse_planes({{a, b, 0, 0}}, PoseSE3::identity());
        REQUIRE(r.fused.size() == 1);
        CHECK(r.fused[0].plane.offset() == doctest::Approx(2.1));
        const Vec3 want = (Vec3{0, 0, 1} + Vec3{std::sin(ang), 0, std::cos(ang)}).normalized();
        CHECK((r.fused[0].plane.unit_normal() - want).norm() < 1e-12);
    }
}
