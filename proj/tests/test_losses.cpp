#include <doctest.h>

#include <cmath>

#include "planeq/losses.hpp"
#include "planeq/matching.hpp"
#include "planeq/rng.hpp"

using namespace planeq;
using namespace planeq::loss;
using diff::Graph;
using diff::NodeId;

namespace {

geo::PoseSE3 random_pose(RngStream& rng, double max_angle = 2.5) {
    const geo::Vec3 axis{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.1, 1)};
    return geo::PoseSE3(geo::Quat::from_axis_angle(axis, rng.uniform(0.05, max_angle)),
                        {rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5)});
}

}  // namespace

TEST_CASE("mask loss") {
    SUBCASE("perfect binary mask is zero within clamp epsilon") {
        std::vector<double> m = {1, 0, 1, 1, 0, 0, 1, 0};
        CHECK(mask_loss_value(m, m) < 1e-4);
    }

    SUBCASE("disjoint mask saturates the dice term") {
        std::vector<double> t = {1, 0, 1, 1, 0, 0, 1, 0};
        std::vector<double> m(t.size());
        for (size_t i = 0; i < t.size(); ++i) m[i] = 1.0 - t[i];
        CHECK(dice_value(m, t) == doctest::Approx(1.0).epsilon(1e-6));
    }

    SUBCASE("graph node matches the plain formula on random masks") {
        RngStream rng(61);
        for (int rep = 0; rep < 20; ++rep) {
            const int hw = 16;
            std::vector<double> m(hw), t(hw);
            for (int i = 0; i < hw; ++i) {
                m[static_cast<size_t>(i)] = rng.uniform(0.02, 0.98);
                t[static_cast<size_t>(i)] = rng.uniform() < 0.5 ? 1.0 : 0.0;
            }
            Graph g;
            NodeId mn = g.input(Tensor({hw}, m));
            NodeId lossn = mask_loss_node(g, mn, Tensor({hw}, t));
            CHECK(g.value(lossn)[0] == doctest::Approx(mask_loss_value(m, t)).epsilon(1e-12));
        }
    }

    SUBCASE("gradient through mask loss") {
        RngStream rng(62);
        Graph g;
        NodeId logits = g.parameter("logits", Tensor::uniform({12}, rng, -2, 2));
        Tensor t({12});
        for (int i = 0; i < 12; ++i) t[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;
        NodeId lossn = mask_loss_node(g, g.sigmoid(logits), t);
        CHECK(g.grad_check(lossn, logits) <= 1e-4);
    }
}

TEST_CASE("depth loss") {
    const int hw = 10;
    Tensor gt_depth({hw});
    Tensor mask({hw});
    for (int i = 0; i < hw; ++i) {
        gt_depth[i] = 2.0 + 0.1 * i;
        mask[i] = i < 6 ? 1.0 : 0.0;
    }

    SUBCASE("exact depth is zero") {
        Graph g;
        NodeId d = g.input(gt_depth);
        CHECK(g.value(depth_loss_node(g, d, gt_depth, mask))[0] == 0.0);
    }

    SUBCASE("constant offset inside the mask") {
        Graph g;
        Tensor d = gt_depth;
        for (int i = 0; i < hw; ++i) d[i] += 0.1;
        NodeId dn = g.input(d);
        CHECK(g.value(depth_loss_node(g, dn, gt_depth, mask))[0] == doctest::Approx(0.1));
    }

    SUBCASE("empty mask gives zero") {
        Graph g;
        NodeId dn = g.input(Tensor::full({hw}, 9.0));
        CHECK(g.value(depth_loss_node(g, dn, gt_depth, Tensor({hw})))[0] == 0.0);
    }
}

TEST_CASE("cls and param losses") {
    SUBCASE("exact probabilities give near-zero cls") {
        Graph g;
        NodeId p = g.input(Tensor({4}, {1.0, 0.0, 1.0, 0.0}));
        Tensor targets({4}, {1.0, 0.0, 1.0, 0.0});
        Tensor weights({4}, {1.0, 0.1, 1.0, 0.1});
        CHECK(g.value(cls_loss_node(g, p, targets, weights))[0] < 1e-5);
    }

    SUBCASE("param loss examples") {
        Graph g;
        Tensor gt({1, 3}, {0.3, 0.4, 0.5});
        NodeId exact = g.input(gt);
        CHECK(g.value(param_loss_node(g, exact, gt))[0] == 0.0);
        NodeId off = g.input(Tensor({1, 3}, {0.4, 0.4, 0.5}));
        CHECK(g.value(param_loss_node(g, off, gt))[0] == doctest::Approx(0.1));
    }
}

namespace {

struct MonoFixture {
    int n = 5, hw = 12;
    Tensor probs, params, masks, depths;
    loss::MonoGroundTruth gt;

    explicit MonoFixture(RngStream& rng) : probs({5}), params({5, 3}), masks({5, 12}), depths({5, 12}) {
        for (int i = 0; i < probs.numel(); ++i) probs[i] = rng.uniform(0.05, 0.95);
        for (int i = 0; i < params.numel(); ++i) params[i] = rng.uniform(-1, 1);
        for (int i = 0; i < masks.numel(); ++i) masks[i] = rng.uniform(0.02, 0.98);
        for (int i = 0; i < depths.numel(); ++i) depths[i] = rng.uniform(0.5, 4.0);
        gt.depth.resize(static_cast<size_t>(hw));
        for (double& d : gt.depth) d = rng.uniform(0.5, 4.0);
        for (int k = 0; k < 3; ++k) {
            gt.params.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.2, 1)});
            std::vector<double> m(static_cast<size_t>(hw), 0.0);
            m[static_cast<size_t>(k)] = 1.0;
            for (int j = 3; j < hw; ++j) m[static_cast<size_t>(j)] = rng.uniform() < 0.4 ? 1.0 : 0.0;
            gt.masks.push_back(m);
        }
    }

    std::vector<match::PredictedPlane> as_predictions() const {
        std::vector<match::PredictedPlane> out;
        for (int i = 0; i < n; ++i) {
            match::PredictedPlane p;
            p.prob = probs[i];
            p.param = {params.at2(i, 0), params.at2(i, 1), params.at2(i, 2)};
            p.mask.assign(masks.vec().begin() + static_cast<long>(i) * hw,
                          masks.vec().begin() + static_cast<long>(i + 1) * hw);
            p.depth.assign(depths.vec().begin() + static_cast<long>(i) * hw,
                           depths.vec().begin() + static_cast<long>(i + 1) * hw);
            out.push_back(std::move(p));
        }
        return out;
    }

    std::vector<match::GroundTruthPlane> as_gts() const {
        std::vector<match::GroundTruthPlane> out;
        for (size_t k = 0; k < gt.params.size(); ++k)
            out.push_back({gt.params[k], gt.masks[k]});
        return out;
    }
};

double eval_total(const MonoFixture& f, const std::vector<std::pair<int, int>>& assignment,
                  loss::MonoLossParts* parts_out = nullptr) {
    Graph g;
    loss::MonoLossInputs in;
    in.probs = g.input(f.probs);
    in.params = g.input(f.params);
    in.mask_probs = g.input(f.masks);
    in.depths = g.input(f.depths);
    auto parts = loss::total_mono_loss(g, in, f.gt, assignment);
    if (parts_out) *parts_out = parts;
    return g.value(parts.total)[0];
}

}  // namespace

TEST_CASE("total mono loss") {
    RngStream rng(63);

    SUBCASE("decomposes into the four sub-losses") {
        MonoFixture f(rng);
        const auto assignment = match::bipartite_match(f.as_predictions(), f.as_gts(), f.gt.depth);
        Graph g;
        loss::MonoLossInputs in;
        in.probs = g.input(f.probs);
        in.params = g.input(f.params);
        in.mask_probs = g.input(f.masks);
        in.depths = g.input(f.depths);
        auto parts = loss::total_mono_loss(g, in, f.gt, assignment);
        const double want = 2.0 * g.value(parts.cls)[0] + g.value(parts.param)[0] +
                            g.value(parts.mask)[0] + 2.0 * g.value(parts.depth)[0];
        CHECK(g.value(parts.total)[0] == doctest::Approx(want).epsilon(1e-13));
    }

    SUBCASE("invariant under prediction permutation with re-derived matching") {
        MonoFixture f(rng);
        const auto a1 = match::bipartite_match(f.as_predictions(), f.as_gts(), f.gt.depth);
        const double l1 = eval_total(f, a1);

        // rotate prediction order by 2
        MonoFixture fp = f;
        const int n = f.n, hw = f.hw;
        for (int i = 0; i < n; ++i) {
            const int j = (i + 2) % n;
            fp.probs[j] = f.probs[i];
            for (int c = 0; c < 3; ++c) fp.params.at2(j, c) = f.params.at2(i, c);
            for (int c = 0; c < hw; ++c) {
                fp.masks.at2(j, c) = f.masks.at2(i, c);
                fp.depths.at2(j, c) = f.depths.at2(i, c);
            }
        }
        const auto a2 = match::bipartite_match(fp.as_predictions(), fp.as_gts(), fp.gt.depth);
        const double l2 = eval_total(fp, a2);
        CHECK(l1 == doctest::Approx(l2).epsilon(1e-12));
    }

    SUBCASE("gradient end to end") {
        MonoFixture f(rng);
        Graph g;
        loss::MonoLossInputs in;
        in.probs = g.sigmoid(g.parameter("logits", Tensor::uniform({f.n}, rng, -1, 1)));
        in.params = g.parameter("params", f.params);
        in.mask_probs = g.sigmoid(g.parameter("mask_logits", Tensor::uniform({f.n, f.hw}, rng, -2, 2)));
        in.depths = g.parameter("depths", f.depths);
        const auto assignment = match::bipartite_match(f.as_predictions(), f.as_gts(), f.gt.depth);
        auto parts = loss::total_mono_loss(g, in, f.gt, assignment);
        for (NodeId p : g.parameter_nodes()) {
            const double err = g.grad_check(parts.total, p);
            INFO("param ", g.name(p));
            CHECK(err <= 1e-4);
        }
    }
}

TEST_CASE("pose loss") {
    SUBCASE("zero at the ground truth") {
        RngStream rng(64);
        const geo::PoseSE3 T = random_pose(rng);
        CHECK(pose_loss_value(T, T) < 1e-9);
    }

    SUBCASE("pure translation error") {
        const geo::PoseSE3 gt(geo::Quat::identity(), {0.4, 0.0, 0.2});
        const geo::PoseSE3 pred(geo::Quat::identity(), {0.3, 0.0, 0.2});
        CHECK(pose_loss_value(pred, gt) == doctest::Approx(5.0 * 0.1).epsilon(1e-10));
    }

    SUBCASE("pure rotation error") {
        const geo::PoseSE3 gt(geo::Quat::from_axis_angle({0, 0, 1}, 0.5), {0, 0, 0});
        const geo::PoseSE3 pred(geo::Quat::from_axis_angle({0, 0, 1}, 0.3), {0, 0, 0});
        CHECK(pose_loss_value(pred, gt) == doctest::Approx(15.0 * 0.2).epsilon(1e-10));
    }

    SUBCASE("symmetric under argument swap") {
        RngStream rng(65);
        for (int i = 0; i < 200; ++i) {
            const geo::PoseSE3 a = random_pose(rng), b = random_pose(rng);
            CHECK(std::fabs(pose_loss_value(a, b) - pose_loss_value(b, a)) < 1e-10);
        }
    }

    SUBCASE("graph route matches the closed-form route") {
        RngStream rng(66);
        for (int i = 0; i < 200; ++i) {
            const geo::PoseSE3 pred = random_pose(rng), gt = random_pose(rng);
            Graph g;
            NodeId q = g.input(Tensor({4}, {pred.q.w, pred.q.x, pred.q.y, pred.q.z}));
            NodeId t = g.input(Tensor({3}, {pred.t.x, pred.t.y, pred.t.z}));
            const double got = g.value(pose_loss_node(g, q, t, gt))[0];
            CHECK(got == doctest::Approx(pose_loss_value(pred, gt)).epsilon(1e-9));
        }
    }

    SUBCASE("gradient through the pose loss") {
        RngStream rng(67);
        for (int i = 0; i < 10; ++i) {
            const geo::PoseSE3 gt = random_pose(rng);
            Graph g;
            NodeId qraw = g.parameter("q", Tensor::uniform({4}, rng, 0.2, 1.0));
            NodeId traw = g.parameter("t", Tensor::uniform({3}, rng, -1.0, 1.0));
            NodeId lossn = pose_loss_node(g, g.l2_normalize_last(qraw), traw, gt);
            CHECK(g.grad_check(lossn, qraw) <= 1e-4);
            CHECK(g.grad_check(lossn, traw) <= 1e-4);
        }
    }

    SUBCASE("quaternion helper nodes agree with geometry") {
        RngStream rng(68);
        for (int i = 0; i < 50; ++i) {
            const geo::Quat a = random_pose(rng).q, b = random_pose(rng).q;
            const geo::Vec3 v{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
            Graph g;
            NodeId an = g.input(Tensor({4}, {a.w, a.x, a.y, a.z}));
            NodeId bn = g.input(Tensor({4}, {b.w, b.x, b.y, b.z}));
            NodeId vn = g.input(Tensor({3}, {v.x, v.y, v.z}));
            const Tensor prod = g.value(quat_mul_node(g, an, bn));
            const geo::Quat want = a * b;
            CHECK(prod[0] == doctest::Approx(want.w).epsilon(1e-12));
            CHECK(prod[1] == doctest::Approx(want.x).epsilon(1e-12));
            CHECK(prod[2] == doctest::Approx(want.y).epsilon(1e-12));
            CHECK(prod[3] == doctest::Approx(want.z).epsilon(1e-12));
            const Tensor rot = g.value(quat_rotate_node(g, an, vn));
            const geo::Vec3 wantv = a.rotate(v);
            CHECK(rot[0] == doctest::Approx(wantv.x).epsilon(1e-11));
            CHECK(rot[1] == doctest::Approx(wantv.y).epsilon(1e-11));
            CHECK(rot[2] == doctest::Approx(wantv.z).epsilon(1e-11));
        }
    }
}
