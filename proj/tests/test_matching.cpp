#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "planeq/matching.hpp"
#include "planeq/rng.hpp"

using namespace planeq;
using namespace planeq::match;

namespace {

// Factorial-enumeration oracle: lexicographically first optimal permutation.
std::pair<std::vector<int>, double> brute_force_assignment(const Tensor& cost) {
    const int n = cost.dim(0);
    std::vector<int> perm(static_cast<size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<int> best = perm;
    double best_total = std::numeric_limits<double>::infinity();
    do {
        double t = 0.0;
        for (int i = 0; i < n; ++i) t += cost.at2(i, perm[static_cast<size_t>(i)]);
        if (t < best_total) {
            best_total = t;
            best = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return {best, best_total};
}

Tensor random_cost(int n, RngStream& rng) {
    Tensor c({n, n});
    for (int i = 0; i < n * n; ++i) c[i] = rng.uniform(-5.0, 5.0);
    return c;
}

PredictedPlane make_pred(RngStream& rng, int hw) {
    PredictedPlane p;
    p.prob = rng.uniform(0.05, 0.95);
    p.param = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.2, 1)};
    p.mask.resize(static_cast<size_t>(hw));
    p.depth.resize(static_cast<size_t>(hw));
    for (int i = 0; i < hw; ++i) {
        p.mask[static_cast<size_t>(i)] = rng.uniform(0.01, 0.99);
        p.depth[static_cast<size_t>(i)] = rng.uniform(0.5, 5.0);
    }
    return p;
}

GroundTruthPlane make_gt(RngStream& rng, int hw) {
    GroundTruthPlane g;
    g.param = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.2, 1)};
    g.mask.resize(static_cast<size_t>(hw));
    for (int i = 0; i < hw; ++i) g.mask[static_cast<size_t>(i)] = rng.uniform() < 0.4 ? 1.0 : 0.0;
    return g;
}

}  // namespace

TEST_CASE("hungarian solver") {
    SUBCASE("two by two example") {
        const Tensor cost({2, 2}, {1, 2, 2, 1});
        const auto r = hungarian(cost);
        CHECK(r.col_of_row == std::vector<int>{0, 1});
        CHECK(r.total == doctest::Approx(2.0));
    }

    SUBCASE("diagonal-dominant matrix picks the identity") {
        Tensor cost({4, 4});
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) cost.at2(i, j) = i == j ? -10.0 : 1.0 + i + j;
        const auto r = hungarian(cost);
        for (int i = 0; i < 4; ++i) CHECK(r.col_of_row[static_cast<size_t>(i)] == i);
    }

    SUBCASE("matches brute force on 1000 random matrices up to 7x7") {
        RngStream rng(101);
        for (int rep = 0; rep < 1000; ++rep) {
            const int n = 2 + static_cast<int>(rng.next_u64() % 6);  // 2..7
            const Tensor cost = random_cost(n, rng);
            const auto got = hungarian(cost);
            const auto [want, want_total] = brute_force_assignment(cost);
            CHECK(got.total == doctest::Approx(want_total).epsilon(1e-12));
            CHECK(got.col_of_row == want);
        }
    }

    SUBCASE("non-finite entries are rejected") {
        Tensor cost({2, 2}, {1.0, std::numeric_limits<double>::infinity(), 0.0, 1.0});
        CHECK_THROWS_AS(hungarian(cost), ContractError);
    }
}

TEST_CASE("matching cost") {
    const int hw = 12;

    SUBCASE("near-perfect prediction approaches -omega1") {
        GroundTruthPlane gt;
        gt.param = {0.1, 0.2, 0.5};
        gt.mask = {1, 1, 0, 0, 1, 0, 1, 0, 0, 1, 1, 0};
        std::vector<double> depth(hw, 2.0);
        PredictedPlane pred;
        pred.prob = 1.0;
        pred.param = gt.param;
        pred.mask = gt.mask;
        pred.depth = depth;
        const double c = matching_cost(pred, gt, depth);
        CHECK(c == doctest::Approx(-2.0).epsilon(1e-4));
    }

    SUBCASE("random case equals term-by-term oracle") {
        RngStream rng(55);
        for (int rep = 0; rep < 20; ++rep) {
            const PredictedPlane pred = make_pred(rng, hw);
            const GroundTruthPlane gt = make_gt(rng, hw);
            std::vector<double> depth(static_cast<size_t>(hw));
            for (double& d : depth) d = rng.uniform(0.5, 5.0);

            // independent re-implementation
            double l1p = std::fabs(pred.param.x - gt.param.x) +
                         std::fabs(pred.param.y - gt.param.y) +
                         std::fabs(pred.param.z - gt.param.z);
            double dsum = 0.0;
            int dcnt = 0;
            double ce = 0.0, inter = 0.0, sm = 0.0, st = 0.0;
            for (int i = 0; i < hw; ++i) {
                if (gt.mask[static_cast<size_t>(i)] > 0) {
                    dsum += std::fabs(pred.depth[static_cast<size_t>(i)] - depth[static_cast<size_t>(i)]);
                    ++dcnt;
                }
                const double p = pred.mask[static_cast<size_t>(i)];
                const double t = gt.mask[static_cast<size_t>(i)];
                ce += -(t * std::log(p) + (1 - t) * std::log(1 - p));
                inter += p * t;
                sm += p;
                st += t;
            }
            ce /= hw;
            const double dice = 1.0 - 2.0 * inter / (sm + st + 1e-6);
            const double want = -2.0 * pred.prob + 1.0 * l1p + 2.0 * (dcnt ? dsum / dcnt : 0.0) +
                                5.0 * ce + 5.0 * dice;
            CHECK(matching_cost(pred, gt, depth) == doctest::Approx(want).epsilon(1e-12));
        }
    }
}

TEST_CASE("bipartite match") {
    const int hw = 12;
    RngStream rng(77);

    SUBCASE("near-perfect predictions match identically") {
        std::vector<GroundTruthPlane> gts;
        std::vector<double> depth(static_cast<size_t>(hw), 2.0);
        std::vector<PredictedPlane> preds;
        for (int i = 0; i < 3; ++i) {
            GroundTruthPlane gt = make_gt(rng, hw);
            gt.mask[static_cast<size_t>(i)] = 1.0;  // ensure non-empty
            gts.push_back(gt);
            PredictedPlane p;
            p.prob = 0.99;
            p.param = gt.param;
            p.mask = gt.mask;
            for (double& m : p.mask) m = m > 0.5 ? 0.99 : 0.01;
            p.depth = depth;
            preds.push_back(p);
        }
        const Assignment a = bipartite_match(preds, gts, depth);
        REQUIRE(a.size() == 3);
        for (const auto& [pi, gi] : a) CHECK(pi == gi);
    }

    SUBCASE("no planes gives empty assignment") {
        std::vector<PredictedPlane> preds = {make_pred(rng, hw)};
        CHECK(bipartite_match(preds, {}, std::vector<double>(hw, 1.0)).empty());
    }

    SUBCASE("more planes than predictions is a contract error") {
        std::vector<PredictedPlane> preds = {make_pred(rng, hw)};
        std::vector<GroundTruthPlane> gts = {make_gt(rng, hw), make_gt(rng, hw)};
        CHECK_THROWS_AS(bipartite_match(preds, gts, std::vector<double>(hw, 1.0)),
                        ContractError);
    }

    SUBCASE("matches injection brute force and is gt-order invariant") {
        for (int rep = 0; rep < 25; ++rep) {
            std::vector<double> depth(static_cast<size_t>(hw));
            for (double& d : depth) d = rng.uniform(0.5, 5.0);
            std::vector<PredictedPlane> preds;
            for (int i = 0; i < 5; ++i) preds.push_back(make_pred(rng, hw));
            std::vector<GroundTruthPlane> gts;
            for (int i = 0; i < 3; ++i) gts.push_back(make_gt(rng, hw));

            const Assignment got = bipartite_match(preds, gts, depth);

            // brute force over all injections of gts into preds
            std::vector<int> idx = {0, 1, 2, 3, 4};
            double best = std::numeric_limits<double>::infinity();
            std::set<std::pair<int, int>> best_pairs;
            std::sort(idx.begin(), idx.end());
            do {
                double t = 0.0;
                for (int i = 0; i < 3; ++i)
                    t += matching_cost(preds[static_cast<size_t>(idx[static_cast<size_t>(i)])],
                                       gts[static_cast<size_t>(i)], depth);
                if (t < best - 1e-12) {
                    best = t;
                    best_pairs.clear();
                    for (int i = 0; i < 3; ++i) best_pairs.insert({idx[static_cast<size_t>(i)], i});
                }
            } while (std::next_permutation(idx.begin(), idx.end()));

            CHECK(std::set<std::pair<int, int>>(got.begin(), got.end()) == best_pairs);

            // permuting ground-truth order leaves the pair set unchanged
            std::vector<GroundTruthPlane> gts_rev(gts.rbegin(), gts.rend());
            Assignment rev = bipartite_match(preds, gts_rev, depth);
            std::set<std::pair<int, int>> rev_pairs;
            for (auto [pi, gi] : rev) rev_pairs.insert({pi, 2 - gi});
            CHECK(rev_pairs == best_pairs);
        }
    }
}

TEST_CASE("dual softmax") {
    SUBCASE("orthogonal inputs give the uniform matrix") {
        // rows of Q orthogonal to rows of K -> S = 0
        Tensor q({2, 4}, {1, 0, 0, 0, 0, 1, 0, 0});
        Tensor k({3, 4}, {0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 1, 1});
        const auto cm = dual_softmax(q, k);
        for (int i = 0; i < 6; ++i) CHECK(cm.C[i] == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
    }

    SUBCASE("diagonal-dominant logits concentrate") {
        Tensor q({2, 1}, {10.0, 0.0});
        Tensor k({2, 1}, {1.0, 0.0});
        // S = [[10,0],[0,0]]; after scaling rows/cols the diagonal dominates
        const auto cm = dual_softmax(q, k);
        CHECK(cm.C.at2(0, 0) > 0.99);
        CHECK(cm.C.at2(0, 1) < 1e-4);
        CHECK(cm.C.at2(1, 0) < 1e-4);
    }

    SUBCASE("shift invariance within 1e-12") {
        RngStream rng(200);
        for (int rep = 0; rep < 100; ++rep) {
            Tensor s({4, 5});
            for (int i = 0; i < 20; ++i) s[i] = rng.uniform(-3, 3);
            Tensor s_shift = s;
            const double c = rng.uniform(-50, 50);
            for (int i = 0; i < 20; ++i) s_shift[i] += c;
            const Tensor a = dual_softmax_from_logits(s, 64);
            const Tensor b = dual_softmax_from_logits(s_shift, 64);
            for (int i = 0; i < 20; ++i) CHECK(std::fabs(a[i] - b[i]) <= 1e-12);
        }
    }

    SUBCASE("reconstruction from stored logits is bit-exact") {
        RngStream rng(201);
        Tensor q({5, 8}), k({6, 8});
        for (int i = 0; i < q.numel(); ++i) q[i] = rng.uniform(-2, 2);
        for (int i = 0; i < k.numel(); ++i) k[i] = rng.uniform(-2, 2);
        const auto cm = dual_softmax(q, k);
        const Tensor again = dual_softmax_from_logits(cm.S, cm.channels);
        for (int i = 0; i < cm.C.numel(); ++i) CHECK(cm.C[i] == again[i]);
    }

    SUBCASE("entries strictly inside (0,1)") {
        RngStream rng(202);
        Tensor q({3, 4}), k({4, 4});
        for (int i = 0; i < q.numel(); ++i) q[i] = rng.uniform(-4, 4);
        for (int i = 0; i < k.numel(); ++i) k[i] = rng.uniform(-4, 4);
        const auto cm = dual_softmax(q, k);
        for (int i = 0; i < cm.C.numel(); ++i) {
            CHECK(cm.C[i] > 0.0);
            CHECK(cm.C[i] < 1.0);
        }
    }
}

TEST_CASE("mnn filter") {
    SUBCASE("mutual maxima survive") {
        const Tensor c({2, 2}, {0.9, 0.1, 0.2, 0.8});
        const Assignment a = mnn_filter(c, 0.5);
        CHECK(a == Assignment{{0, 0}, {1, 1}});
    }

    SUBCASE("claimed column drops the weaker row") {
        const Tensor c({2, 2}, {0.9, 0.8, 0.85, 0.1});
        const Assignment a = mnn_filter(c, 0.5);
        CHECK(a == Assignment{{0, 0}});
    }

    SUBCASE("threshold above all entries empties the result") {
        const Tensor c({2, 2}, {0.9, 0.1, 0.2, 0.8});
        CHECK(mnn_filter(c, 0.95).empty());
    }

    SUBCASE("injective on 10000 random matrices") {
        RngStream rng(301);
        for (int rep = 0; rep < 10000; ++rep) {
            const int n1 = 1 + static_cast<int>(rng.next_u64() % 6);
            const int n2 = 1 + static_cast<int>(rng.next_u64() % 6);
            Tensor c({n1, n2});
            for (int i = 0; i < n1 * n2; ++i)
                c[i] = rng.uniform() < 0.2 ? 0.5 : rng.uniform();  // deliberate ties
            const Assignment a = mnn_filter(c, 0.1);
            std::set<int> ls, rs;
            for (auto [l, r] : a) {
                CHECK(ls.insert(l).second);
                CHECK(rs.insert(r).second);
            }
        }
    }
}

TEST_CASE("correspondence precision recall f-score") {
    SUBCASE("half right") {
        const auto r = correspondence_prf({{0, 0}, {1, 1}}, {{0, 0}, {1, 2}});
        CHECK(r.true_positives == 1);
        CHECK(r.precision == doctest::Approx(0.5));
        CHECK(r.recall == doctest::Approx(0.5));
        CHECK(r.f_score == doctest::Approx(0.5));
    }

    SUBCASE("exact match") {
        const auto r = correspondence_prf({{0, 1}, {2, 0}}, {{0, 1}, {2, 0}});
        CHECK(r.precision == 1.0);
        CHECK(r.recall == 1.0);
        CHECK(r.f_score == 1.0);
    }

    SUBCASE("empty prediction convention") {
        const auto r = correspondence_prf({}, {{0, 0}});
        CHECK(r.precision == 0.0);
        CHECK(r.recall == 0.0);
        CHECK(r.f_score == 0.0);
    }
}
