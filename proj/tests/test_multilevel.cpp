#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "doctest.h"
#include "mlsvm/error.hpp"
#include "mlsvm/kmeans.hpp"
#include "mlsvm/metrics.hpp"
#include "mlsvm/multilevel.hpp"
#include "mlsvm/synthetic.hpp"
#include "oracles.hpp"

using namespace mlsvm;

namespace {

KnnGraph graph_from_edges(std::size_t n, std::initializer_list<std::pair<NodeId, NodeId>> edges) {
    KnnGraph g;
    g.node_ids.resize(n);
    std::iota(g.node_ids.begin(), g.node_ids.end(), RowIndex{0});
    g.neighbors.resize(n);
    for (auto [a, b] : edges) g.neighbors[a].push_back({b, 1.0});
    symmetrize(g);
    return g;
}

std::vector<RowIndex> iota(std::size_t n) {
    std::vector<RowIndex> r(n);
    std::iota(r.begin(), r.end(), RowIndex{0});
    return r;
}

UdConfig quick_ud() {
    UdConfig u;
    u.stage1_runs = 5;
    u.stage2_runs = 3;
    u.internal_cv_folds = 3;
    return u;
}

bool subset_of(const std::vector<RowIndex>& a, const std::vector<RowIndex>& b) {
    return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

}  // namespace

TEST_SUITE("multilevel") {

TEST_CASE("edgeless graph selects everything in one round") {
    const KnnGraph g = graph_from_edges(4, {});
    const Coarsening c = coarsen_class(g, 0.5, 1);
    CHECK(c.selected.size() == 4);
    CHECK(c.rounds.size() == 1);
}

TEST_CASE("K4 needs two rounds of one vertex") {
    const KnnGraph g = graph_from_edges(4, {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}});
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Coarsening c = coarsen_class(g, 0.5, seed);
        CHECK(c.rounds.size() == 2);
        CHECK(c.rounds[0].size() == 1);
        CHECK(c.rounds[1].size() == 1);
        CHECK(c.selected.size() == 2);
    }
}

TEST_CASE("path a-b-c-d-e starting from a") {
    const KnnGraph g = graph_from_edges(5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}});
    const std::vector<NodeId> order{0, 1, 2, 3, 4};
    const Coarsening c = coarsen_class(g, 0.5, order);
    CHECK(c.rounds.size() == 1);
    CHECK(c.selected == std::vector<NodeId>{0, 2, 4});
    CHECK(oracle::is_dominating(g, c.selected));
}

TEST_CASE("coarsening properties on random kNN graphs") {
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
        const Dataset d = make_blobs(400, 3, 4, 2.0, seed);
        KnnConfig kc;
        kc.mode = KnnMode::Exact;
        const KnnGraph g = build_knn_graph(d, iota(400), kc);
        for (double q : {0.3, 0.5, 0.8}) {
            const Coarsening c = coarsen_class(g, q, seed * 31);
            CHECK(static_cast<double>(c.selected.size()) >= q * 400.0);
            CHECK(oracle::is_dominating(g, c.rounds.front()));
            std::vector<char> taken(400, 0);
            for (const auto& round : c.rounds) {
                CHECK(oracle::is_independent(g, round));
                // Maximal on the residual set: every residual vertex is picked or next to a pick.
                std::vector<char> in(400, 0);
                for (NodeId v : round) in[v] = 1;
                for (NodeId v = 0; v < 400; ++v) {
                    if (taken[v] || in[v]) continue;
                    bool adjacent = false;
                    for (NodeId u : g.adjacency[v]) adjacent = adjacent || in[u];
                    CHECK(adjacent);
                }
                for (NodeId v : round) taken[v] = 1;
            }
            CHECK(coarsen_class(g, q, seed * 31).selected == c.selected);
        }
    }
}

TEST_CASE("small input gives a single level") {
    const Dataset d = make_twonorm(300, 2, 5);
    const Hierarchy h = build_hierarchy(binary_view(d, 1), iota(300), {}, {});
    CHECK(h.levels.size() == 1);
    CHECK(h.levels[0].size() == 300);
}

TEST_CASE("balanced 8000 points") {
    const Dataset d = make_twonorm(8000, 7, 10);
    FrameworkConfig cfg;
    const Hierarchy h = build_hierarchy(binary_view(d, 1), iota(8000), {}, cfg);
    REQUIRE(h.levels.size() >= 2);
    CHECK(h.levels.back().size() <= cfg.coarsest_max);
    for (std::size_t i = 1; i < h.levels.size(); ++i) {
        const Level& fine = h.levels[i - 1];
        const Level& coarse = h.levels[i];
        CHECK(coarse.size() < fine.size());
        for (int y : {1, -1}) {
            const ClassLevel& f = fine.of(y);
            const ClassLevel& c = coarse.of(y);
            CHECK(subset_of(c.rows, f.rows));
            if (c.replicated) continue;
            CHECK(static_cast<double>(c.rows.size()) >= cfg.q * static_cast<double>(f.rows.size()));
            std::vector<NodeId> sel;
            for (RowIndex r : c.rows)
                sel.push_back(static_cast<NodeId>(std::lower_bound(f.rows.begin(), f.rows.end(), r) - f.rows.begin()));
            CHECK(oracle::is_dominating(f.graph, sel));
            REQUIRE(f.parent.size() == f.rows.size());
            for (std::size_t v = 0; v < f.rows.size(); ++v) {
                const RowIndex target = c.rows[f.parent[v]];
                const bool self = target == f.rows[v];
                bool adjacent = false;
                for (NodeId u : f.graph.adjacency[v]) adjacent = adjacent || f.rows[u] == target;
                CHECK((self || adjacent));
            }
        }
    }
}

TEST_CASE("imbalanced classes: the minority is replicated and skew drops") {
    const Dataset d = make_imbalanced(10100, 100.0 / 10100.0, 5, 2.0, 3);
    const BinaryView v = binary_view(d, 1);
    REQUIRE(v.rows_positive.size() == 100);
    const Hierarchy h = build_hierarchy(v, iota(d.rows()), {}, {});
    REQUIRE(h.levels.size() >= 2);
    bool frozen = false;
    for (std::size_t i = 1; i < h.levels.size(); ++i) {
        const ClassLevel& c = h.levels[i].positive;
        if (c.replicated) {
            CHECK(c.rows == h.levels[i - 1].positive.rows);
            frozen = true;
        } else {
            CHECK_FALSE(frozen);
        }
    }
    CHECK(frozen);
    const auto ratio = [](const Level& l) {
        return static_cast<double>(l.negative.rows.size()) / static_cast<double>(l.positive.rows.size());
    };
    CHECK(ratio(h.levels.back()) < ratio(h.levels.front()));
}

TEST_CASE("a class with fewer than two rows is rejected") {
    Dataset d = make_twonorm(50, 1, 3);
    d.labels.assign(50, 0);
    d.labels[4] = 1;
    d.class_names = distinct_labels(d.labels);
    CHECK_THROWS_AS(build_hierarchy(binary_view(d, 1), iota(50), {}, {}), Error);
}

TEST_CASE("coarsest level with one point per class") {
    Matrix x(2, 2);
    x << 0, 0, 1, 1;
    const Dataset d = Dataset::from_matrix(x, {1, 0});
    Hierarchy h;
    Level l;
    l.positive.rows = {0};
    l.negative.rows = {1};
    h.levels.push_back(l);
    const LevelSolution s = train_coarsest(h, binary_view(d, 1), quick_ud(), {}, {});
    CHECK(s.support == std::vector<RowIndex>{0, 1});
}

TEST_CASE("separable coarsest set scores a perfect G-mean and is reproducible") {
    const Dataset d = make_imbalanced(400, 0.5, 3, 12.0, 2);
    const BinaryView v = binary_view(d, 1);
    const Hierarchy h = build_hierarchy(v, iota(400), {}, {});
    const LevelSolution a = train_coarsest(h, v, quick_ud(), {}, {});
    const LevelSolution b = train_coarsest(h, v, quick_ud(), {}, {});
    CHECK(a.c == b.c);
    CHECK(a.gamma == b.gamma);
    CHECK(a.support == b.support);
    const double score = cv_score(v, h.levels.back().rows(), false, a.c, a.gamma, quick_ud(), {});
    CHECK(score == 1.0);
}

TEST_CASE("refinement branches and cluster arithmetic") {
    const Dataset d = make_twonorm(2000, 5, 6);
    const BinaryView v = binary_view(d, 1);
    FrameworkConfig base;
    base.coarsest_max = 2000;
    base.qdt = 2000;
    const Hierarchy h = build_hierarchy(v, iota(2000), {}, base);
    REQUIRE(h.levels.size() == 1);

    LevelSolution coarse;
    coarse.level = 1;
    coarse.c = 1.0;
    coarse.gamma = 0.05;

    SUBCASE("small training set runs UD around the inherited centre") {
        for (RowIndex r = 0; r < 2000; r += 40) coarse.support.push_back(r);
        FrameworkConfig cfg = base;
        cfg.neighbor_expansion = 1;
        cfg.qdt = 500;
        const LevelSolution s = refine_level(h, 0, coarse, v, quick_ud(), {}, cfg);
        CHECK(s.branch == 'A');
        CHECK(s.train_size < 500);
        CHECK(s.model.has_value());
        CHECK(s.ud_evaluations > 0);
        CHECK(s.support.size() <= s.train_size);
    }
    SUBCASE("2000 points with Qdt 500 give K = 4") {
        coarse.support = iota(2000);
        FrameworkConfig cfg = base;
        cfg.qdt = 500;
        cfg.coarsest_max = 500;
        const LevelSolution s = refine_level(h, 0, coarse, v, quick_ud(), {}, cfg);
        CHECK(s.branch == 'B');
        CHECK(s.train_size == 2000);
        CHECK(s.positive_centroids.rows() + s.negative_centroids.rows() == 4);
        CHECK(s.positive_centroids.rows() == 2);
        CHECK(s.c == coarse.c);
        CHECK(s.gamma == coarse.gamma);
        std::vector<RowIndex> all = iota(2000);
        CHECK(subset_of(s.support, all));
    }
}

TEST_CASE("each of 5 minority clusters pairs with 2 of 20 majority clusters") {
    const Dataset d = make_imbalanced(500, 0.2, 2, 3.0, 4);
    const BinaryView v = binary_view(d, 1);
    REQUIRE(v.rows_positive.size() == 100);
    FrameworkConfig base;
    const Hierarchy h = build_hierarchy(v, iota(500), {}, base);
    REQUIRE(h.levels.size() == 1);
    LevelSolution coarse;
    coarse.level = 1;
    coarse.c = 1.0;
    coarse.gamma = 0.5;
    coarse.support = iota(500);
    FrameworkConfig cfg;
    cfg.coarsest_max = 20;
    cfg.qdt = 20;
    cfg.p_fraction = 0.10;
    const LevelSolution s = refine_level(h, 0, coarse, v, quick_ud(), {}, cfg);
    REQUIRE(s.positive_centroids.rows() == 5);
    REQUIRE(s.negative_centroids.rows() == 20);
    for (int i = 0; i < 5; ++i) {
        std::vector<std::pair<double, int>> dist;
        for (int j = 0; j < 20; ++j)
            dist.emplace_back((s.positive_centroids.row(i) - s.negative_centroids.row(j)).squaredNorm(), j);
        std::sort(dist.begin(), dist.end());
        std::set<int> partners;
        for (const auto& p : s.pairs)
            if (p.positive_cluster == i) partners.insert(p.negative_cluster);
        CHECK(partners.count(dist[0].second) == 1);
        CHECK(partners.count(dist[1].second) == 1);
    }
    std::set<int> covered;
    for (const auto& p : s.pairs) covered.insert(p.negative_cluster);
    CHECK(covered.size() == 20);
}

TEST_CASE("empty coarse support is an error") {
    const Dataset d = make_twonorm(100, 5, 3);
    const BinaryView v = binary_view(d, 1);
    const Hierarchy h = build_hierarchy(v, iota(100), {}, {});
    LevelSolution coarse;
    CHECK_THROWS_AS(refine_level(h, 0, coarse, v, quick_ud(), {}, {}), Error);
}

TEST_CASE("k-means") {
    const Dataset d = make_blobs(300, 3, 2, 20.0, 9);
    const auto rows = iota(300);
    const KMeansResult r = kmeans(d, rows, 3);
    CHECK(r.centroids.rows() == 3);
    std::set<std::pair<int, int>> mapping;
    for (std::size_t i = 0; i < 300; ++i) mapping.emplace(d.labels[i], r.assignment[i]);
    CHECK(mapping.size() == 3);
    CHECK(kmeans(d, std::vector<RowIndex>{0, 1}, 5).centroids.rows() == 2);
}

TEST_CASE("end to end on a small problem matches a flat SVM") {
    const Dataset d = make_twonorm(1200, 12, 8);
    std::vector<RowIndex> train, test;
    for (RowIndex r = 0; r < d.rows(); ++r) (r % 3 == 0 ? test : train).push_back(r);
    const BinaryView v = binary_view(d, 1);
    FrameworkConfig cfg;
    cfg.coarsest_max = 200;
    cfg.qdt = 200;
    const MultilevelResult ml = train_multilevel(v, train, {}, cfg, quick_ud(), {});
    CHECK(ml.report.levels.size() >= 2);
    const Matrix xt = d.subset(test).features;
    std::vector<int> truth;
    for (RowIndex r : test) truth.push_back(v.y(r));
    const Metrics m = compute_metrics(confusion(truth, ml.classifier.predict(xt).labels));
    CHECK(m.gmean > 0.9);

    std::ostringstream a, b;
    write_report(a, ml.report, false);
    write_report(b, train_multilevel(v, train, {}, cfg, quick_ud(), {}).report, false);
    CHECK(a.str() == b.str());
    CHECK(a.str().find("seconds") == std::string::npos);

    cfg.final_model = FinalModel::Ensemble;
    const MultilevelResult en = train_multilevel(v, train, {}, cfg, quick_ud(), {});
    const Metrics e = compute_metrics(confusion(truth, en.classifier.predict(xt).labels));
    CHECK(e.gmean > 0.9);
}

TEST_CASE("worker count does not change the result") {
    const Dataset d = make_twonorm(1500, 21, 6);
    const BinaryView v = binary_view(d, 1);
    FrameworkConfig cfg;
    cfg.coarsest_max = 200;
    cfg.qdt = 300;
    const auto rows = iota(1500);
    const MultilevelResult a = train_multilevel(v, rows, {}, cfg, quick_ud(), {});
    cfg.workers = 3;
    const MultilevelResult b = train_multilevel(v, rows, {}, cfg, quick_ud(), {});
    std::ostringstream ra, rb;
    write_report(ra, a.report, false);
    write_report(rb, b.report, false);
    CHECK(ra.str() == rb.str());
    const auto pa = a.classifier.predict(d.features).margins;
    const auto pb = b.classifier.predict(d.features).margins;
    CHECK(pa == pb);
}

TEST_CASE("config validation") {
    FrameworkConfig c;
    c.q = 1.0;
    CHECK_THROWS_AS(c.validate(), Error);
    c = {};
    c.qdt = 100;
    CHECK_THROWS_AS(c.validate(), Error);
    c = {};
    c.p_fraction = 0.0;
    CHECK_THROWS_AS(c.validate(), Error);
}

}  // TEST_SUITE
