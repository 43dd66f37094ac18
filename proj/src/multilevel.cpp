#include "mlsvm/multilevel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <set>

#include <spdlog/spdlog.h>

#include "mlsvm/error.hpp"
#include "mlsvm/parallel.hpp"

namespace mlsvm {

void FrameworkConfig::validate() const {
    require(q > 0.0 && q < 1.0, "Q must lie in (0, 1)");
    require(coarsest_max >= 2, "coarsest_max must be at least 2");
    require(qdt >= coarsest_max, "Qdt must be at least coarsest_max");
    require(neighbor_expansion >= 0, "neighbor_expansion must be nonnegative");
    require(p_fraction > 0.0 && p_fraction <= 1.0, "p_fraction must lie in (0, 1]");
    require(stall_ratio > 0.0 && stall_ratio <= 1.0, "stall_ratio must lie in (0, 1]");
}

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::uint64_t mix(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (a + 1) + 0xbf58476d1ce4e5b9ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

template <class Order>
Coarsening coarsen(const KnnGraph& graph, double q, Order&& order_of_round) {
    require(graph.size() > 0, "coarsening: empty graph");
    require(q > 0.0 && q <= 1.0, "coarsening: Q must lie in (0, 1]");
    const std::size_t n = graph.size();
    std::vector<char> chosen(n, 0);
    std::vector<char> candidate(n, 0);
    Coarsening out;
    while (static_cast<double>(out.selected.size()) < q * static_cast<double>(n)) {
        std::vector<NodeId> pool;
        for (NodeId v = 0; v < n; ++v) {
            candidate[v] = !chosen[v];
            if (candidate[v]) pool.push_back(v);
        }
        order_of_round(pool);
        std::vector<NodeId> round;
        for (NodeId v : pool) {
            if (!candidate[v]) continue;
            round.push_back(v);
            chosen[v] = 1;
            candidate[v] = 0;
            for (NodeId u : graph.adjacency[v]) candidate[u] = 0;
        }
        ensure(!round.empty(), "coarsening round selected nothing");
        out.selected.insert(out.selected.end(), round.begin(), round.end());
        out.rounds.push_back(std::move(round));
    }
    return out;
}

std::vector<RowIndex> sorted_union(std::vector<RowIndex> a) {
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
    return a;
}

std::size_t node_of(const KnnGraph& g, RowIndex row) {
    const auto it = std::lower_bound(g.node_ids.begin(), g.node_ids.end(), row);
    if (it == g.node_ids.end() || *it != row)
        throw InvariantError("row " + std::to_string(row) + " is not in the level graph");
    return static_cast<std::size_t>(it - g.node_ids.begin());
}

ClassLevel make_class_level(const Dataset& data, std::vector<RowIndex> rows, const KnnConfig& knn) {
    ClassLevel cl;
    cl.rows = std::move(rows);
    cl.graph = build_knn_graph(data, cl.rows, knn);
    return cl;
}

std::size_t nearest_row(const Matrix& centroids, const double* x, Eigen::Index d) {
    std::size_t best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < centroids.rows(); ++j) {
        double s = 0.0;
        for (Eigen::Index t = 0; t < d; ++t) {
            const double diff = centroids(j, t) - x[t];
            s += diff * diff;
        }
        if (s < bd) {
            bd = s;
            best = static_cast<std::size_t>(j);
        }
    }
    return best;
}

}  // namespace

Coarsening coarsen_class(const KnnGraph& graph, double q, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return coarsen(graph, q, [&](std::vector<NodeId>& pool) { std::shuffle(pool.begin(), pool.end(), rng); });
}

Coarsening coarsen_class(const KnnGraph& graph, double q, std::span<const NodeId> order) {
    require(order.size() == graph.size(), "coarsening order must list every node");
    std::vector<std::size_t> rank(graph.size());
    for (std::size_t i = 0; i < order.size(); ++i) rank[order[i]] = i;
    return coarsen(graph, q, [&](std::vector<NodeId>& pool) {
        std::sort(pool.begin(), pool.end(), [&](NodeId a, NodeId b) { return rank[a] < rank[b]; });
    });
}

std::vector<RowIndex> Level::rows() const {
    std::vector<RowIndex> all = positive.rows;
    all.insert(all.end(), negative.rows.begin(), negative.rows.end());
    std::sort(all.begin(), all.end());
    return all;
}

Hierarchy build_hierarchy(const BinaryView& view, std::span<const RowIndex> rows, const KnnConfig& knn,
                          const FrameworkConfig& config) {
    config.validate();
    require(view.base != nullptr, "hierarchy: view has no dataset");
    const Dataset& data = *view.base;
    std::vector<RowIndex> pos;
    std::vector<RowIndex> neg;
    for (RowIndex r : rows) (view.y(r) > 0 ? pos : neg).push_back(r);
    require(pos.size() >= 2 && neg.size() >= 2, "hierarchy: each class needs at least 2 rows (have " +
                                                     std::to_string(pos.size()) + " positive, " +
                                                     std::to_string(neg.size()) + " negative)");
    for (RowIndex r : rows)
        if (data.row_has_missing(r)) throw Error("hierarchy: row " + std::to_string(r) + " has missing values");

    Hierarchy h;
    Level first;
    first.positive = make_class_level(data, sorted_union(pos), knn);
    first.negative = make_class_level(data, sorted_union(neg), knn);
    h.levels.push_back(std::move(first));

    const std::size_t freeze_at = config.coarsest_max / 2;
    while (h.levels.back().size() > config.coarsest_max) {
        Level& fine = h.levels.back();
        const std::size_t depth = h.levels.size();
        Level next;
        const auto step = [&](ClassLevel& f, ClassLevel& c, std::uint64_t cls) {
            const std::size_t n = f.rows.size();
            const bool too_small = n <= freeze_at ||
                                   std::ceil(config.q * static_cast<double>(n)) < 2.0;
            if (too_small || f.replicated) {
                c = f;
                c.replicated = true;
                c.rounds.clear();
                c.parent.clear();
                f.parent.resize(n);
                std::iota(f.parent.begin(), f.parent.end(), std::size_t{0});
                return;
            }
            const Coarsening sel = coarsen_class(f.graph, config.q, mix(config.seed, depth, cls));
            std::vector<RowIndex> picked;
            for (NodeId v : sel.selected) picked.push_back(f.rows[v]);
            c = make_class_level(data, sorted_union(std::move(picked)), knn);
            c.rounds = sel.rounds;
            // Every node is selected or adjacent to a first-round vertex.
            std::vector<char> in(n, 0);
            for (NodeId v : sel.selected) in[v] = 1;
            f.parent.assign(n, 0);
            for (std::size_t v = 0; v < n; ++v) {
                RowIndex target = f.rows[v];
                if (!in[v]) {
                    bool found = false;
                    for (NodeId u : f.graph.adjacency[v])
                        if (in[u]) {
                            target = f.rows[u];
                            found = true;
                            break;
                        }
                    ensure(found, "coarse selection does not dominate the finer level");
                }
                f.parent[v] = static_cast<std::size_t>(
                    std::lower_bound(c.rows.begin(), c.rows.end(), target) - c.rows.begin());
            }
        };
        step(fine.positive, next.positive, 0);
        step(fine.negative, next.negative, 1);
        const std::size_t before = fine.size();
        if (static_cast<double>(next.size()) >= config.stall_ratio * static_cast<double>(before)) {
            fine.positive.parent.clear();
            fine.negative.parent.clear();
            h.stalled = true;
            h.warnings.push_back("coarsening stalled at level " + std::to_string(depth - 1) + " with " +
                                 std::to_string(before) + " points");
            break;
        }
        spdlog::debug("level {}: {} positive, {} negative", depth, next.positive.rows.size(),
                      next.negative.rows.size());
        h.levels.push_back(std::move(next));
    }
    return h;
}

LevelSolution train_coarsest(const Hierarchy& hierarchy, const BinaryView& view, const UdConfig& ud,
                             const SolverConfig& solver, const FrameworkConfig& config) {
    require(!hierarchy.levels.empty(), "hierarchy has no levels");
    const Level& top = hierarchy.levels.back();
    const std::vector<RowIndex> rows = top.rows();
    UdConfig cfg = ud;
    cfg.workers = config.workers;
    const UdOutcome outcome = ud_search(view, rows, config.weighted, cfg, std::nullopt, solver);
    LevelSolution sol;
    sol.level = hierarchy.coarsest();
    sol.c = outcome.c;
    sol.gamma = outcome.gamma;
    sol.weights = outcome.weights;
    sol.ud_evaluations = outcome.evaluations;
    sol.warnings = outcome.warnings;
    sol.model = train_svm(view, sol.weights, KernelParams{sol.gamma}, solver, rows);
    sol.support = sorted_union(sol.model->sv_rows);
    sol.train_size = rows.size();
    sol.branch = 'C';
    return sol;
}

LevelSolution refine_level(const Hierarchy& hierarchy, std::size_t level, const LevelSolution& coarse,
                           const BinaryView& view, const UdConfig& ud, const SolverConfig& solver,
                           const FrameworkConfig& config) {
    require(level < hierarchy.levels.size(), "refinement level out of range");
    require(!coarse.support.empty(), "refinement: the coarser level has no support vectors");
    const Dataset& data = *view.base;
    const Level& lv = hierarchy.levels[level];

    std::vector<RowIndex> train = coarse.support;
    for (RowIndex r : coarse.support) {
        const KnnGraph& g = lv.of(view.y(r)).graph;
        const auto& nbrs = g.neighbors[node_of(g, r)];
        const std::size_t take = std::min<std::size_t>(nbrs.size(), static_cast<std::size_t>(config.neighbor_expansion));
        for (std::size_t t = 0; t < take; ++t) train.push_back(g.node_ids[nbrs[t].node]);
    }
    train = sorted_union(std::move(train));

    LevelSolution sol;
    sol.level = level;
    sol.train_size = train.size();
    const std::size_t n_plus = view.count_positive(train);
    const std::size_t n_minus = train.size() - n_plus;
    require(n_plus > 0 && n_minus > 0, "refinement: training set has a single class");

    if (train.size() < config.qdt) {
        UdConfig cfg = ud;
        cfg.workers = config.workers;
        const UdOutcome outcome =
            ud_search(view, train, config.weighted, cfg, std::make_pair(coarse.c, coarse.gamma), solver);
        sol.branch = 'A';
        sol.c = outcome.c;
        sol.gamma = outcome.gamma;
        sol.weights = outcome.weights;
        sol.ud_evaluations = outcome.evaluations;
        sol.warnings = outcome.warnings;
        sol.model = train_svm(view, sol.weights, KernelParams{sol.gamma}, solver, train);
        sol.support = sorted_union(sol.model->sv_rows);
        return sol;
    }

    sol.branch = 'B';
    sol.c = coarse.c;
    sol.gamma = coarse.gamma;
    sol.weights = penalties(sol.c, config.weighted, n_plus, n_minus);
    const auto k_total = static_cast<std::size_t>(
        std::ceil(static_cast<double>(train.size()) / static_cast<double>(config.qdt)));
    std::size_t k_pos = 1;
    if (k_total >= 2)
        k_pos = std::clamp<std::size_t>(
            static_cast<std::size_t>(std::llround(static_cast<double>(k_total) * static_cast<double>(n_plus) /
                                                  static_cast<double>(train.size()))),
            1, k_total - 1);
    const std::size_t k_neg = std::max<std::size_t>(1, k_total - k_pos);

    std::vector<RowIndex> pos_rows;
    std::vector<RowIndex> neg_rows;
    for (RowIndex r : train) (view.y(r) > 0 ? pos_rows : neg_rows).push_back(r);
    KMeansConfig km = config.kmeans;
    km.seed = mix(config.kmeans.seed, level, 0);
    const KMeansResult kp = kmeans(data, pos_rows, static_cast<int>(k_pos), km);
    km.seed = mix(config.kmeans.seed, level, 1);
    const KMeansResult kn = kmeans(data, neg_rows, static_cast<int>(k_neg), km);
    sol.positive_centroids = kp.centroids;
    sol.negative_centroids = kn.centroids;

    const auto nearest = [](const Matrix& from, Eigen::Index i, const Matrix& to, std::size_t count) {
        std::vector<std::pair<double, int>> d;
        for (Eigen::Index j = 0; j < to.rows(); ++j)
            d.emplace_back((from.row(i) - to.row(j)).squaredNorm(), static_cast<int>(j));
        std::sort(d.begin(), d.end());
        std::vector<int> out;
        for (std::size_t t = 0; t < std::min(count, d.size()); ++t) out.push_back(d[t].second);
        return out;
    };
    const auto p_of = [&](Eigen::Index opposite) {
        return std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(config.p_fraction * static_cast<double>(opposite))));
    };
    std::set<std::pair<int, int>> pair_set;
    for (Eigen::Index i = 0; i < kp.centroids.rows(); ++i)
        for (int j : nearest(kp.centroids, i, kn.centroids, p_of(kn.centroids.rows())))
            pair_set.emplace(static_cast<int>(i), j);
    for (Eigen::Index j = 0; j < kn.centroids.rows(); ++j)
        for (int i : nearest(kn.centroids, j, kp.centroids, p_of(kp.centroids.rows())))
            pair_set.emplace(i, static_cast<int>(j));

    std::vector<std::vector<RowIndex>> pos_members(static_cast<std::size_t>(kp.centroids.rows()));
    std::vector<std::vector<RowIndex>> neg_members(static_cast<std::size_t>(kn.centroids.rows()));
    for (std::size_t t = 0; t < pos_rows.size(); ++t)
        pos_members[static_cast<std::size_t>(kp.assignment[t])].push_back(pos_rows[t]);
    for (std::size_t t = 0; t < neg_rows.size(); ++t)
        neg_members[static_cast<std::size_t>(kn.assignment[t])].push_back(neg_rows[t]);

    const std::vector<std::pair<int, int>> pairs(pair_set.begin(), pair_set.end());
    sol.pairs.resize(pairs.size());
    parallel_for(pairs.size(), config.workers, [&](std::size_t p) {
        const auto& a = pos_members[static_cast<std::size_t>(pairs[p].first)];
        const auto& b = neg_members[static_cast<std::size_t>(pairs[p].second)];
        std::vector<RowIndex> rows = a;
        rows.insert(rows.end(), b.begin(), b.end());
        std::sort(rows.begin(), rows.end());
        sol.pairs[p].positive_cluster = pairs[p].first;
        sol.pairs[p].negative_cluster = pairs[p].second;
        sol.pairs[p].model = train_svm(view, penalties(sol.c, config.weighted, a.size(), b.size()),
                                       KernelParams{sol.gamma}, solver, rows);
    });
    std::vector<RowIndex> sv;
    for (const auto& pm : sol.pairs) sv.insert(sv.end(), pm.model.sv_rows.begin(), pm.model.sv_rows.end());
    sol.support = sorted_union(std::move(sv));
    return sol;
}

Prediction MultilevelClassifier::predict(const Matrix& points) const {
    if (single) return single->predict(points);
    require(!pairs.empty(), "classifier has no models");
    const Eigen::Index d = points.cols();
    Prediction out;
    for (Eigen::Index r = 0; r < points.rows(); ++r) {
        const double* x = points.row(r).data();
        const auto a = static_cast<int>(nearest_row(positive_centroids, x, d));
        const auto b = static_cast<int>(nearest_row(negative_centroids, x, d));
        double best = 0.0;
        bool have = false;
        for (const auto& pm : pairs) {
            if (pm.positive_cluster != a && pm.negative_cluster != b) continue;
            const double f = pm.model.decision({x, static_cast<std::size_t>(d)});
            if (!have || std::abs(f) > std::abs(best)) {
                best = f;
                have = true;
            }
        }
        ensure(have, "no cluster pair covers the nearest clusters");
        out.margins.push_back(best);
        out.labels.push_back(best > 0.0 ? 1 : -1);
    }
    return out;
}

void write_report(std::ostream& out, const MultilevelReport& report, bool timing) {
    out << "level\tpositives\tnegatives\treplicated\ttrain_size\tsupport\tbranch\tpairs\tC\tgamma";
    if (timing) out << "\tseconds";
    out << '\n';
    char buf[64];
    for (const auto& l : report.levels) {
        std::string rep = l.replicated_positive ? (l.replicated_negative ? "both" : "positive")
                                                : (l.replicated_negative ? "negative" : "none");
        out << l.level << '\t' << l.positives << '\t' << l.negatives << '\t' << rep << '\t' << l.train_size << '\t'
            << l.support << '\t' << l.branch << '\t' << l.pairs;
        std::snprintf(buf, sizeof buf, "\t%.6g\t%.6g", l.c, l.gamma);
        out << buf;
        if (timing) {
            std::snprintf(buf, sizeof buf, "\t%.3f", l.seconds);
            out << buf;
        }
        out << '\n';
    }
    if (report.stalled) out << "# coarsening stalled\n";
    for (const auto& w : report.warnings) out << "# warning: " << w << '\n';
    if (timing) {
        std::snprintf(buf, sizeof buf, "# hierarchy_seconds %.3f\n# total_seconds %.3f\n", report.hierarchy_seconds,
                      report.total_seconds);
        out << buf;
    }
}

MultilevelResult train_multilevel(const BinaryView& view, std::span<const RowIndex> rows, const KnnConfig& knn,
                                  const FrameworkConfig& config, const UdConfig& ud, const SolverConfig& solver) {
    const auto t_start = Clock::now();
    KnnConfig kcfg = knn;
    kcfg.workers = config.workers;
    const Hierarchy h = build_hierarchy(view, rows, kcfg, config);
    MultilevelResult result;
    auto& rep = result.report;
    rep.hierarchy_seconds = since(t_start);
    rep.stalled = h.stalled;
    rep.warnings = h.warnings;
    for (const auto& lv : h.levels)
        for (const ClassLevel* cl : {&lv.positive, &lv.negative})
            for (const auto& w : cl->graph.warnings)
                if (std::find(rep.warnings.begin(), rep.warnings.end(), w) == rep.warnings.end())
                    rep.warnings.push_back(w);

    const auto record = [&](const LevelSolution& s, double seconds) {
        const Level& lv = h.levels[s.level];
        LevelReport l;
        l.level = s.level;
        l.positives = lv.positive.rows.size();
        l.negatives = lv.negative.rows.size();
        l.replicated_positive = lv.positive.replicated;
        l.replicated_negative = lv.negative.replicated;
        l.train_size = s.train_size;
        l.support = s.support.size();
        l.branch = s.branch;
        l.pairs = s.pairs.size();
        l.c = s.c;
        l.gamma = s.gamma;
        l.seconds = seconds;
        rep.levels.push_back(l);
        for (const auto& w : s.warnings)
            if (std::find(rep.warnings.begin(), rep.warnings.end(), w) == rep.warnings.end()) rep.warnings.push_back(w);
    };

    auto t = Clock::now();
    LevelSolution sol = train_coarsest(h, view, ud, solver, config);
    record(sol, since(t));
    for (std::size_t i = h.coarsest(); i-- > 0;) {
        t = Clock::now();
        sol = refine_level(h, i, sol, view, ud, solver, config);
        record(sol, since(t));
    }

    auto& clf = result.classifier;
    if (sol.model) {
        clf.single = std::move(sol.model);
    } else if (config.final_model == FinalModel::Retrain) {
        t = Clock::now();
        const std::size_t n_plus = view.count_positive(sol.support);
        require(n_plus > 0 && n_plus < sol.support.size(), "final retrain: support vectors cover a single class");
        clf.single = train_svm(view, penalties(sol.c, config.weighted, n_plus, sol.support.size() - n_plus),
                               KernelParams{sol.gamma}, solver, sol.support);
        rep.levels.back().seconds += since(t);
    } else {
        clf.pairs = std::move(sol.pairs);
        clf.positive_centroids = std::move(sol.positive_centroids);
        clf.negative_centroids = std::move(sol.negative_centroids);
    }
    rep.total_seconds = since(t_start);
    return result;
}

}  // namespace mlsvm
