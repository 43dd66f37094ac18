#include "mlsvm/knn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <queue>
#include <random>

#include <spdlog/spdlog.h>

#include "mlsvm/error.hpp"
#include "mlsvm/parallel.hpp"

namespace mlsvm {

namespace {

struct Candidate {
    double dist2;
    RowIndex row;
    NodeId node;

    bool operator<(const Candidate& o) const { return dist2 < o.dist2 || (dist2 == o.dist2 && row < o.row); }
};

double squared_distance(const double* a, const double* b, Eigen::Index d) {
    double s = 0.0;
    for (Eigen::Index t = 0; t < d; ++t) {
        const double diff = a[t] - b[t];
        s += diff * diff;
    }
    return s;
}

/// Keeps the k best candidates seen so far (max-heap on the ordering above).
class TopK {
public:
    explicit TopK(std::size_t k) : k_(k) { heap_.reserve(k + 1); }

    void offer(const Candidate& c) {
        if (k_ == 0) return;
        if (heap_.size() < k_) {
            heap_.push_back(c);
            std::push_heap(heap_.begin(), heap_.end());
        } else if (c < heap_.front()) {
            std::pop_heap(heap_.begin(), heap_.end());
            heap_.back() = c;
            std::push_heap(heap_.begin(), heap_.end());
        }
    }

    double bound() const {
        return heap_.size() < k_ ? std::numeric_limits<double>::infinity() : heap_.front().dist2;
    }

    std::vector<Neighbor> sorted() {
        std::sort(heap_.begin(), heap_.end());
        std::vector<Neighbor> out;
        out.reserve(heap_.size());
        for (const auto& c : heap_) out.push_back({c.node, std::sqrt(c.dist2)});
        return out;
    }

private:
    std::size_t k_;
    std::vector<Candidate> heap_;
};

class KdForest {
public:
    KdForest(const Matrix& points, const KnnConfig& cfg) : points_(points), leaf_size_(std::max(1, cfg.leaf_size)) {
        std::mt19937_64 rng(cfg.seed);
        const auto m = static_cast<NodeId>(points.rows());
        trees_.resize(static_cast<std::size_t>(std::max(1, cfg.trees)));
        for (auto& tree : trees_) {
            tree.index.resize(m);
            std::iota(tree.index.begin(), tree.index.end(), NodeId{0});
            build(tree, 0, m, rng);
        }
    }

    template <class Visit>
    void search(const double* query, int checks, Visit&& visit, std::vector<std::uint32_t>& stamp,
                std::uint32_t tag, const TopK& best) const {
        struct Branch {
            double bound;
            std::size_t tree;
            std::int32_t node;
            bool operator>(const Branch& o) const { return bound > o.bound; }
        };
        std::priority_queue<Branch, std::vector<Branch>, std::greater<>> queue;
        int checked = 0;
        auto descend = [&](std::size_t t, std::int32_t node, double bound) {
            const Tree& tree = trees_[t];
            while (true) {
                const Node& nd = tree.nodes[static_cast<std::size_t>(node)];
                if (nd.left < 0) {
                    for (std::uint32_t i = nd.begin; i < nd.end; ++i) {
                        const NodeId p = tree.index[i];
                        if (stamp[p] == tag) continue;
                        stamp[p] = tag;
                        visit(p);
                        ++checked;
                    }
                    return;
                }
                const double diff = query[nd.dim] - nd.split;
                const std::int32_t near = diff < 0 ? nd.left : nd.right;
                const std::int32_t far = diff < 0 ? nd.right : nd.left;
                queue.push({std::max(bound, diff * diff), t, far});
                node = near;
            }
        };
        for (std::size_t t = 0; t < trees_.size(); ++t) descend(t, 0, 0.0);
        while (!queue.empty() && checked < checks) {
            const Branch b = queue.top();
            queue.pop();
            if (b.bound > best.bound()) break;
            descend(b.tree, b.node, b.bound);
        }
    }

private:
    struct Node {
        std::int32_t left = -1;
        std::int32_t right = -1;
        Eigen::Index dim = 0;
        double split = 0.0;
        std::uint32_t begin = 0;
        std::uint32_t end = 0;
    };
    struct Tree {
        std::vector<Node> nodes;
        std::vector<NodeId> index;
    };

    std::int32_t build(Tree& tree, std::uint32_t begin, std::uint32_t end, std::mt19937_64& rng) {
        const auto id = static_cast<std::int32_t>(tree.nodes.size());
        tree.nodes.push_back({});
        tree.nodes.back().begin = begin;
        tree.nodes.back().end = end;
        if (end - begin <= static_cast<std::uint32_t>(leaf_size_)) return id;

        const Eigen::Index d = points_.cols();
        const std::uint32_t sample = std::min<std::uint32_t>(end - begin, 100);
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
        Eigen::VectorXd var = Eigen::VectorXd::Zero(d);
        for (std::uint32_t i = 0; i < sample; ++i) mean += points_.row(tree.index[begin + i]).transpose();
        mean /= sample;
        for (std::uint32_t i = 0; i < sample; ++i)
            var += (points_.row(tree.index[begin + i]).transpose() - mean).cwiseAbs2();

        std::vector<Eigen::Index> dims(static_cast<std::size_t>(d));
        std::iota(dims.begin(), dims.end(), Eigen::Index{0});
        const std::size_t top = std::min<std::size_t>(5, dims.size());
        std::partial_sort(dims.begin(), dims.begin() + static_cast<long>(top), dims.end(),
                          [&](Eigen::Index a, Eigen::Index b) { return var(a) > var(b) || (var(a) == var(b) && a < b); });
        const Eigen::Index dim = dims[std::uniform_int_distribution<std::size_t>(0, top - 1)(rng)];
        if (var(dim) <= 0.0) {
            // The sample is degenerate; fall back to a leaf unless the full range varies.
            bool varies = false;
            const double v0 = points_(tree.index[begin], dim);
            for (std::uint32_t i = begin; i < end && !varies; ++i) varies = points_(tree.index[i], dim) != v0;
            if (!varies) return id;
        }
        double split = mean(dim);
        auto first = tree.index.begin() + begin;
        auto last = tree.index.begin() + end;
        auto mid = std::partition(first, last, [&](NodeId p) { return points_(p, dim) < split; });
        if (mid == first || mid == last) {
            auto nth = first + (last - first) / 2;
            std::nth_element(first, nth, last, [&](NodeId a, NodeId b) { return points_(a, dim) < points_(b, dim); });
            split = points_(*nth, dim);
            mid = std::partition(first, last, [&](NodeId p) { return points_(p, dim) < split; });
            if (mid == first) return id;  // all values equal along dim
        }
        const auto split_at = static_cast<std::uint32_t>(mid - tree.index.begin());
        const std::int32_t left = build(tree, begin, split_at, rng);
        const std::int32_t right = build(tree, split_at, end, rng);
        Node& nd = tree.nodes[static_cast<std::size_t>(id)];
        nd.left = left;
        nd.right = right;
        nd.dim = dim;
        nd.split = split;
        return id;
    }

    const Matrix& points_;
    int leaf_size_;
    std::vector<Tree> trees_;
};

}  // namespace

std::size_t KnnGraph::edge_count() const {
    std::size_t twice = 0;
    for (const auto& a : adjacency) twice += a.size();
    return twice / 2;
}

void symmetrize(KnnGraph& graph) {
    graph.adjacency.assign(graph.neighbors.size(), {});
    for (std::size_t i = 0; i < graph.neighbors.size(); ++i) {
        for (const auto& nb : graph.neighbors[i]) {
            if (nb.node == i) continue;
            graph.adjacency[i].push_back(nb.node);
            graph.adjacency[nb.node].push_back(static_cast<NodeId>(i));
        }
    }
    for (auto& a : graph.adjacency) {
        std::sort(a.begin(), a.end());
        a.erase(std::unique(a.begin(), a.end()), a.end());
    }
}

KnnGraph build_knn_graph(const Dataset& data, std::span<const RowIndex> rows, const KnnConfig& config) {
    require(!rows.empty(), "kNN graph needs at least one point");
    require(config.k >= 1, "kNN: k must be at least 1");
    KnnGraph graph;
    graph.node_ids.assign(rows.begin(), rows.end());
    const std::size_t m = rows.size();
    std::size_t k = static_cast<std::size_t>(config.k);
    if (k >= m) {
        k = m - 1;
        graph.warnings.push_back("k=" + std::to_string(config.k) + " clamped to " + std::to_string(k) + " for " +
                                 std::to_string(m) + " points");
        spdlog::debug("kNN: {}", graph.warnings.back());
    }
    graph.k = static_cast<int>(k);

    Matrix points(static_cast<Eigen::Index>(m), data.features.cols());
    for (std::size_t i = 0; i < m; ++i) {
        if (data.row_has_missing(rows[i]))
            throw Error("kNN: row " + std::to_string(rows[i]) + " has missing values");
        points.row(static_cast<Eigen::Index>(i)) = data.features.row(static_cast<Eigen::Index>(rows[i]));
    }
    const Eigen::Index d = points.cols();
    graph.neighbors.assign(m, {});

    const bool exact = config.mode == KnnMode::Exact ||
                       (config.mode == KnnMode::Auto && m < config.exact_threshold);
    const std::size_t blocks = std::min<std::size_t>(m, 64);
    if (exact) {
        parallel_for(blocks, config.workers, [&](std::size_t b) {
            for (std::size_t i = b * m / blocks; i < (b + 1) * m / blocks; ++i) {
                TopK best(k);
                const double* q = points.row(static_cast<Eigen::Index>(i)).data();
                for (std::size_t j = 0; j < m; ++j) {
                    if (j == i) continue;
                    const double d2 = squared_distance(q, points.row(static_cast<Eigen::Index>(j)).data(), d);
                    if (d2 > best.bound()) continue;
                    best.offer({d2, rows[j], static_cast<NodeId>(j)});
                }
                graph.neighbors[i] = best.sorted();
            }
        });
    } else {
        const KdForest forest(points, config);
        parallel_for(blocks, config.workers, [&](std::size_t b) {
            std::vector<std::uint32_t> stamp(m, 0);
            std::uint32_t tag = 0;
            for (std::size_t i = b * m / blocks; i < (b + 1) * m / blocks; ++i) {
                ++tag;
                TopK best(k);
                const double* q = points.row(static_cast<Eigen::Index>(i)).data();
                stamp[i] = tag;  // never report the query itself
                forest.search(
                    q, std::max(config.checks, static_cast<int>(k)),
                    [&](NodeId j) {
                        const double d2 = squared_distance(q, points.row(j).data(), d);
                        best.offer({d2, rows[j], j});
                    },
                    stamp, tag, best);
                graph.neighbors[i] = best.sorted();
            }
        });
    }
    symmetrize(graph);
    return graph;
}

double knn_recall(const KnnGraph& approx, const KnnGraph& exact) {
    require(approx.node_ids == exact.node_ids, "knn_recall: graphs cover different node sets");
    require(approx.k == exact.k, "knn_recall: graphs use different k");
    if (exact.k == 0 || exact.size() == 0) return 1.0;
    double total = 0.0;
    for (std::size_t i = 0; i < exact.size(); ++i) {
        std::vector<NodeId> a;
        std::vector<NodeId> e;
        for (const auto& nb : approx.neighbors[i]) a.push_back(nb.node);
        for (const auto& nb : exact.neighbors[i]) e.push_back(nb.node);
        std::sort(a.begin(), a.end());
        std::sort(e.begin(), e.end());
        std::vector<NodeId> common;
        std::set_intersection(a.begin(), a.end(), e.begin(), e.end(), std::back_inserter(common));
        total += static_cast<double>(common.size()) / exact.k;
    }
    return total / static_cast<double>(exact.size());
}

void dump_graph(std::ostream& out, const KnnGraph& graph) {
    char buf[64];
    for (std::size_t i = 0; i < graph.size(); ++i) {
        out << graph.node_ids[i] << ':';
        for (const auto& nb : graph.neighbors[i]) {
            std::snprintf(buf, sizeof buf, "%.17g", nb.distance);
            out << " (" << graph.node_ids[nb.node] << ',' << buf << ')';
        }
        out << '\n';
    }
}

}  // namespace mlsvm
