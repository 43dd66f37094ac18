#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mlsvm/dataset.hpp"

namespace mlsvm {

enum class KnnMode { Auto, Exact, Approximate };

struct KnnConfig {
    int k = 10;
    /// Auto picks exact search below `exact_threshold` points.
    KnnMode mode = KnnMode::Auto;
    std::size_t exact_threshold = 20000;
    // Randomized kd-forest parameters for approximate search.
    int trees = 4;
    int leaf_size = 16;
    int checks = 512;
    std::uint64_t seed = 7;
    int workers = 1;
};

/// Local node id: position in KnnGraph::node_ids.
using NodeId = std::uint32_t;

struct Neighbor {
    NodeId node;
    double distance;
};

/// Directed k-nearest-neighbor lists over a subset of dataset rows plus
/// their symmetric closure.
struct KnnGraph {
    std::vector<RowIndex> node_ids;
    /// Per node, at most k neighbors sorted by nondecreasing distance.
    std::vector<std::vector<Neighbor>> neighbors;
    /// Undirected adjacency (sorted, no self loops).
    std::vector<std::vector<NodeId>> adjacency;
    int k = 0;
    std::vector<std::string> warnings;

    std::size_t size() const { return node_ids.size(); }
    std::size_t edge_count() const;
};

KnnGraph build_knn_graph(const Dataset& data, std::span<const RowIndex> rows, const KnnConfig& config = {});

/// Builds `adjacency` from `neighbors`.
void symmetrize(KnnGraph& graph);

/// Mean over nodes of |approx list intersect exact list| / k.
double knn_recall(const KnnGraph& approx, const KnnGraph& exact);

/// Debug dump, one line per node: `row: (nbr_row,dist) ...`.
void dump_graph(std::ostream& out, const KnnGraph& graph);

}  // namespace mlsvm
