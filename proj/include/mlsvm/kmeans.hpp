#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mlsvm/dataset.hpp"

namespace mlsvm {

struct KMeansConfig {
    int restarts = 3;
    int max_iterations = 100;
    std::uint64_t seed = 11;
};

struct KMeansResult {
    /// One row per cluster.
    Matrix centroids;
    /// Cluster of each input row, parallel to the `rows` argument.
    std::vector<int> assignment;
    double inertia = 0.0;
};

/// Lloyd iterations from k-means++ seeds; the restart with the lowest inertia
/// wins. A cluster that empties is re-seeded with the point farthest from its
/// centroid. k is clamped to the number of rows.
KMeansResult kmeans(const Dataset& data, std::span<const RowIndex> rows, int k, const KMeansConfig& config = {});

}  // namespace mlsvm
