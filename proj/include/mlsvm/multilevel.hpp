#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mlsvm/dataset.hpp"
#include "mlsvm/kmeans.hpp"
#include "mlsvm/knn.hpp"
#include "mlsvm/svm.hpp"
#include "mlsvm/ud.hpp"

namespace mlsvm {

enum class FinalModel { Retrain, Ensemble };

struct FrameworkConfig {
    /// Coarsening stops a class once |selected| >= q * |V|.
    double q = 0.5;
    std::size_t coarsest_max = 500;
    /// Refinement trains directly below this many points, else by cluster pairs.
    std::size_t qdt = 5000;
    int neighbor_expansion = 5;
    double p_fraction = 0.10;
    /// A level that keeps at least this fraction of the previous level ends coarsening.
    double stall_ratio = 0.95;
    KMeansConfig kmeans;
    FinalModel final_model = FinalModel::Retrain;
    bool weighted = false;
    std::uint64_t seed = 1;
    int workers = 1;

    void validate() const;
};

struct Coarsening {
    /// Selected local node ids in selection order.
    std::vector<NodeId> selected;
    /// The vertices added by each greedy round.
    std::vector<std::vector<NodeId>> rounds;
};

/// Greedy maximal independent sets on the residual vertex set, repeated until
/// |selected| >= q * |V|. Each round visits the residual vertices in a random
/// order drawn from `seed`.
Coarsening coarsen_class(const KnnGraph& graph, double q, std::uint64_t seed);

/// Same, but every round visits the residual vertices in the given order.
Coarsening coarsen_class(const KnnGraph& graph, double q, std::span<const NodeId> order);

struct ClassLevel {
    /// Sorted dataset rows.
    std::vector<RowIndex> rows;
    KnnGraph graph;
    /// Copied unchanged from the finer level.
    bool replicated = false;
    /// Greedy rounds (local node ids of the finer level) that selected this level.
    std::vector<std::vector<NodeId>> rounds;
    /// For each node, the position in the next coarser level's `rows` of the
    /// node itself or a selected neighbor. Empty on the coarsest level.
    std::vector<std::size_t> parent;
};

struct Level {
    ClassLevel positive;
    ClassLevel negative;

    std::size_t size() const { return positive.rows.size() + negative.rows.size(); }
    std::vector<RowIndex> rows() const;
    const ClassLevel& of(int y) const { return y > 0 ? positive : negative; }
};

struct Hierarchy {
    /// Level 0 is the full training set.
    std::vector<Level> levels;
    bool stalled = false;
    std::vector<std::string> warnings;

    std::size_t coarsest() const { return levels.size() - 1; }
};

Hierarchy build_hierarchy(const BinaryView& view, std::span<const RowIndex> rows, const KnnConfig& knn,
                          const FrameworkConfig& config);

/// One SVM trained on a positive cluster and a negative cluster.
struct PairModel {
    int positive_cluster = 0;
    int negative_cluster = 0;
    SvmModel model;
};

struct LevelSolution {
    std::size_t level = 0;
    /// Sorted dataset rows of the support vectors.
    std::vector<RowIndex> support;
    double c = 1.0;
    double gamma = 1.0;
    ClassWeights weights;
    /// Direct training (coarsest level and small refinement sets).
    std::optional<SvmModel> model;
    /// Cluster-pair training.
    std::vector<PairModel> pairs;
    Matrix positive_centroids;
    Matrix negative_centroids;
    std::size_t train_size = 0;
    char branch = 'C';
    std::size_t ud_evaluations = 0;
    std::vector<std::string> warnings;
};

LevelSolution train_coarsest(const Hierarchy& hierarchy, const BinaryView& view, const UdConfig& ud,
                             const SolverConfig& solver, const FrameworkConfig& config);

LevelSolution refine_level(const Hierarchy& hierarchy, std::size_t level, const LevelSolution& coarse,
                           const BinaryView& view, const UdConfig& ud, const SolverConfig& solver,
                           const FrameworkConfig& config);

/// Final predictor: one SVM, or cluster-pair models where a query is answered
/// by the pair with the largest |margin| among pairs that contain the
/// query's nearest positive or nearest negative cluster.
struct MultilevelClassifier {
    std::optional<SvmModel> single;
    std::vector<PairModel> pairs;
    Matrix positive_centroids;
    Matrix negative_centroids;

    Prediction predict(const Matrix& points) const;
};

struct LevelReport {
    std::size_t level = 0;
    std::size_t positives = 0;
    std::size_t negatives = 0;
    bool replicated_positive = false;
    bool replicated_negative = false;
    std::size_t train_size = 0;
    std::size_t support = 0;
    char branch = 'C';
    std::size_t pairs = 0;
    double c = 0.0;
    double gamma = 0.0;
    double seconds = 0.0;
};

struct MultilevelReport {
    std::vector<LevelReport> levels;
    bool stalled = false;
    double hierarchy_seconds = 0.0;
    double total_seconds = 0.0;
    std::vector<std::string> warnings;
};

/// Tab-separated per-level table; seconds columns are omitted when `timing` is false.
void write_report(std::ostream& out, const MultilevelReport& report, bool timing = true);

struct MultilevelResult {
    MultilevelClassifier classifier;
    MultilevelReport report;
};

/// Coarsening, coarsest-level training and refinement back to level 0.
MultilevelResult train_multilevel(const BinaryView& view, std::span<const RowIndex> rows, const KnnConfig& knn,
                                  const FrameworkConfig& config, const UdConfig& ud, const SolverConfig& solver);

}  // namespace mlsvm
