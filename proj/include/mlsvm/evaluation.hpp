#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mlsvm/dataset.hpp"
#include "mlsvm/knn.hpp"
#include "mlsvm/metrics.hpp"
#include "mlsvm/multilevel.hpp"
#include "mlsvm/rem.hpp"
#include "mlsvm/svm.hpp"
#include "mlsvm/ud.hpp"

namespace mlsvm {

enum class Method { Svm, Wsvm, Mlsvm, Mlwsvm };
enum class Imputer { Rem, Mean, None };
enum class NormalizationScope { Fold, Global };

std::string method_name(Method m);
Method parse_method(const std::string& name);
std::string imputer_name(Imputer i);
Imputer parse_imputer(const std::string& name);

inline bool is_weighted(Method m) { return m == Method::Wsvm || m == Method::Mlwsvm; }
inline bool is_multilevel(Method m) { return m == Method::Mlsvm || m == Method::Mlwsvm; }

/// Every knob of the train/evaluate pipeline.
struct PipelineConfig {
    KnnConfig knn;
    FrameworkConfig framework;
    UdConfig ud;
    SolverConfig solver;
    RemConfig rem;
    Imputer imputer = Imputer::Rem;
    NormalizationScope normalization = NormalizationScope::Fold;
    /// Adds imputation time to the reported seconds.
    bool time_imputation = false;
    std::uint64_t seed = 1;
    int workers = 1;

    /// Copies seed and workers into the module configs.
    PipelineConfig resolved() const;
};

/// Train and test rows of one fold after normalization and imputation.
struct FoldData {
    Dataset train;
    Dataset test;
    NormalizationStats normalization;
    std::optional<RemModel> rem;
    /// Column means of the normalized train rows (mean imputation only).
    std::vector<double> fill;
    double impute_seconds = 0.0;
};

/// Normalization and imputation are fitted on `train_rows` only (or on every
/// row for global normalization) and then applied to the test rows.
FoldData prepare_fold(const Dataset& data, std::span<const RowIndex> train_rows, std::span<const RowIndex> test_rows,
                      const PipelineConfig& config);

struct TrainedModel {
    MultilevelClassifier classifier;
    std::optional<MultilevelReport> report;
    /// Flat methods only.
    std::optional<UdOutcome> ud;
    double seconds = 0.0;
};

/// Trains one method on a complete dataset with `positive_class` as +1.
TrainedModel train_method(const Dataset& train, int positive_class, Method method, const PipelineConfig& config);

struct FoldResult {
    int fold = 0;
    ConfusionMatrix cm;
    Metrics metrics;
    double train_seconds = 0.0;
    double predict_seconds = 0.0;
    double impute_seconds = 0.0;
};

struct EvalReport {
    Method method = Method::Svm;
    int positive_class = 0;
    std::vector<FoldResult> folds;
    /// Arithmetic means over folds.
    Metrics mean;
    double gmean_std = 0.0;
    /// Training seconds summed over folds (plus imputation when configured).
    double seconds = 0.0;
    std::vector<std::string> warnings;
};

/// Stratified k-fold CV; every method sees the same folds and the same fold preprocessing.
std::vector<EvalReport> run_cv(const Dataset& data, int positive_class, std::span<const Method> methods, int folds,
                               const PipelineConfig& config);

struct ClassReport {
    int label = 0;
    EvalReport report;
};

/// One binary CV per class, that class being +1.
std::vector<ClassReport> one_against_all(const Dataset& data, Method method, int folds, const PipelineConfig& config);
void write_class_table(std::ostream& out, std::span<const ClassReport> reports);

struct BenchmarkPlan {
    std::string dataset = "data";
    std::vector<double> ratios = {0.05, 0.10, 0.20, 0.40};
    std::vector<Method> methods = {Method::Svm, Method::Wsvm, Method::Mlsvm, Method::Mlwsvm};
    int folds = 10;
    /// Nullopt selects the minority class.
    std::optional<int> positive_class;

    void validate() const;
};

struct BenchmarkCell {
    double ratio = 0.0;
    Method method = Method::Svm;
    Metrics metrics;
    double gmean_std = 0.0;
    double seconds = 0.0;
    std::string error;
};

struct BenchmarkTable {
    std::string dataset;
    std::vector<BenchmarkCell> cells;
    std::vector<std::string> warnings;
};

/// For each ratio: inject missing cells into `data`, then run_cv over all
/// methods. `on_cell` sees each cell as soon as it is done. A failing ratio
/// records the error in its cells and the run continues.
BenchmarkTable run_benchmark(const Dataset& data, const BenchmarkPlan& plan, const PipelineConfig& config,
                             const std::function<void(const BenchmarkCell&)>& on_cell = {});

void write_long_header(std::ostream& out, bool timing);
void write_long_row(std::ostream& out, const std::string& dataset, const BenchmarkCell& cell, bool timing);
/// Rows are ratios, columns are methods.
void write_gmean_table(std::ostream& out, const BenchmarkTable& table);
void write_timing_table(std::ostream& out, const BenchmarkTable& table);

}  // namespace mlsvm
