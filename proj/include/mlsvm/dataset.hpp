#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

namespace mlsvm {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MaskMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowIndex = std::size_t;

/// Dense feature matrix with a per-cell missingness mask.
///
/// The mask is the single source of truth for absent values. Missing cells
/// hold NaN in `features`, but nothing downstream reads them.
struct Dataset {
    Matrix features;
    MaskMatrix missing;
    std::vector<int> labels;
    /// Distinct labels in order of first appearance.
    std::vector<int> class_names;
    /// Optional; empty when the source had no header.
    std::vector<std::string> feature_names;

    std::size_t rows() const { return static_cast<std::size_t>(features.rows()); }
    std::size_t cols() const { return static_cast<std::size_t>(features.cols()); }
    std::size_t missing_count() const;
    bool has_missing() const { return missing_count() > 0; }
    bool row_has_missing(RowIndex r) const;

    /// Throws InvariantError if shapes or class_names are inconsistent.
    void validate() const;

    /// Copies the given rows (in order) into a new dataset. class_names keeps
    /// the parent's order, restricted to labels that still occur.
    Dataset subset(std::span<const RowIndex> rows) const;

    /// Builds a dataset from a complete matrix and labels.
    static Dataset from_matrix(Matrix features, std::vector<int> labels);
};

/// Recomputes class_names from labels (first-appearance order).
std::vector<int> distinct_labels(std::span<const int> labels);

enum class FileFormat { Delimited, Sparse };
enum class HeaderMode { Auto, Present, Absent };

struct LoadOptions {
    FileFormat format = FileFormat::Delimited;
    /// Column name (requires a header) or 0-based index; negative counts from the end.
    std::variant<std::string, int> label_column = -1;
    std::string missing_token = "?";
    char delimiter = ',';
    HeaderMode header = HeaderMode::Auto;
    /// Sparse format only: feature count; 0 means the largest index seen.
    std::size_t sparse_features = 0;
};

Dataset load_dataset(const std::string& path, const LoadOptions& options = {});
Dataset read_dataset(std::istream& in, const LoadOptions& options = {});

/// Canonical writer: 17 significant digits, label column last. Sparse output
/// rejects datasets with missing cells (the format cannot express them).
void write_dataset(std::ostream& out, const Dataset& data, const LoadOptions& options = {});
void write_dataset(const std::string& path, const Dataset& data, const LoadOptions& options = {});

/// Per-feature z-score statistics fitted on observed cells only.
struct NormalizationStats {
    std::vector<double> mean;
    std::vector<double> std;
    std::vector<bool> constant;

    std::size_t size() const { return mean.size(); }
};

/// Sample (n-1) standard deviation over the observed cells of `rows`.
/// Features with fewer than two observations or zero spread are flagged constant.
NormalizationStats fit_normalization(const Dataset& data, std::span<const RowIndex> rows);
NormalizationStats fit_normalization(const Dataset& data);

/// (x - mean) / std on observed cells; constant features map to 0. Missing
/// cells pass through untouched. Not idempotent.
Dataset apply_normalization(const Dataset& data, const NormalizationStats& stats);

/// Marks exactly floor(rate * rows * cols) distinct cells, chosen uniformly
/// with the given seed, as missing. Cells already missing stay missing.
Dataset inject_missing(const Dataset& data, double rate, std::uint64_t seed);

/// One-against-all split of a dataset: `positive_class` maps to y = +1.
struct BinaryView {
    const Dataset* base = nullptr;
    int positive_class = 0;
    std::vector<RowIndex> rows_positive;
    std::vector<RowIndex> rows_negative;

    int y(RowIndex row) const { return base->labels[row] == positive_class ? 1 : -1; }
    std::vector<int> signs(std::span<const RowIndex> rows) const;
    std::size_t count_positive(std::span<const RowIndex> rows) const;
};

BinaryView binary_view(const Dataset& data, int positive_class);

/// Class with the fewest rows; ties go to the class listed first.
int minority_class(const Dataset& data);

}  // namespace mlsvm
