#pragma once

#include <cmath>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mlsvm/dataset.hpp"
#include "mlsvm/smo.hpp"

namespace mlsvm {

struct KernelParams {
    double gamma = 1.0;
};

/// Per-class box constraints of the dual. Equal values give the plain soft-margin SVM.
struct ClassWeights {
    double c_plus = 1.0;
    double c_minus = 1.0;

    static ClassWeights uniform(double c) { return {c, c}; }
    /// C+/C- = n_minus/n_plus, scaled so that a balanced problem gets C on both sides.
    static ClassWeights inverse_frequency(double c, std::size_t n_plus, std::size_t n_minus);
};

inline double rbf(std::span<const double> a, std::span<const double> b, double gamma) {
    double s = 0.0;
    for (std::size_t t = 0; t < a.size(); ++t) {
        const double d = a[t] - b[t];
        s += d * d;
    }
    return std::exp(-gamma * s);
}

struct Prediction {
    std::vector<int> labels;
    std::vector<double> margins;
};

/// Trained RBF SVM: f(x) = sum_i alpha_i y_i k(x_i, x) + b.
struct SvmModel {
    Matrix support_vectors;
    std::vector<int> sv_labels;
    std::vector<double> sv_alpha;
    /// Dataset rows the support vectors came from (empty for loaded models).
    std::vector<RowIndex> sv_rows;
    double bias = 0.0;
    KernelParams kernel;
    ClassWeights weights;
    /// Training diagnostics.
    std::size_t iterations = 0;
    std::size_t training_size = 0;

    std::size_t size() const { return sv_alpha.size(); }
    std::size_t dimension() const { return static_cast<std::size_t>(support_vectors.cols()); }
    double decision(std::span<const double> x) const;
    Prediction predict(const Matrix& points) const;
};

/// Trains on `rows` of the view's dataset (all rows when empty).
SvmModel train_svm(const BinaryView& view, const ClassWeights& weights, const KernelParams& kernel,
                   const SolverConfig& config = {}, std::span<const RowIndex> rows = {});

/// Labels are sign(f(x)); f(x) = 0 maps to -1.
Prediction predict(const SvmModel& model, const Matrix& points);

/// sum(alpha) - 1/2 sum_ij alpha_i alpha_j y_i y_j k(x_i, x_j).
double dual_objective(const SvmModel& model, const BinaryView& view);
double dual_objective(const SvmModel& model);

void write_model(std::ostream& out, const SvmModel& model);
SvmModel read_model(std::istream& in);

}  // namespace mlsvm
