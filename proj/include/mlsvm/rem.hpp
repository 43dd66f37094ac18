#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "mlsvm/dataset.hpp"

namespace mlsvm {

enum class RemRegression { MultipleRidge, TruncatedTls };

struct RemConfig {
    int max_iters = 50;
    double stagnation_tol = 1e-2;
    RemRegression regression = RemRegression::MultipleRidge;
    /// K for the per-record K-fold selection of the ridge parameter.
    int cv_folds = 5;
    /// Norm of the held-out prediction error minimized by the K-fold selection.
    int cv_error_norm = 2;
    /// Fixed ridge parameter (relative to the predictor variances); nullopt selects it per record by K-fold CV.
    std::optional<double> ridge;
    /// Candidates scanned when the ridge parameter is selected by CV.
    std::vector<double> ridge_grid = {1e-10, 1e-8, 1e-6, 1e-4, 1e-3, 3e-3, 1e-2, 3e-2,
                                      0.1,   0.3,  1.0,  3.0,  10.0, 100.0};
    /// Number of principal directions kept by the truncated TLS estimator.
    int ttls_truncation = 1;
    /// Optional explicit fold id per row for the ridge selection; empty means contiguous blocks.
    std::vector<int> cv_assignment;
    int workers = 1;

    void validate() const;
};

struct RemDiagnostics {
    int iterations = 0;
    double final_change = 0.0;
    bool converged = true;
    std::vector<std::size_t> missing_per_feature;
};

struct RemResult;

/// Mean and covariance of the completed data plus the K-fold statistics used
/// to select ridge parameters. Applying it to new rows reads nothing but
/// those rows' observed cells.
class RemModel {
public:
    RemModel() = default;

    const Vector& mean() const { return mean_; }
    const Eigen::MatrixXd& covariance() const { return cov_; }

    /// Fills the missing cells of `data` with conditional-mean predictions.
    Dataset impute(const Dataset& data, int workers = 1) const;

private:
    friend struct RemEngine;
    friend RemResult rem_fit(const Dataset& data, const RemConfig& config);

    struct FoldStats {
        Vector train_mean;
        Eigen::MatrixXd train_cov;
        /// Held-out cross products centred on train_mean.
        Eigen::MatrixXd heldout_scatter;
        std::size_t heldout_rows = 0;
        /// Held-out rows (completed values), only kept for non-quadratic error norms.
        Matrix heldout;
    };

    Vector mean_;
    Eigen::MatrixXd cov_;
    std::vector<FoldStats> folds_;
    RemConfig config_;
};

struct RemResult {
    Dataset completed;
    RemDiagnostics diagnostics;
    RemModel model;
};

/// Regularized EM: iterated ridge (or truncated TLS) regression of each
/// record's missing variables on its observed ones.
RemResult rem_fit(const Dataset& data, const RemConfig& config = {});

inline std::pair<Dataset, RemDiagnostics> rem_impute(const Dataset& data, const RemConfig& config = {}) {
    auto fit = rem_fit(data, config);
    return {std::move(fit.completed), std::move(fit.diagnostics)};
}

/// Replaces each missing cell with the observed mean of its feature.
Dataset mean_impute(const Dataset& data);

}  // namespace mlsvm
