#include "mlsvm/rem.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <Eigen/Dense>

#include "mlsvm/error.hpp"
#include "mlsvm/parallel.hpp"

namespace mlsvm {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

void RemConfig::validate() const {
    require(max_iters >= 1, "REM: max_iters must be at least 1");
    require(stagnation_tol > 0.0, "REM: stagnation tolerance must be positive");
    require(cv_folds >= 2, "REM: K-fold selection needs at least 2 folds");
    require(cv_error_norm >= 1, "REM: error norm must be at least 1");
    require(!ridge || *ridge >= 0.0, "REM: ridge parameter must be nonnegative");
    require(ridge || !ridge_grid.empty(), "REM: empty ridge grid");
    require(ttls_truncation >= 1, "REM: truncation parameter must be at least 1");
}

namespace {

struct Pattern {
    std::vector<int> avail;
    std::vector<int> miss;
    std::vector<Index> rows;
};

std::vector<Pattern> group_patterns(const MaskMatrix& missing) {
    std::map<std::vector<bool>, std::vector<Index>> groups;
    for (Index r = 0; r < missing.rows(); ++r) {
        if (!missing.row(r).any()) continue;
        std::vector<bool> key(static_cast<std::size_t>(missing.cols()));
        for (Index c = 0; c < missing.cols(); ++c) key[static_cast<std::size_t>(c)] = missing(r, c);
        groups[key].push_back(r);
    }
    std::vector<Pattern> out;
    out.reserve(groups.size());
    for (auto& [key, rows] : groups) {
        Pattern p;
        for (std::size_t c = 0; c < key.size(); ++c) (key[c] ? p.miss : p.avail).push_back(static_cast<int>(c));
        p.rows = std::move(rows);
        out.push_back(std::move(p));
    }
    return out;
}

/// Symmetric eigendecomposition of the variance-standardized predictor block.
struct ScaledEigen {
    VectorXd inv_sqrt_scale;  // D^{-1/2}
    VectorXd values;
    MatrixXd vectors;
};

ScaledEigen scaled_eigen(const MatrixXd& block) {
    ScaledEigen out;
    out.inv_sqrt_scale.resize(block.rows());
    for (Index j = 0; j < block.rows(); ++j) {
        const double d = block(j, j);
        out.inv_sqrt_scale(j) = d > 1e-300 ? 1.0 / std::sqrt(d) : 1.0;
    }
    const MatrixXd standardized =
        out.inv_sqrt_scale.asDiagonal() * block * out.inv_sqrt_scale.asDiagonal();
    Eigen::SelfAdjointEigenSolver<MatrixXd> solver(standardized);
    out.values = solver.eigenvalues();
    out.vectors = solver.eigenvectors();
    return out;
}

/// Ridge coefficients B (|a| x |m|) minimizing the penalized least squares
/// with penalty h * diag(cov_aa).
MatrixXd ridge_coefficients(const ScaledEigen& eig, const MatrixXd& cov_am, double h) {
    const double top = eig.values.size() ? std::max(eig.values.maxCoeff(), 0.0) : 0.0;
    VectorXd inv(eig.values.size());
    for (Index j = 0; j < inv.size(); ++j) {
        const double denom = eig.values(j) + h;
        if (!(denom > 1e-12 * std::max(top, 1e-300)))
            throw Error("REM: singular regression; use a nonzero ridge parameter");
        inv(j) = 1.0 / denom;
    }
    const MatrixXd r = eig.inv_sqrt_scale.asDiagonal() * cov_am;
    return eig.inv_sqrt_scale.asDiagonal() * (eig.vectors * (inv.asDiagonal() * (eig.vectors.transpose() * r)));
}

MatrixXd ttls_coefficients(const MatrixXd& cov, const std::vector<int>& avail, const std::vector<int>& miss,
                           int truncation) {
    std::vector<int> all(avail);
    all.insert(all.end(), miss.begin(), miss.end());
    const MatrixXd block = cov(all, all);
    ScaledEigen eig = scaled_eigen(block);
    const Index na = static_cast<Index>(avail.size());
    const Index nm = static_cast<Index>(miss.size());
    const Index keep = std::clamp<Index>(truncation, 1, na);
    // Eigen returns ascending eigenvalues; the discarded directions are the
    // (na + nm - keep) smallest, i.e. the leading columns.
    const Index drop = na + nm - keep;
    const MatrixXd v12 = eig.vectors.block(0, 0, na, drop);
    const MatrixXd v22 = eig.vectors.block(na, 0, nm, drop);
    const MatrixXd pinv = v22.completeOrthogonalDecomposition().pseudoInverse();
    const MatrixXd b_std = -v12 * pinv;
    const VectorXd sa = eig.inv_sqrt_scale.head(na);
    const VectorXd sm = eig.inv_sqrt_scale.tail(nm);
    return sa.asDiagonal() * b_std * sm.cwiseInverse().asDiagonal();
}

}  // namespace

struct RemEngine {
    using FoldStats = RemModel::FoldStats;

    /// K-fold statistics of a completed matrix.
    static std::vector<FoldStats> fold_stats(const Matrix& x, const std::vector<int>& assignment, int folds,
                                             bool keep_rows) {
        const Index n = x.rows();
        const Index p = x.cols();
        const VectorXd center = x.colwise().mean().transpose();
        std::vector<VectorXd> sums(static_cast<std::size_t>(folds), VectorXd::Zero(p));
        std::vector<MatrixXd> cross(static_cast<std::size_t>(folds), MatrixXd::Zero(p, p));
        std::vector<std::size_t> counts(static_cast<std::size_t>(folds), 0);
        std::vector<std::vector<Index>> members(static_cast<std::size_t>(folds));
        for (Index r = 0; r < n; ++r) {
            const auto k = static_cast<std::size_t>(assignment[static_cast<std::size_t>(r)]);
            const VectorXd d = x.row(r).transpose() - center;
            sums[k] += d;
            cross[k].selfadjointView<Eigen::Lower>().rankUpdate(d);
            ++counts[k];
            if (keep_rows) members[k].push_back(r);
        }
        VectorXd total_sum = VectorXd::Zero(p);
        MatrixXd total_cross = MatrixXd::Zero(p, p);
        for (int k = 0; k < folds; ++k) {
            auto& c = cross[static_cast<std::size_t>(k)];
            c.triangularView<Eigen::StrictlyUpper>() = c.transpose();
            total_sum += sums[static_cast<std::size_t>(k)];
            total_cross += c;
        }
        std::vector<FoldStats> out(static_cast<std::size_t>(folds));
        for (int k = 0; k < folds; ++k) {
            const auto ks = static_cast<std::size_t>(k);
            auto& fs = out[ks];
            const double nk = static_cast<double>(counts[ks]);
            const double nt = static_cast<double>(n) - nk;
            if (counts[ks] == 0 || nt < 2.0) continue;
            const VectorXd train_sum = total_sum - sums[ks];
            const VectorXd mu = train_sum / nt;  // relative to center
            fs.train_mean = mu + center;
            fs.train_cov = (total_cross - cross[ks] - nt * mu * mu.transpose()) / (nt - 1.0);
            fs.heldout_scatter = cross[ks] - sums[ks] * mu.transpose() - mu * sums[ks].transpose() +
                                 nk * mu * mu.transpose();
            fs.heldout_rows = counts[ks];
            if (keep_rows) fs.heldout = x(members[ks], Eigen::all);
        }
        return out;
    }

    /// Selects the ridge parameter for one pattern by K-fold cross-validation.
    static double select_ridge(const std::vector<FoldStats>& folds, const Pattern& pat, const RemConfig& cfg) {
        const auto& grid = cfg.ridge_grid;
        std::vector<double> error(grid.size(), 0.0);
        bool any = false;
        for (const auto& fs : folds) {
            if (fs.heldout_rows == 0) continue;
            any = true;
            const MatrixXd a = fs.train_cov(pat.avail, pat.avail);
            const MatrixXd am = fs.train_cov(pat.avail, pat.miss);
            const ScaledEigen eig = scaled_eigen(a);
            const auto& s = eig.inv_sqrt_scale;
            const MatrixXd w = eig.vectors.transpose() * (s.asDiagonal() * am);
            if (cfg.cv_error_norm == 2) {
                const MatrixXd s_aa = fs.heldout_scatter(pat.avail, pat.avail);
                const MatrixXd s_am = fs.heldout_scatter(pat.avail, pat.miss);
                const double s_mm = fs.heldout_scatter(pat.miss, pat.miss).trace();
                const MatrixXd pm = eig.vectors.transpose() * (s.asDiagonal() * s_am);
                const MatrixXd q = eig.vectors.transpose() * (s.asDiagonal() * s_aa * s.asDiagonal()) * eig.vectors;
                const MatrixXd g = w * w.transpose();
                const VectorXd wp = w.cwiseProduct(pm).rowwise().sum();
                const MatrixXd qg = q.cwiseProduct(g);
                for (std::size_t t = 0; t < grid.size(); ++t) {
                    VectorXd e(eig.values.size());
                    bool ok = true;
                    for (Index j = 0; j < e.size(); ++j) {
                        const double denom = eig.values(j) + grid[t];
                        if (!(denom > 0.0)) ok = false;
                        e(j) = ok ? 1.0 / denom : 0.0;
                    }
                    if (!ok) {
                        error[t] = std::numeric_limits<double>::infinity();
                        continue;
                    }
                    error[t] += s_mm - 2.0 * e.dot(wp) + e.dot(qg * e);
                }
            } else {
                const VectorXd mu_a = fs.train_mean(pat.avail);
                const VectorXd mu_m = fs.train_mean(pat.miss);
                const MatrixXd xa = fs.heldout(Eigen::all, pat.avail).rowwise() - mu_a.transpose();
                const MatrixXd xm = fs.heldout(Eigen::all, pat.miss).rowwise() - mu_m.transpose();
                for (std::size_t t = 0; t < grid.size(); ++t) {
                    MatrixXd b;
                    try {
                        b = ridge_coefficients(eig, am, grid[t]);
                    } catch (const Error&) {
                        error[t] = std::numeric_limits<double>::infinity();
                        continue;
                    }
                    const MatrixXd resid = xm - xa * b;
                    error[t] += resid.array().abs().pow(cfg.cv_error_norm).sum();
                }
            }
        }
        if (!any) return grid.back();
        // Strongest regularization first; ties keep the larger value.
        std::size_t best = grid.size() - 1;
        for (std::size_t t = grid.size(); t-- > 0;)
            if (error[t] < error[best]) best = t;
        return grid[best];
    }

    struct Regression {
        MatrixXd coef;      // |a| x |m|
        MatrixXd residual;  // |m| x |m| conditional covariance
    };

    static Regression regress(const VectorXd& /*mean*/, const MatrixXd& cov, const std::vector<FoldStats>& folds,
                              const Pattern& pat, const RemConfig& cfg) {
        Regression out;
        const MatrixXd smm = cov(pat.miss, pat.miss);
        if (pat.avail.empty()) {
            out.coef = MatrixXd::Zero(0, static_cast<Index>(pat.miss.size()));
            out.residual = smm;
            return out;
        }
        const MatrixXd saa = cov(pat.avail, pat.avail);
        const MatrixXd sam = cov(pat.avail, pat.miss);
        if (cfg.regression == RemRegression::TruncatedTls) {
            out.coef = ttls_coefficients(cov, pat.avail, pat.miss, cfg.ttls_truncation);
        } else {
            const double h = cfg.ridge ? *cfg.ridge : select_ridge(folds, pat, cfg);
            out.coef = ridge_coefficients(scaled_eigen(saa), sam, h);
        }
        const MatrixXd cross = out.coef.transpose() * sam;
        out.residual = smm - cross - cross.transpose() + out.coef.transpose() * saa * out.coef;
        out.residual = 0.5 * (out.residual + out.residual.transpose());
        return out;
    }

    static std::vector<int> assignment(std::size_t n, const RemConfig& cfg, int& folds) {
        if (!cfg.cv_assignment.empty()) {
            require(cfg.cv_assignment.size() == n, "REM: cv_assignment length differs from row count");
            folds = *std::max_element(cfg.cv_assignment.begin(), cfg.cv_assignment.end()) + 1;
            require(*std::min_element(cfg.cv_assignment.begin(), cfg.cv_assignment.end()) >= 0,
                    "REM: negative fold id");
            return cfg.cv_assignment;
        }
        folds = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(cfg.cv_folds), std::max<std::size_t>(n, 1)));
        std::vector<int> out(n);
        for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<int>(i * static_cast<std::size_t>(folds) / n);
        return out;
    }

    static void moments(const Matrix& x, const MatrixXd& conditional, VectorXd& mean, MatrixXd& cov) {
        const double n = static_cast<double>(x.rows());
        mean = x.colwise().mean().transpose();
        const MatrixXd centered = x.rowwise() - mean.transpose();
        cov = MatrixXd(centered.transpose() * centered);
        if (conditional.size()) cov += conditional;
        cov /= std::max(n - 1.0, 1.0);
    }
};

RemResult rem_fit(const Dataset& data, const RemConfig& config) {
    config.validate();
    const Index n = data.features.rows();
    const Index p = data.features.cols();
    require(n > 0, "REM: empty dataset");

    RemResult result;
    result.diagnostics.missing_per_feature.resize(static_cast<std::size_t>(p));
    for (Index c = 0; c < p; ++c) {
        const auto count = static_cast<std::size_t>(data.missing.col(c).count());
        result.diagnostics.missing_per_feature[static_cast<std::size_t>(c)] = count;
        if (count == static_cast<std::size_t>(n))
            throw Error("REM: feature " + std::to_string(c) + " has no observed values");
    }

    Dataset completed = mean_impute(data);
    Matrix& x = completed.features;
    const auto patterns = group_patterns(data.missing);

    int folds = 0;
    const auto assign = RemEngine::assignment(static_cast<std::size_t>(n), config, folds);
    const bool keep_rows = config.cv_error_norm != 2;
    const bool select = !config.ridge && config.regression == RemRegression::MultipleRidge;

    VectorXd mean;
    MatrixXd cov;
    RemEngine::moments(x, MatrixXd(), mean, cov);

    int iterations = 0;
    double change = 0.0;
    bool converged = patterns.empty();
    for (int it = 1; it <= config.max_iters && !patterns.empty(); ++it) {
        std::vector<RemModel::FoldStats> fstats;
        if (select) fstats = RemEngine::fold_stats(x, assign, folds, keep_rows);

        std::vector<RemEngine::Regression> regs(patterns.size());
        parallel_for(patterns.size(), config.workers, [&](std::size_t i) {
            regs[i] = RemEngine::regress(mean, cov, fstats, patterns[i], config);
        });

        double diff2 = 0.0;
        double norm2 = 0.0;
        MatrixXd conditional = MatrixXd::Zero(p, p);
        for (std::size_t i = 0; i < patterns.size(); ++i) {
            const auto& pat = patterns[i];
            const auto& reg = regs[i];
            const VectorXd mu_a = mean(pat.avail);
            const VectorXd mu_m = mean(pat.miss);
            for (Index r : pat.rows) {
                VectorXd pred = mu_m;
                if (!pat.avail.empty()) pred += reg.coef.transpose() * (x(r, pat.avail).transpose() - mu_a);
                for (std::size_t j = 0; j < pat.miss.size(); ++j) {
                    const Index c = pat.miss[j];
                    const double v = pred(static_cast<Index>(j));
                    diff2 += (v - x(r, c)) * (v - x(r, c));
                    norm2 += v * v;
                    x(r, c) = v;
                }
            }
            conditional(pat.miss, pat.miss) += static_cast<double>(pat.rows.size()) * reg.residual;
        }
        change = norm2 > 0.0 ? std::sqrt(diff2 / norm2) : std::sqrt(diff2);
        iterations = it;
        RemEngine::moments(x, conditional, mean, cov);
        if (change < config.stagnation_tol) {
            converged = true;
            break;
        }
    }

    result.diagnostics.iterations = iterations;
    result.diagnostics.final_change = change;
    result.diagnostics.converged = converged;

    // Observed cells come straight from the input.
    for (Index r = 0; r < n; ++r)
        for (Index c = 0; c < p; ++c)
            if (!data.missing(r, c)) x(r, c) = data.features(r, c);

    result.model.mean_ = mean;
    result.model.cov_ = cov;
    result.model.config_ = config;
    if (select) result.model.folds_ = RemEngine::fold_stats(x, assign, folds, keep_rows);
    result.completed = std::move(completed);
    return result;
}

Dataset RemModel::impute(const Dataset& data, int workers) const {
    require(static_cast<Index>(data.cols()) == mean_.size(),
            "REM model has " + std::to_string(mean_.size()) + " features, data has " + std::to_string(data.cols()));
    Dataset out = data;
    const auto patterns = group_patterns(data.missing);
    std::vector<RemEngine::Regression> regs(patterns.size());
    parallel_for(patterns.size(), workers, [&](std::size_t i) {
        regs[i] = RemEngine::regress(mean_, cov_, folds_, patterns[i], config_);
    });
    for (std::size_t i = 0; i < patterns.size(); ++i) {
        const auto& pat = patterns[i];
        const VectorXd mu_a = mean_(pat.avail);
        const VectorXd mu_m = mean_(pat.miss);
        for (Index r : pat.rows) {
            VectorXd pred = mu_m;
            if (!pat.avail.empty()) pred += regs[i].coef.transpose() * (out.features(r, pat.avail).transpose() - mu_a);
            out.features(r, pat.miss) = pred.transpose();
        }
    }
    out.missing.setConstant(false);
    return out;
}

Dataset mean_impute(const Dataset& data) {
    Dataset out = data;
    for (Index c = 0; c < out.features.cols(); ++c) {
        double sum = 0.0;
        Index count = 0;
        for (Index r = 0; r < out.features.rows(); ++r) {
            if (data.missing(r, c)) continue;
            sum += data.features(r, c);
            ++count;
        }
        if (count == 0 && data.missing.col(c).any())
            throw Error("mean imputation: feature " + std::to_string(c) + " has no observed values");
        const double mean = count ? sum / static_cast<double>(count) : 0.0;
        for (Index r = 0; r < out.features.rows(); ++r)
            if (data.missing(r, c)) out.features(r, c) = mean;
    }
    out.missing.setConstant(false);
    return out;
}

}  // namespace mlsvm
