#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>

namespace oracle {

Eigen::MatrixXd gram(const Matrix& x, const std::function<double(const double*, const double*, Eigen::Index)>& k) {
    const Eigen::Index n = x.rows();
    Eigen::MatrixXd g(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) g(i, j) = k(x.row(i).data(), x.row(j).data(), x.cols());
    return g;
}

Eigen::MatrixXd rbf_gram(const Matrix& x, double gamma) {
    return gram(x, [gamma](const double* a, const double* b, Eigen::Index d) {
        double s = 0.0;
        for (Eigen::Index t = 0; t < d; ++t) s += (a[t] - b[t]) * (a[t] - b[t]);
        return std::exp(-gamma * s);
    });
}

Eigen::MatrixXd linear_gram(const Matrix& x) {
    return gram(x, [](const double* a, const double* b, Eigen::Index d) {
        double s = 0.0;
        for (Eigen::Index t = 0; t < d; ++t) s += a[t] * b[t];
        return s;
    });
}

namespace {

Eigen::VectorXd project(const Eigen::VectorXd& v, const Eigen::VectorXd& y, const Eigen::VectorXd& u) {
    const auto at = [&](double lambda) {
        return (v - lambda * y).cwiseMax(0.0).cwiseMin(u).eval();
    };
    // y'a(lambda) is nonincreasing in lambda.
    double lo = -1.0;
    double hi = 1.0;
    while (y.dot(at(lo)) < 0.0) lo *= 2.0;
    while (y.dot(at(hi)) > 0.0) hi *= 2.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        if (y.dot(at(mid)) > 0.0)
            lo = mid;
        else
            hi = mid;
    }
    return at(0.5 * (lo + hi));
}

}  // namespace

double dual_value(const Eigen::MatrixXd& kernel, const std::vector<int>& y, const std::vector<double>& alpha) {
    double s = 0.0;
    double q = 0.0;
    for (std::size_t i = 0; i < alpha.size(); ++i) {
        s += alpha[i];
        for (std::size_t j = 0; j < alpha.size(); ++j)
            q += alpha[i] * alpha[j] * y[i] * y[j] * kernel(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
    return s - 0.5 * q;
}

QpSolution solve_dual_qp(const Eigen::MatrixXd& kernel, const std::vector<int>& y, const std::vector<double>& upper,
                         int iterations) {
    const Eigen::Index n = kernel.rows();
    Eigen::VectorXd yv(n);
    Eigen::VectorXd u(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        yv(i) = y[static_cast<std::size_t>(i)];
        u(i) = upper[static_cast<std::size_t>(i)];
    }
    const Eigen::MatrixXd q = yv.asDiagonal() * kernel * yv.asDiagonal();
    const double lipschitz = std::max(1e-12, Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(q).eigenvalues().maxCoeff());
    const double step = 1.0 / lipschitz;
    Eigen::VectorXd a = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd z = a;
    double t = 1.0;
    for (int it = 0; it < iterations; ++it) {
        if (it % 64 == 63) {
            const Eigen::VectorXd g = Eigen::VectorXd::Ones(n) - q * a;
            if ((project(a + step * g, yv, u) - a).norm() < 1e-13 * std::max(1.0, a.norm())) break;
        }
        const Eigen::VectorXd grad = Eigen::VectorXd::Ones(n) - q * z;
        const Eigen::VectorXd next = project(z + step * grad, yv, u);
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        z = next + ((t - 1.0) / t_next) * (next - a);
        // Restart when the objective goes down.
        const double f_next = next.sum() - 0.5 * next.dot(q * next);
        const double f_prev = a.sum() - 0.5 * a.dot(q * a);
        if (f_next < f_prev) {
            if (t == 1.0) break;
            z = a;
            t = 1.0;
            continue;
        }
        a = next;
        t = t_next;
    }
    QpSolution s;
    s.alpha.assign(a.data(), a.data() + n);
    s.objective = dual_value(kernel, y, s.alpha);
    return s;
}

double kkt_violation(const Eigen::MatrixXd& kernel, const std::vector<int>& y, const std::vector<double>& upper,
                     const std::vector<double>& alpha, double bias) {
    double worst = 0.0;
    const std::size_t n = y.size();
    for (std::size_t i = 0; i < n; ++i) {
        double f = bias;
        for (std::size_t j = 0; j < n; ++j)
            f += alpha[j] * y[j] * kernel(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
        const double m = y[i] * f;
        const double eps = 1e-12 * std::max(1.0, upper[i]);
        if (alpha[i] <= eps)
            worst = std::max(worst, 1.0 - m);
        else if (alpha[i] >= upper[i] - eps)
            worst = std::max(worst, m - 1.0);
        else
            worst = std::max(worst, std::abs(m - 1.0));
    }
    return worst;
}

std::vector<std::vector<mlsvm::RowIndex>> brute_knn(const mlsvm::Dataset& data, const std::vector<mlsvm::RowIndex>& rows,
                                                    int k) {
    std::vector<std::vector<mlsvm::RowIndex>> out(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::vector<std::pair<double, mlsvm::RowIndex>> d;
        for (std::size_t j = 0; j < rows.size(); ++j) {
            if (j == i) continue;
            const double dist = (data.features.row(static_cast<Eigen::Index>(rows[i])) -
                                 data.features.row(static_cast<Eigen::Index>(rows[j])))
                                    .squaredNorm();
            d.emplace_back(dist, rows[j]);
        }
        std::sort(d.begin(), d.end());
        for (int t = 0; t < k && t < static_cast<int>(d.size()); ++t) out[i].push_back(d[static_cast<std::size_t>(t)].second);
    }
    return out;
}

bool is_dominating(const mlsvm::KnnGraph& g, const std::vector<mlsvm::NodeId>& selected) {
    std::vector<char> in(g.size(), 0);
    for (auto v : selected) in[v] = 1;
    for (std::size_t v = 0; v < g.size(); ++v) {
        if (in[v]) continue;
        bool covered = false;
        for (auto u : g.adjacency[v]) covered = covered || in[u];
        if (!covered) return false;
    }
    return true;
}

bool is_independent(const mlsvm::KnnGraph& g, const std::vector<mlsvm::NodeId>& set) {
    std::vector<char> in(g.size(), 0);
    for (auto v : set) in[v] = 1;
    for (auto v : set)
        for (auto u : g.adjacency[v])
            if (in[u]) return false;
    return true;
}

}  // namespace oracle
