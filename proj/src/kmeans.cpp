#include "mlsvm/kmeans.hpp"

#include <algorithm>
#include <limits>
#include <random>

#include "mlsvm/error.hpp"

namespace mlsvm {

namespace {

double sq_dist(const Matrix& a, Eigen::Index i, const Matrix& b, Eigen::Index j) {
    return (a.row(i) - b.row(j)).squaredNorm();
}

Matrix seed_plus_plus(const Matrix& x, int k, std::mt19937_64& rng) {
    const Eigen::Index m = x.rows();
    Matrix c(k, x.cols());
    std::uniform_int_distribution<Eigen::Index> pick(0, m - 1);
    c.row(0) = x.row(pick(rng));
    std::vector<double> d2(static_cast<std::size_t>(m), std::numeric_limits<double>::infinity());
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int j = 1; j < k; ++j) {
        double total = 0.0;
        for (Eigen::Index i = 0; i < m; ++i) {
            d2[static_cast<std::size_t>(i)] = std::min(d2[static_cast<std::size_t>(i)], sq_dist(x, i, c, j - 1));
            total += d2[static_cast<std::size_t>(i)];
        }
        Eigen::Index chosen = m - 1;
        if (total > 0.0) {
            double target = unit(rng) * total;
            for (Eigen::Index i = 0; i < m; ++i) {
                target -= d2[static_cast<std::size_t>(i)];
                if (target <= 0.0 && d2[static_cast<std::size_t>(i)] > 0.0) {
                    chosen = i;
                    break;
                }
            }
        } else {
            chosen = pick(rng);
        }
        c.row(j) = x.row(chosen);
    }
    return c;
}

KMeansResult lloyd(const Matrix& x, Matrix centroids, int max_iterations) {
    const Eigen::Index m = x.rows();
    const auto k = centroids.rows();
    KMeansResult r;
    r.assignment.assign(static_cast<std::size_t>(m), -1);
    std::vector<double> best(static_cast<std::size_t>(m));
    for (int it = 0; it < max_iterations; ++it) {
        bool changed = false;
        for (Eigen::Index i = 0; i < m; ++i) {
            int arg = 0;
            double bd = std::numeric_limits<double>::infinity();
            for (Eigen::Index j = 0; j < k; ++j) {
                const double d = sq_dist(x, i, centroids, j);
                if (d < bd) {
                    bd = d;
                    arg = static_cast<int>(j);
                }
            }
            best[static_cast<std::size_t>(i)] = bd;
            if (r.assignment[static_cast<std::size_t>(i)] != arg) {
                r.assignment[static_cast<std::size_t>(i)] = arg;
                changed = true;
            }
        }
        if (!changed && it > 0) break;
        Matrix sums = Matrix::Zero(k, x.cols());
        std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
        for (Eigen::Index i = 0; i < m; ++i) {
            sums.row(r.assignment[static_cast<std::size_t>(i)]) += x.row(i);
            ++counts[static_cast<std::size_t>(r.assignment[static_cast<std::size_t>(i)])];
        }
        for (Eigen::Index j = 0; j < k; ++j) {
            if (counts[static_cast<std::size_t>(j)] > 0) {
                centroids.row(j) = sums.row(j) / static_cast<double>(counts[static_cast<std::size_t>(j)]);
                continue;
            }
            const auto far = std::max_element(best.begin(), best.end()) - best.begin();
            centroids.row(j) = x.row(far);
            best[static_cast<std::size_t>(far)] = 0.0;
            r.assignment[static_cast<std::size_t>(far)] = static_cast<int>(j);
        }
    }
    r.inertia = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
        const int a = r.assignment[static_cast<std::size_t>(i)];
        r.inertia += sq_dist(x, i, centroids, a);
    }
    r.centroids = std::move(centroids);
    return r;
}

}  // namespace

KMeansResult kmeans(const Dataset& data, std::span<const RowIndex> rows, int k, const KMeansConfig& config) {
    require(!rows.empty(), "k-means: no rows");
    require(k >= 1, "k-means: k must be positive");
    require(config.restarts >= 1 && config.max_iterations >= 1, "k-means: restarts and iterations must be positive");
    const int kk = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(k), rows.size()));
    Matrix x(static_cast<Eigen::Index>(rows.size()), data.features.cols());
    for (std::size_t i = 0; i < rows.size(); ++i)
        x.row(static_cast<Eigen::Index>(i)) = data.features.row(static_cast<Eigen::Index>(rows[i]));

    std::mt19937_64 rng(config.seed);
    KMeansResult best;
    best.inertia = std::numeric_limits<double>::infinity();
    for (int r = 0; r < config.restarts; ++r) {
        KMeansResult cur = lloyd(x, seed_plus_plus(x, kk, rng), config.max_iterations);
        if (cur.inertia < best.inertia) best = std::move(cur);
    }
    return best;
}

}  // namespace mlsvm
