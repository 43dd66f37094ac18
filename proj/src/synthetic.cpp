#include "mlsvm/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/Cholesky>

#include "mlsvm/error.hpp"

namespace mlsvm {

namespace {

std::vector<int> shuffled_labels(std::size_t rows, std::size_t ones, std::mt19937_64& rng) {
    std::vector<int> y(rows, 0);
    std::fill(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(ones), 1);
    std::shuffle(y.begin(), y.end(), rng);
    return y;
}

}  // namespace

Dataset make_twonorm(std::size_t rows, std::uint64_t seed, std::size_t dims) {
    require(rows >= 2 && dims >= 1, "twonorm: need at least 2 rows and 1 feature");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<int> y = shuffled_labels(rows, rows / 2, rng);
    const double a = 2.0 / std::sqrt(static_cast<double>(dims));
    Matrix x(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dims));
    for (Eigen::Index r = 0; r < x.rows(); ++r)
        for (Eigen::Index c = 0; c < x.cols(); ++c)
            x(r, c) = normal(rng) + (y[static_cast<std::size_t>(r)] == 1 ? a : -a);
    return Dataset::from_matrix(std::move(x), std::move(y));
}

Dataset make_imbalanced(std::size_t rows, double minority_fraction, std::size_t dims, double separation,
                        std::uint64_t seed) {
    require(minority_fraction > 0.0 && minority_fraction < 1.0, "minority fraction must lie in (0, 1)");
    require(dims >= 1, "need at least one feature");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto ones = static_cast<std::size_t>(std::llround(minority_fraction * static_cast<double>(rows)));
    require(ones >= 1 && ones < rows, "both classes must be nonempty");
    std::vector<int> y = shuffled_labels(rows, ones, rng);
    const double shift = separation / std::sqrt(static_cast<double>(dims));
    Matrix x(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dims));
    for (Eigen::Index r = 0; r < x.rows(); ++r)
        for (Eigen::Index c = 0; c < x.cols(); ++c)
            x(r, c) = normal(rng) + (y[static_cast<std::size_t>(r)] == 1 ? shift : 0.0);
    return Dataset::from_matrix(std::move(x), std::move(y));
}

Dataset make_correlated(std::size_t rows, std::size_t dims, double rho, std::uint64_t seed) {
    require(dims >= 1 && rows >= 1, "need at least one row and one feature");
    require(rho > -1.0 / static_cast<double>(std::max<std::size_t>(dims - 1, 1)) && rho < 1.0,
            "correlation must keep the covariance positive definite");
    const auto d = static_cast<Eigen::Index>(dims);
    Eigen::MatrixXd cov = Eigen::MatrixXd::Constant(d, d, rho);
    cov.diagonal().setOnes();
    const Eigen::MatrixXd l = cov.llt().matrixL();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix x(static_cast<Eigen::Index>(rows), d);
    std::vector<int> y(rows);
    Eigen::VectorXd z(d);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        for (Eigen::Index c = 0; c < d; ++c) z(c) = normal(rng);
        x.row(r) = (l * z).transpose();
        y[static_cast<std::size_t>(r)] = x.row(r).sum() > 0.0 ? 1 : 0;
    }
    return Dataset::from_matrix(std::move(x), std::move(y));
}

Dataset make_blobs(std::size_t rows, std::size_t classes, std::size_t dims, double spread, std::uint64_t seed) {
    require(classes >= 2 && rows >= classes && dims >= 1, "blobs: need 2+ classes, a row per class, 1+ features");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(-spread, spread);
    Matrix centres(static_cast<Eigen::Index>(classes), static_cast<Eigen::Index>(dims));
    for (Eigen::Index k = 0; k < centres.rows(); ++k)
        for (Eigen::Index c = 0; c < centres.cols(); ++c) centres(k, c) = uniform(rng);
    std::vector<int> y(rows);
    for (std::size_t r = 0; r < rows; ++r) y[r] = static_cast<int>(r % classes);
    std::shuffle(y.begin(), y.end(), rng);
    Matrix x(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dims));
    for (Eigen::Index r = 0; r < x.rows(); ++r)
        for (Eigen::Index c = 0; c < x.cols(); ++c) x(r, c) = centres(y[static_cast<std::size_t>(r)], c) + normal(rng);
    return Dataset::from_matrix(std::move(x), std::move(y));
}

}  // namespace mlsvm
