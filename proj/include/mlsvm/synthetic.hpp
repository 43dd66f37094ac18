#pragma once

#include <cstdint>

#include "mlsvm/dataset.hpp"

namespace mlsvm {

/// Two unit-covariance Gaussians centred at +a and -a on every axis, with
/// a = 2 / sqrt(dims). Labels 1 (plus side) and 0, half the rows each, shuffled.
Dataset make_twonorm(std::size_t rows, std::uint64_t seed, std::size_t dims = 20);

/// Majority class 0 at the origin and a minority class 1 whose mean lies at
/// distance `separation` along the diagonal; both unit covariance.
Dataset make_imbalanced(std::size_t rows, double minority_fraction, std::size_t dims, double separation,
                        std::uint64_t seed);

/// Equicorrelated Gaussian features (unit variance, correlation rho). The
/// label is 1 when the feature sum is positive, else 0.
Dataset make_correlated(std::size_t rows, std::size_t dims, double rho, std::uint64_t seed);

/// `classes` isotropic blobs with centres drawn uniformly from [-spread, spread]^dims; labels 0..classes-1.
Dataset make_blobs(std::size_t rows, std::size_t classes, std::size_t dims, double spread, std::uint64_t seed);

}  // namespace mlsvm
