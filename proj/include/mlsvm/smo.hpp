#pragma once

#include <cstddef>
#include <list>
#include <span>
#include <vector>

#include "mlsvm/dataset.hpp"

namespace mlsvm {

struct SolverConfig {
    /// Stop when the maximal KKT violation drops below this.
    double kkt_tolerance = 1e-3;
    /// Kernel row cache budget; 0 disables caching.
    std::size_t cache_bytes = std::size_t{256} << 20;
    bool shrinking = true;
    /// Cap on SMO pair updates; 0 means max(10^7, 100 * problem size).
    std::size_t max_iterations = 0;

    void validate() const;
};

/// Kernel values of a training problem. Labels are applied by the solver.
class KernelSource {
public:
    virtual ~KernelSource() = default;
    virtual std::size_t size() const = 0;
    /// out[j] = K(i, j) for every j.
    virtual void row(std::size_t i, std::span<double> out) const = 0;
    virtual double diagonal(std::size_t i) const = 0;
};

/// exp(-gamma * ||x_i - x_j||^2) over the rows of a dense matrix.
class RbfKernelSource final : public KernelSource {
public:
    RbfKernelSource(Matrix points, double gamma);

    std::size_t size() const override { return static_cast<std::size_t>(points_.rows()); }
    void row(std::size_t i, std::span<double> out) const override;
    double diagonal(std::size_t) const override { return 1.0; }

private:
    Matrix points_;
    Vector norms_;
    double gamma_;
};

/// LRU cache of signed kernel rows Q_ij = y_i y_j K(i, j). The two most
/// recently returned rows stay valid until the next two requests.
class KernelRowCache {
public:
    KernelRowCache(const KernelSource& kernel, std::span<const int> y, std::size_t budget_bytes);

    std::span<const double> row(std::size_t i);
    std::size_t hits() const { return hits_; }
    std::size_t misses() const { return misses_; }

private:
    void fill(std::size_t i, std::vector<double>& buffer);

    const KernelSource& kernel_;
    std::vector<int> y_;
    std::size_t capacity_;
    std::vector<std::vector<double>> slots_;
    std::vector<std::size_t> slot_owner_;
    std::vector<long> slot_of_;
    std::list<std::size_t> lru_;  // slot ids, most recent first
    std::vector<std::list<std::size_t>::iterator> lru_pos_;
    std::vector<double> scratch_[2];
    int next_scratch_ = 0;
    std::size_t hits_ = 0;
    std::size_t misses_ = 0;
};

struct DualSolution {
    std::vector<double> alpha;
    double bias = 0.0;
    /// Sum(alpha) - 1/2 alpha' Q alpha.
    double objective = 0.0;
    std::size_t iterations = 0;
    bool iteration_limit = false;
};

/// Sequential minimal optimization for
///   max sum(a) - 1/2 a'Qa  s.t.  0 <= a_i <= upper_i,  y'a = 0
/// with maximal-violating-pair (second-order) working-set selection.
DualSolution solve_dual(const KernelSource& kernel, std::span<const int> y, std::span<const double> upper,
                        const SolverConfig& config);

}  // namespace mlsvm
