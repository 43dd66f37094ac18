#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mlsvm {

/// Binary confusion counts with +1 as the positive class.
struct ConfusionMatrix {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::size_t tn = 0;

    std::size_t total() const { return tp + fp + fn + tn; }
    void add(int truth, int predicted);
    ConfusionMatrix& operator+=(const ConfusionMatrix& other);
};

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> predicted);

/// A metric whose denominator is zero is reported as 0 and flagged.
struct Metrics {
    double sn = 0.0;
    double sp = 0.0;
    double gmean = 0.0;
    double acc = 0.0;
    bool sn_undefined = false;
    bool sp_undefined = false;
    bool acc_undefined = false;

    bool degenerate() const { return sn_undefined || sp_undefined || acc_undefined; }
};

Metrics compute_metrics(const ConfusionMatrix& cm);

/// Fold id in [0, k) per label. Each class is shuffled with the seed and dealt
/// round-robin, the deal continuing from where the previous class stopped, so
/// both per-class and total fold sizes differ by at most one.
std::vector<int> stratified_folds(std::span<const int> labels, int k, std::uint64_t seed,
                                  std::vector<std::string>* warnings = nullptr);

}  // namespace mlsvm
