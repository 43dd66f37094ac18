#include "mlsvm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "mlsvm/error.hpp"

namespace mlsvm {

void ConfusionMatrix::add(int truth, int predicted) {
    if (truth > 0)
        ++(predicted > 0 ? tp : fn);
    else
        ++(predicted > 0 ? fp : tn);
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
}

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> predicted) {
    require(truth.size() == predicted.size(), "confusion: label lists differ in length");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < truth.size(); ++i) cm.add(truth[i], predicted[i]);
    return cm;
}

Metrics compute_metrics(const ConfusionMatrix& cm) {
    Metrics m;
    const auto ratio = [](std::size_t num, std::size_t den, bool& undefined) {
        undefined = den == 0;
        return undefined ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
    };
    m.sn = ratio(cm.tp, cm.tp + cm.fn, m.sn_undefined);
    m.sp = ratio(cm.tn, cm.tn + cm.fp, m.sp_undefined);
    m.acc = ratio(cm.tp + cm.tn, cm.total(), m.acc_undefined);
    m.gmean = std::sqrt(m.sn * m.sp);
    return m;
}

std::vector<int> stratified_folds(std::span<const int> labels, int k, std::uint64_t seed,
                                  std::vector<std::string>* warnings) {
    require(k >= 2, "folds must be at least 2");
    require(!labels.empty(), "stratified_folds: no labels");
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
    std::mt19937_64 rng(seed);
    std::vector<int> fold(labels.size(), 0);
    std::size_t deal = 0;
    for (auto& [label, idx] : by_class) {
        if (idx.size() < static_cast<std::size_t>(k) && warnings)
            warnings->push_back("class " + std::to_string(label) + " has " + std::to_string(idx.size()) +
                                " rows, fewer than " + std::to_string(k) + " folds");
        std::shuffle(idx.begin(), idx.end(), rng);
        for (std::size_t i : idx) fold[i] = static_cast<int>(deal++ % static_cast<std::size_t>(k));
    }
    return fold;
}

}  // namespace mlsvm
