#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mlsvm/dataset.hpp"
#include "mlsvm/svm.hpp"

namespace mlsvm {

enum class UdObjective { GMean, Accuracy };

struct UdConfig {
    int stage1_runs = 9;
    int stage2_runs = 5;
    double c_min = 0.01;
    double c_max = 100.0;
    double gamma_min = 0.005;
    double gamma_max = 3.000078;
    int internal_cv_folds = 5;
    UdObjective objective = UdObjective::GMean;
    std::uint64_t seed = 3;
    int workers = 1;

    void validate() const;
};

/// Point of a 2-factor design in the unit square.
struct DesignPoint {
    double u;
    double v;
};

/// Centred lattice points ((i - 0.5) / n, (j - 0.5) / n). n = 9 and n = 5 use
/// the tabulated U9(9^2) and U5(5^2) patterns; other sizes use a good lattice
/// point construction.
std::vector<DesignPoint> uniform_design(int runs);

struct UdCandidate {
    double c = 0.0;
    double gamma = 0.0;
    ClassWeights weights;
    double score = 0.0;
    int stage = 1;
    /// True when the score was reused from an identical earlier candidate.
    bool reused = false;
};

struct UdOutcome {
    double c = 0.0;
    double gamma = 0.0;
    /// Penalties of the winner on the full search rows.
    ClassWeights weights;
    double score = 0.0;
    std::vector<UdCandidate> candidates;
    /// Number of distinct candidates that were trained and scored.
    std::size_t evaluations = 0;
    std::vector<std::string> warnings;
};

/// Penalties for one training subset: uniform C, or C+ and C- scaled
/// inversely to the class sizes of the subset.
ClassWeights penalties(double c, bool weighted, std::size_t n_plus, std::size_t n_minus);

/// Pooled internal stratified CV score of one (C, gamma) pair on `rows`.
double cv_score(const BinaryView& view, std::span<const RowIndex> rows, bool weighted, double c, double gamma,
                const UdConfig& config, const SolverConfig& solver, std::vector<std::string>* warnings = nullptr);

/// Two-stage nested uniform-design search over log10(C) x log10(gamma).
/// `center` = (C, gamma) moves the stage-1 window onto that point.
/// Ties go to the smaller C, then the smaller gamma.
UdOutcome ud_search(const BinaryView& view, std::span<const RowIndex> rows, bool weighted, const UdConfig& config,
                    std::optional<std::pair<double, double>> center = std::nullopt, const SolverConfig& solver = {});

}  // namespace mlsvm
