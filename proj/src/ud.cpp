#include "mlsvm/ud.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "mlsvm/error.hpp"
#include "mlsvm/metrics.hpp"
#include "mlsvm/parallel.hpp"

namespace mlsvm {

void UdConfig::validate() const {
    require(stage1_runs >= 1, "UD: stage1_runs must be at least 1");
    require(stage2_runs >= 0, "UD: stage2_runs must be nonnegative");
    require(c_min > 0.0 && c_min <= c_max, "UD: C range must be positive and nonempty");
    require(gamma_min > 0.0 && gamma_min <= gamma_max, "UD: gamma range must be positive and nonempty");
    require(internal_cv_folds >= 2, "UD: internal_cv_folds must be at least 2");
}

namespace {

constexpr std::array<int, 9> kU9 = {3, 7, 2, 6, 1, 5, 9, 4, 8};
constexpr std::array<int, 5> kU5 = {2, 5, 3, 1, 4};

double centred_discrepancy(const std::vector<DesignPoint>& pts) {
    const double n = static_cast<double>(pts.size());
    const auto a = [](double x) { return std::abs(x - 0.5); };
    double s1 = 0.0;
    double s2 = 0.0;
    for (const auto& p : pts) {
        s1 += (1.0 + 0.5 * a(p.u) - 0.5 * a(p.u) * a(p.u)) * (1.0 + 0.5 * a(p.v) - 0.5 * a(p.v) * a(p.v));
        for (const auto& q : pts)
            s2 += (1.0 + 0.5 * a(p.u) + 0.5 * a(q.u) - 0.5 * std::abs(p.u - q.u)) *
                  (1.0 + 0.5 * a(p.v) + 0.5 * a(q.v) - 0.5 * std::abs(p.v - q.v));
    }
    return (13.0 / 12.0) * (13.0 / 12.0) - 2.0 / n * s1 + s2 / (n * n);
}

std::vector<DesignPoint> from_columns(std::span<const int> second) {
    const double n = static_cast<double>(second.size());
    std::vector<DesignPoint> pts;
    for (std::size_t i = 0; i < second.size(); ++i)
        pts.push_back({(static_cast<double>(i) + 0.5) / n, (second[i] - 0.5) / n});
    return pts;
}

struct LogPoint {
    double lc;
    double lg;
};

bool same(const LogPoint& a, const LogPoint& b) {
    return std::abs(a.lc - b.lc) < 1e-12 && std::abs(a.lg - b.lg) < 1e-12;
}

bool better(const UdCandidate& a, const UdCandidate& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.c != b.c) return a.c < b.c;
    return a.gamma < b.gamma;
}

}  // namespace

std::vector<DesignPoint> uniform_design(int runs) {
    require(runs >= 1, "uniform design needs at least one run");
    if (runs == 9) return from_columns(kU9);
    if (runs == 5) return from_columns(kU5);
    if (runs == 1) return {{0.5, 0.5}};
    std::vector<DesignPoint> best;
    double best_cd = 0.0;
    for (int h = 1; h < runs; ++h) {
        if (std::gcd(h, runs) != 1) continue;
        std::vector<int> col(static_cast<std::size_t>(runs));
        for (int i = 1; i <= runs; ++i) col[static_cast<std::size_t>(i - 1)] = (i * h - 1) % runs + 1;
        auto pts = from_columns(col);
        const double cd = centred_discrepancy(pts);
        if (best.empty() || cd < best_cd - 1e-15) {
            best = std::move(pts);
            best_cd = cd;
        }
    }
    return best;
}

ClassWeights penalties(double c, bool weighted, std::size_t n_plus, std::size_t n_minus) {
    return weighted ? ClassWeights::inverse_frequency(c, n_plus, n_minus) : ClassWeights::uniform(c);
}

double cv_score(const BinaryView& view, std::span<const RowIndex> rows, bool weighted, double c, double gamma,
                const UdConfig& config, const SolverConfig& solver, std::vector<std::string>* warnings) {
    const std::vector<int> y = view.signs(rows);
    const std::size_t n_plus = view.count_positive(rows);
    const std::size_t n_minus = rows.size() - n_plus;
    require(n_plus > 0 && n_minus > 0, "UD: rows contain a single class");
    const int k = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(config.internal_cv_folds),
                                                         std::min(n_plus, n_minus)));
    const Dataset& data = *view.base;
    const auto points_of = [&](const std::vector<RowIndex>& idx) {
        Matrix m(static_cast<Eigen::Index>(idx.size()), data.features.cols());
        for (std::size_t i = 0; i < idx.size(); ++i)
            m.row(static_cast<Eigen::Index>(i)) = data.features.row(static_cast<Eigen::Index>(idx[i]));
        return m;
    };

    if (warnings && k < config.internal_cv_folds && k >= 2)
        warnings->push_back("UD: internal CV reduced from " + std::to_string(config.internal_cv_folds) + " to " +
                            std::to_string(k) + " folds by the smallest class");
    ConfusionMatrix cm;
    if (k < 2) {
        if (warnings) warnings->push_back("UD: a class has one row; scoring on the training rows");
        std::vector<RowIndex> all(rows.begin(), rows.end());
        const SvmModel model =
            train_svm(view, penalties(c, weighted, n_plus, n_minus), KernelParams{gamma}, solver, all);
        cm += confusion(y, model.predict(points_of(all)).labels);
    } else {
        const std::vector<int> fold = stratified_folds(y, k, config.seed);
        for (int f = 0; f < k; ++f) {
            std::vector<RowIndex> train;
            std::vector<RowIndex> test;
            std::vector<int> test_y;
            std::size_t train_plus = 0;
            for (std::size_t i = 0; i < rows.size(); ++i) {
                if (fold[i] == f) {
                    test.push_back(rows[i]);
                    test_y.push_back(y[i]);
                } else {
                    train.push_back(rows[i]);
                    train_plus += y[i] > 0;
                }
            }
            const SvmModel model = train_svm(view, penalties(c, weighted, train_plus, train.size() - train_plus),
                                             KernelParams{gamma}, solver, train);
            cm += confusion(test_y, model.predict(points_of(test)).labels);
        }
    }
    const Metrics m = compute_metrics(cm);
    return config.objective == UdObjective::GMean ? m.gmean : m.acc;
}

UdOutcome ud_search(const BinaryView& view, std::span<const RowIndex> rows, bool weighted, const UdConfig& config,
                    std::optional<std::pair<double, double>> center, const SolverConfig& solver) {
    config.validate();
    require(view.base != nullptr, "UD: view has no dataset");
    const std::size_t n_plus = view.count_positive(rows);
    require(n_plus > 0 && n_plus < rows.size(), "UD: rows contain a single class");

    const double lc0 = std::log10(config.c_min);
    const double lc1 = std::log10(config.c_max);
    const double lg0 = std::log10(config.gamma_min);
    const double lg1 = std::log10(config.gamma_max);
    const double wc = lc1 - lc0;
    const double wg = lg1 - lg0;
    double oc = lc0;
    double og = lg0;
    if (center) {
        require(center->first > 0.0 && center->second > 0.0, "UD: center must be positive");
        oc = std::clamp(std::log10(center->first), lc0, lc1) - 0.5 * wc;
        og = std::clamp(std::log10(center->second), lg0, lg1) - 0.5 * wg;
    }

    UdOutcome out;
    std::vector<LogPoint> evaluated;
    std::vector<double> evaluated_score;

    const auto run_stage = [&](const std::vector<LogPoint>& pts, int stage) {
        std::vector<std::size_t> fresh;
        std::vector<long> reuse(pts.size(), -1);
        std::vector<LogPoint> pending;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            for (std::size_t e = 0; e < evaluated.size(); ++e)
                if (same(pts[i], evaluated[e])) reuse[i] = static_cast<long>(e);
            for (std::size_t p = 0; p < pending.size() && reuse[i] < 0; ++p)
                if (same(pts[i], pending[p])) reuse[i] = static_cast<long>(evaluated.size() + p);
            if (reuse[i] < 0) {
                fresh.push_back(i);
                pending.push_back(pts[i]);
            }
        }
        std::vector<double> scores(fresh.size());
        std::vector<std::vector<std::string>> warn(fresh.size());
        parallel_for(fresh.size(), config.workers, [&](std::size_t f) {
            const auto& p = pts[fresh[f]];
            scores[f] = cv_score(view, rows, weighted, std::pow(10.0, p.lc), std::pow(10.0, p.lg), config, solver,
                                 &warn[f]);
        });
        for (auto& w : warn)
            for (auto& s : w)
                if (std::find(out.warnings.begin(), out.warnings.end(), s) == out.warnings.end())
                    out.warnings.push_back(s);
        std::size_t f = 0;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            UdCandidate cand;
            cand.c = std::pow(10.0, pts[i].lc);
            cand.gamma = std::pow(10.0, pts[i].lg);
            cand.stage = stage;
            cand.weights = penalties(cand.c, weighted, n_plus, rows.size() - n_plus);
            if (reuse[i] < 0) {
                cand.score = scores[f++];
                evaluated.push_back(pts[i]);
                evaluated_score.push_back(cand.score);
                ++out.evaluations;
            } else {
                cand.score = evaluated_score[static_cast<std::size_t>(reuse[i])];
                cand.reused = true;
            }
            out.candidates.push_back(cand);
        }
    };

    std::vector<LogPoint> stage1;
    for (const auto& d : uniform_design(config.stage1_runs))
        stage1.push_back({std::clamp(oc + d.u * wc, lc0, lc1), std::clamp(og + d.v * wg, lg0, lg1)});
    run_stage(stage1, 1);

    const auto winner = [&] {
        std::size_t best = 0;
        for (std::size_t i = 1; i < out.candidates.size(); ++i)
            if (better(out.candidates[i], out.candidates[best])) best = i;
        return best;
    };

    if (config.stage2_runs > 0) {
        const std::size_t w = winner();
        const LogPoint pw{std::log10(out.candidates[w].c), std::log10(out.candidates[w].gamma)};
        LogPoint centre = pw;
        for (const auto& e : evaluated)
            if (same(e, pw)) centre = e;
        const double hc = wc / config.stage1_runs;
        const double hg = wg / config.stage1_runs;
        std::vector<LogPoint> stage2;
        for (const auto& d : uniform_design(config.stage2_runs)) {
            LogPoint p{centre.lc + (2.0 * d.u - 1.0) * hc, centre.lg + (2.0 * d.v - 1.0) * hg};
            if (d.u == 0.5) p.lc = centre.lc;
            if (d.v == 0.5) p.lg = centre.lg;
            stage2.push_back({std::clamp(p.lc, lc0, lc1), std::clamp(p.lg, lg0, lg1)});
        }
        run_stage(stage2, 2);
    }

    const auto& best = out.candidates[winner()];
    out.c = best.c;
    out.gamma = best.gamma;
    out.weights = best.weights;
    out.score = best.score;
    return out;
}

}  // namespace mlsvm
