#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "mlsvm/dataset.hpp"
#include "mlsvm/evaluation.hpp"
#include "mlsvm/knn.hpp"
#include "mlsvm/metrics.hpp"
#include "mlsvm/multilevel.hpp"
#include "mlsvm/rem.hpp"
#include "mlsvm/svm.hpp"
#include "mlsvm/synthetic.hpp"
#include "mlsvm/ud.hpp"
#include "oracles.hpp"

using namespace mlsvm;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

std::vector<RowIndex> iota(std::size_t n) {
    std::vector<RowIndex> r(n);
    std::iota(r.begin(), r.end(), RowIndex{0});
    return r;
}

std::vector<double> full_alpha(const SvmModel& m, std::size_t n) {
    std::vector<double> a(n, 0.0);
    for (std::size_t i = 0; i < m.size(); ++i) a[m.sv_rows[i]] = m.sv_alpha[i];
    return a;
}

Dataset random_instance(std::mt19937_64& rng, int n, int dims) {
    std::normal_distribution<double> g;
    Matrix x(n, dims);
    std::vector<int> y(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        y[static_cast<std::size_t>(i)] = i % 2 == 0 ? 1 : -1;
        for (int d = 0; d < dims; ++d) x(i, d) = g(rng) + (d == 0 ? 0.7 * y[static_cast<std::size_t>(i)] : 0.0);
    }
    return Dataset::from_matrix(x, y);
}

Outcome solver_vs_oracle() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> size(2, 12);
    std::uniform_real_distribution<double> lg(-1.0, 1.0);
    double worst_rel = 0.0;
    double worst_kkt = 0.0;
    for (int t = 0; t < 50; ++t) {
        const int n = size(rng);
        const Dataset d = random_instance(rng, n, 1 + t % 3);
        const BinaryView v = binary_view(d, 1);
        const double c = std::pow(10.0, lg(rng));
        const double gamma = std::pow(10.0, lg(rng));
        const ClassWeights w{c, c * std::pow(10.0, 0.5 * lg(rng))};
        const SvmModel m = train_svm(v, w, {gamma});
        std::vector<double> upper(static_cast<std::size_t>(n));
        for (std::size_t i = 0; i < upper.size(); ++i) upper[i] = d.labels[i] > 0 ? w.c_plus : w.c_minus;
        const auto k = oracle::rbf_gram(d.features, gamma);
        const auto q = oracle::solve_dual_qp(k, d.labels, upper);
        const double obj = dual_objective(m, v);
        worst_rel = std::max(worst_rel, std::abs(obj - q.objective) / std::abs(q.objective));
        worst_kkt = std::max(worst_kkt, oracle::kkt_violation(k, d.labels, upper, full_alpha(m, d.rows()), m.bias));
    }
    const double secs = since(t0);
    return {worst_rel <= 1e-4 && worst_kkt <= 1e-3 && secs < 10.0,
            "max relative gap " + fmt("%.2e", worst_rel) + ", max KKT violation " + fmt("%.2e", worst_kkt) + ", " +
                fmt("%.2f", secs) + " s"};
}

Outcome weighted_reduction() {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> size(10, 120);
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
        const Dataset d = random_instance(rng, size(rng), 3);
        const BinaryView v = binary_view(d, 1);
        const double c = 0.5 + t;
        const double gamma = 0.1 * (1 + t % 5);
        const SvmModel a = train_svm(v, ClassWeights::uniform(c), {gamma});
        const SvmModel b = train_svm(v, ClassWeights{c, c}, {gamma});
        const auto aa = full_alpha(a, d.rows());
        const auto ab = full_alpha(b, d.rows());
        for (std::size_t i = 0; i < aa.size(); ++i) worst = std::max(worst, std::abs(aa[i] - ab[i]));
        worst = std::max(worst, std::abs(a.bias - b.bias));
    }
    return {worst <= 1e-8, "max |difference| " + fmt("%.2e", worst)};
}

Outcome metrics_identity() {
    ConfusionMatrix cm;
    cm.tp = 8903;
    cm.fn = 1097;
    cm.tn = 6345;
    cm.fp = 3655;
    const Metrics m = compute_metrics(cm);
    return {std::abs(m.gmean - 0.7516) <= 1e-4,
            "SN " + fmt("%.4f", m.sn) + ", SP " + fmt("%.4f", m.sp) + ", G-mean " + fmt("%.6f", m.gmean)};
}

Outcome ud_budget() {
    const Dataset d = make_twonorm(300, 17, 8);
    const UdOutcome o = ud_search(binary_view(d, 1), iota(d.rows()), false, UdConfig{});
    std::set<std::pair<double, double>> distinct;
    for (const auto& c : o.candidates) distinct.insert({c.c, c.gamma});
    return {o.evaluations == 13 && distinct.size() == 13,
            std::to_string(o.evaluations) + " trained, " + std::to_string(distinct.size()) + " distinct"};
}

Outcome coarsening_structure() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<std::size_t> size(500, 5000);
    std::size_t failures = 0;
    double min_fraction = 1.0;
    for (std::uint64_t t = 0; t < 100; ++t) {
        const std::size_t n = size(rng);
        const Dataset d = make_blobs(n, 4, 2 + t % 7, 3.0, 1000 + t);
        KnnConfig kc;
        kc.mode = KnnMode::Approximate;
        kc.seed = t + 1;
        const KnnGraph g = build_knn_graph(d, iota(n), kc);
        const Coarsening c = coarsen_class(g, 0.5, 77 + t);
        bool ok = oracle::is_dominating(g, c.selected) && oracle::is_dominating(g, c.rounds.front());
        std::vector<char> taken(n, 0);
        for (const auto& round : c.rounds) {
            ok = ok && oracle::is_independent(g, round);
            std::vector<char> in(n, 0);
            for (NodeId v : round) in[v] = 1;
            for (NodeId v = 0; v < n && ok; ++v) {
                if (taken[v] || in[v]) continue;
                bool adjacent = false;
                for (NodeId u : g.adjacency[v]) adjacent = adjacent || in[u];
                ok = adjacent;
            }
            for (NodeId v : round) taken[v] = 1;
        }
        const double fraction = static_cast<double>(c.selected.size()) / static_cast<double>(n);
        min_fraction = std::min(min_fraction, fraction);
        ok = ok && fraction >= 0.5;
        failures += ok ? 0 : 1;
    }
    const double secs = since(t0);
    return {failures == 0 && secs < 30.0, std::to_string(failures) + " of 100 graphs failed, min |sel|/|V| " +
                                              fmt("%.3f", min_fraction) + ", " + fmt("%.2f", secs) + " s"};
}

Outcome twonorm_reproduction() {
    const auto t0 = Clock::now();
    const Dataset clean = make_twonorm(7400, 2024, 20);
    const std::vector<Method> methods{Method::Mlsvm, Method::Mlwsvm};
    PipelineConfig cfg;
    double worst = 1.0;
    std::string detail;
    for (double ratio : {0.05, 0.20}) {
        const Dataset d = inject_missing(clean, ratio, 99);
        const auto reports = run_cv(d, 1, methods, 10, cfg);
        for (const auto& r : reports) {
            worst = std::min(worst, r.mean.gmean);
            detail += method_name(r.method) + "@" + fmt("%.2f", ratio) + " " + fmt("%.4f", r.mean.gmean) + ", ";
        }
    }
    const double secs = since(t0);
    return {worst >= 0.95 && secs < 600.0, detail + fmt("%.1f", secs) + " s"};
}

Outcome speedup() {
    const Dataset raw = make_twonorm(7400, 2024, 20);
    const Dataset d = apply_normalization(raw, fit_normalization(raw));
    PipelineConfig cfg;
    const TrainedModel ml = train_method(d, 1, Method::Mlsvm, cfg);
    const TrainedModel flat = train_method(d, 1, Method::Svm, cfg);
    const double ratio = ml.seconds / flat.seconds;
    return {ratio <= 0.5, "MLSVM " + fmt("%.2f", ml.seconds) + " s, SVM " + fmt("%.2f", flat.seconds) + " s, ratio " +
                              fmt("%.3f", ratio)};
}

Outcome imbalance_benefit() {
    PipelineConfig cfg;
    const std::vector<Method> methods{Method::Mlsvm, Method::Mlwsvm};
    bool ok = true;
    std::string detail;
    for (std::uint64_t seed : {1, 2, 3}) {
        const Dataset d = make_imbalanced(10000, 0.05, 10, 2.0, seed);
        cfg.seed = seed;
        const auto reports = run_cv(d, 1, methods, 5, cfg);
        const Metrics& ml = reports[0].mean;
        const Metrics& mw = reports[1].mean;
        const bool here = mw.sn >= ml.sn && mw.gmean >= std::max(ml.gmean, mw.gmean) - 0.01;
        ok = ok && here;
        detail += "seed " + std::to_string(seed) + ": SN " + fmt("%.4f", ml.sn) + "/" + fmt("%.4f", mw.sn) +
                  ", G-mean " + fmt("%.4f", ml.gmean) + "/" + fmt("%.4f", mw.gmean) + (here ? "" : " (miss)") + "; ";
    }
    return {ok, detail + "values are MLSVM/MLWSVM"};
}

Outcome imputation_quality() {
    const Dataset truth = make_correlated(1000, 10, 0.8, 8);
    const Dataset masked = inject_missing(truth, 0.20, 9);
    const Dataset rem = rem_impute(masked).first;
    const Dataset mean = mean_impute(masked);
    double se_rem = 0.0;
    double se_mean = 0.0;
    std::size_t changed = 0;
    for (Eigen::Index r = 0; r < truth.features.rows(); ++r)
        for (Eigen::Index c = 0; c < truth.features.cols(); ++c) {
            if (masked.missing(r, c)) {
                se_rem += std::pow(rem.features(r, c) - truth.features(r, c), 2);
                se_mean += std::pow(mean.features(r, c) - truth.features(r, c), 2);
            } else if (rem.features(r, c) != masked.features(r, c)) {
                ++changed;
            }
        }
    const double ratio = se_rem / se_mean;
    return {ratio <= 0.7 && changed == 0,
            "MSE ratio " + fmt("%.4f", ratio) + ", observed cells changed " + std::to_string(changed)};
}

Outcome leakage_audit() {
    const Dataset d = inject_missing(make_twonorm(600, 41, 6), 0.15, 42);
    std::vector<RowIndex> train, test;
    for (RowIndex r = 0; r < d.rows(); ++r) (r % 5 == 0 ? test : train).push_back(r);
    Dataset mutated = d;
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g(0.0, 25.0);
    for (RowIndex r : test)
        for (Eigen::Index c = 0; c < d.features.cols(); ++c)
            if (!mutated.missing(static_cast<Eigen::Index>(r), c)) mutated.features(static_cast<Eigen::Index>(r), c) = g(rng);

    PipelineConfig cfg;
    std::vector<std::string> broken;
    const FoldData a = prepare_fold(d, train, test, cfg);
    const FoldData b = prepare_fold(mutated, train, test, cfg);
    if (a.normalization.mean != b.normalization.mean || a.normalization.std != b.normalization.std)
        broken.push_back("normalization");
    if (!a.rem || !b.rem || a.rem->mean() != b.rem->mean() || a.rem->covariance() != b.rem->covariance())
        broken.push_back("imputation model");
    if (a.train.features != b.train.features) broken.push_back("train rows");
    for (Method m : {Method::Svm, Method::Mlwsvm}) {
        const TrainedModel ta = train_method(a.train, 1, m, cfg);
        const TrainedModel tb = train_method(b.train, 1, m, cfg);
        if (ta.ud && (ta.ud->c != tb.ud->c || ta.ud->gamma != tb.ud->gamma)) broken.push_back("UD winner");
        const Prediction pa = ta.classifier.predict(a.train.features);
        const Prediction pb = tb.classifier.predict(b.train.features);
        if (pa.margins != pb.margins) broken.push_back(method_name(m) + " model");
    }
    PipelineConfig mean_cfg = cfg;
    mean_cfg.imputer = Imputer::Mean;
    if (prepare_fold(d, train, test, mean_cfg).fill != prepare_fold(mutated, train, test, mean_cfg).fill)
        broken.push_back("mean fill");
    std::string detail = broken.empty() ? "no train-fitted statistic moved" : "changed:";
    for (const auto& s : broken) detail += " " + s;
    return {broken.empty(), detail};
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run(const std::string& args, const std::string& out) {
    const std::string cmd = std::string(MLSVM_CLI) + " " + args + " >" + out + " 2>/dev/null";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome cli_determinism() {
    const fs::path dir = fs::temp_directory_path() / ("mlsvm_accept_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    const auto p = [&](const std::string& name) { return (dir / name).string(); };
    write_dataset(p("data.csv"), inject_missing(make_imbalanced(1500, 0.15, 5, 2.5, 4), 0.1, 5));

    struct Case {
        std::string name;
        std::string args;
        std::vector<std::string> files;
    };
    const std::vector<Case> cases = {
        {"impute", "impute --in " + p("data.csv") + " --out " + p("imputed.csv") + " --diagnostics " + p("diag.txt"),
         {"imputed.csv", "diag.txt"}},
        {"train", "train --method mlwsvm --coarsest-max 200 --in " + p("data.csv") + " --model " + p("model.txt"),
         {"model.txt", "model.txt.report"}},
        {"predict", "predict --in " + p("data.csv") + " --model " + p("model.txt") + " --out " + p("pred.csv"),
         {"pred.csv"}},
        {"evaluate", "evaluate --methods svm,mlsvm --folds 3 --coarsest-max 200 --in " + p("data.csv"), {}},
        {"benchmark",
         "benchmark --methods wsvm,mlwsvm --ratios 0.05,0.2 --folds 3 --coarsest-max 200 --in " + p("data.csv"), {}},
    };
    std::vector<std::string> differ;
    int runs = 0;
    for (const auto& c : cases) {
        std::string reference;
        bool first = true;
        for (const char* w : {"1", "1", "3"}) {
            const std::string out = p(c.name + ".stdout");
            const int code = run("--seed 13 --timing off --workers " + std::string(w) + " " + c.args, out);
            ++runs;
            std::string bytes = std::to_string(code) + "\n" + slurp(out);
            for (const auto& f : c.files) bytes += "\n--" + f + "\n" + slurp(p(f));
            if (first) {
                reference = bytes;
                first = false;
            } else if (bytes != reference) {
                differ.push_back(c.name + " (workers " + w + ")");
            }
        }
    }
    std::error_code ec;
    fs::remove_all(dir, ec);
    std::string detail = std::to_string(runs) + " invocations";
    if (!differ.empty()) {
        detail += ", differing:";
        for (const auto& s : differ) detail += " " + s;
    }
    return {differ.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
    spdlog::set_level(spdlog::level::warn);
    const std::vector<std::function<Outcome()>> criteria = {
        solver_vs_oracle, weighted_reduction, metrics_identity,  ud_budget,          coarsening_structure,
        twonorm_reproduction, speedup,      imbalance_benefit,   imputation_quality, leakage_audit,
        cli_determinism};
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
    std::ofstream log("acceptance_results.txt");
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!only.empty() && !only.count(id)) continue;
        Outcome o;
        try {
            o = criteria[i]();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const std::string line =
            "criterion " + std::to_string(id) + ": " + (o.pass ? "PASS" : "FAIL") + "  " + o.detail + "\n";
        std::fputs(line.c_str(), stdout);
        std::fflush(stdout);
        log << line << std::flush;
        failed += o.pass ? 0 : 1;
    }
    return failed == 0 ? 0 : 1;
}
