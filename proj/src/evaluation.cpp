#include "mlsvm/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include <spdlog/spdlog.h>

#include "mlsvm/error.hpp"

namespace mlsvm {

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::vector<RowIndex> all_rows(const Dataset& d) {
    std::vector<RowIndex> r(d.rows());
    std::iota(r.begin(), r.end(), RowIndex{0});
    return r;
}

std::string fmt(const char* spec, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

}  // namespace

std::string method_name(Method m) {
    switch (m) {
        case Method::Svm: return "svm";
        case Method::Wsvm: return "wsvm";
        case Method::Mlsvm: return "mlsvm";
        case Method::Mlwsvm: return "mlwsvm";
    }
    return "?";
}

Method parse_method(const std::string& name) {
    if (name == "svm") return Method::Svm;
    if (name == "wsvm") return Method::Wsvm;
    if (name == "mlsvm") return Method::Mlsvm;
    if (name == "mlwsvm") return Method::Mlwsvm;
    throw Error("unknown method '" + name + "' (expected svm, wsvm, mlsvm or mlwsvm)");
}

std::string imputer_name(Imputer i) {
    switch (i) {
        case Imputer::Rem: return "rem";
        case Imputer::Mean: return "mean";
        case Imputer::None: return "none";
    }
    return "?";
}

Imputer parse_imputer(const std::string& name) {
    if (name == "rem") return Imputer::Rem;
    if (name == "mean") return Imputer::Mean;
    if (name == "none") return Imputer::None;
    throw Error("unknown imputer '" + name + "' (expected rem, mean or none)");
}

PipelineConfig PipelineConfig::resolved() const {
    PipelineConfig c = *this;
    c.knn.seed = seed * 7919 + 1;
    c.knn.workers = workers;
    c.framework.seed = seed;
    c.framework.kmeans.seed = seed * 104729 + 3;
    c.framework.workers = workers;
    c.ud.seed = seed * 15485863 + 5;
    c.ud.workers = workers;
    c.rem.workers = workers;
    return c;
}

FoldData prepare_fold(const Dataset& data, std::span<const RowIndex> train_rows, std::span<const RowIndex> test_rows,
                      const PipelineConfig& config) {
    FoldData f;
    f.normalization = config.normalization == NormalizationScope::Fold ? fit_normalization(data, train_rows)
                                                                        : fit_normalization(data);
    Dataset train = apply_normalization(data.subset(train_rows), f.normalization);
    Dataset test = apply_normalization(data.subset(test_rows), f.normalization);

    const auto t0 = Clock::now();
    switch (config.imputer) {
        case Imputer::Rem: {
            RemResult r = rem_fit(train, config.rem);
            f.train = std::move(r.completed);
            f.test = r.model.impute(test, config.workers);
            f.rem = std::move(r.model);
            break;
        }
        case Imputer::Mean: {
            const auto p = static_cast<Eigen::Index>(train.cols());
            f.fill.assign(static_cast<std::size_t>(p), 0.0);
            for (Eigen::Index c = 0; c < p; ++c) {
                double s = 0.0;
                std::size_t n = 0;
                for (Eigen::Index r = 0; r < train.features.rows(); ++r)
                    if (!train.missing(r, c)) {
                        s += train.features(r, c);
                        ++n;
                    }
                require(n > 0, "mean imputation: feature " + std::to_string(c) + " has no observed training value");
                f.fill[static_cast<std::size_t>(c)] = s / static_cast<double>(n);
            }
            for (Dataset* d : {&train, &test}) {
                for (Eigen::Index r = 0; r < d->features.rows(); ++r)
                    for (Eigen::Index c = 0; c < p; ++c)
                        if (d->missing(r, c)) {
                            d->features(r, c) = f.fill[static_cast<std::size_t>(c)];
                            d->missing(r, c) = false;
                        }
            }
            f.train = std::move(train);
            f.test = std::move(test);
            break;
        }
        case Imputer::None:
            require(!train.has_missing() && !test.has_missing(), "data has missing values; choose an imputer");
            f.train = std::move(train);
            f.test = std::move(test);
            break;
    }
    f.impute_seconds = since(t0);
    return f;
}

TrainedModel train_method(const Dataset& train, int positive_class, Method method, const PipelineConfig& config) {
    const PipelineConfig cfg = config.resolved();
    const BinaryView view = binary_view(train, positive_class);
    const std::vector<RowIndex> rows = all_rows(train);
    TrainedModel out;
    const auto t0 = Clock::now();
    if (is_multilevel(method)) {
        FrameworkConfig fw = cfg.framework;
        fw.weighted = is_weighted(method);
        MultilevelResult r = train_multilevel(view, rows, cfg.knn, fw, cfg.ud, cfg.solver);
        out.classifier = std::move(r.classifier);
        out.report = std::move(r.report);
    } else {
        UdOutcome ud = ud_search(view, rows, is_weighted(method), cfg.ud, std::nullopt, cfg.solver);
        out.classifier.single = train_svm(view, ud.weights, KernelParams{ud.gamma}, cfg.solver, rows);
        out.ud = std::move(ud);
    }
    out.seconds = since(t0);
    return out;
}

std::vector<EvalReport> run_cv(const Dataset& data, int positive_class, std::span<const Method> methods, int folds,
                               const PipelineConfig& config) {
    require(!methods.empty(), "no methods to evaluate");
    const PipelineConfig cfg = config.resolved();
    std::vector<std::string> warnings;
    const std::vector<int> fold = stratified_folds(data.labels, folds, cfg.seed, &warnings);
    for (const auto& w : warnings) spdlog::warn("{}", w);

    std::vector<EvalReport> reports(methods.size());
    for (std::size_t m = 0; m < methods.size(); ++m) {
        reports[m].method = methods[m];
        reports[m].positive_class = positive_class;
        reports[m].warnings = warnings;
    }
    for (int f = 0; f < folds; ++f) {
        std::vector<RowIndex> train_rows;
        std::vector<RowIndex> test_rows;
        for (RowIndex r = 0; r < data.rows(); ++r) (fold[r] == f ? test_rows : train_rows).push_back(r);
        if (test_rows.empty()) continue;
        const FoldData fd = prepare_fold(data, train_rows, test_rows, cfg);
        std::vector<int> truth;
        for (int label : fd.test.labels) truth.push_back(label == positive_class ? 1 : -1);
        for (std::size_t m = 0; m < methods.size(); ++m) {
            const TrainedModel tm = train_method(fd.train, positive_class, methods[m], cfg);
            const auto t0 = Clock::now();
            const Prediction pred = tm.classifier.predict(fd.test.features);
            FoldResult fr;
            fr.fold = f;
            fr.predict_seconds = since(t0);
            fr.train_seconds = tm.seconds;
            fr.impute_seconds = fd.impute_seconds;
            fr.cm = confusion(truth, pred.labels);
            fr.metrics = compute_metrics(fr.cm);
            spdlog::info("fold {} {}: G-mean {:.4f} ({:.2f} s)", f, method_name(methods[m]), fr.metrics.gmean,
                         fr.train_seconds);
            const auto& fresh = tm.report ? tm.report->warnings : tm.ud->warnings;
            for (const auto& w : fresh)
                if (std::find(reports[m].warnings.begin(), reports[m].warnings.end(), w) == reports[m].warnings.end())
                    reports[m].warnings.push_back(w);
            reports[m].folds.push_back(fr);
        }
    }

    for (auto& rep : reports) {
        const double n = static_cast<double>(rep.folds.size());
        Metrics mean;
        double seconds = 0.0;
        for (const auto& fr : rep.folds) {
            mean.sn += fr.metrics.sn / n;
            mean.sp += fr.metrics.sp / n;
            mean.gmean += fr.metrics.gmean / n;
            mean.acc += fr.metrics.acc / n;
            mean.sn_undefined = mean.sn_undefined || fr.metrics.sn_undefined;
            mean.sp_undefined = mean.sp_undefined || fr.metrics.sp_undefined;
            mean.acc_undefined = mean.acc_undefined || fr.metrics.acc_undefined;
            seconds += fr.train_seconds + (cfg.time_imputation ? fr.impute_seconds : 0.0);
        }
        double var = 0.0;
        for (const auto& fr : rep.folds) var += (fr.metrics.gmean - mean.gmean) * (fr.metrics.gmean - mean.gmean);
        rep.gmean_std = rep.folds.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
        rep.mean = mean;
        rep.seconds = seconds;
    }
    return reports;
}

std::vector<ClassReport> one_against_all(const Dataset& data, Method method, int folds, const PipelineConfig& config) {
    require(data.class_names.size() >= 2, "one-against-all needs at least two classes");
    std::vector<ClassReport> out;
    const Method methods[] = {method};
    for (int label : data.class_names) out.push_back({label, run_cv(data, label, methods, folds, config).front()});
    return out;
}

void write_class_table(std::ostream& out, std::span<const ClassReport> reports) {
    out << "class,method,ACC,SN,SP,Gmean\n";
    for (const auto& r : reports)
        out << r.label << ',' << method_name(r.report.method) << ',' << fmt("%.4f", r.report.mean.acc) << ','
            << fmt("%.4f", r.report.mean.sn) << ',' << fmt("%.4f", r.report.mean.sp) << ','
            << fmt("%.4f", r.report.mean.gmean) << '\n';
}

void BenchmarkPlan::validate() const {
    require(!ratios.empty(), "benchmark: no missing ratios");
    for (double r : ratios) require(r >= 0.0 && r < 1.0, "benchmark: missing ratios must lie in [0, 1)");
    require(!methods.empty(), "benchmark: no methods");
    require(folds >= 2, "benchmark: folds must be at least 2");
}

BenchmarkTable run_benchmark(const Dataset& data, const BenchmarkPlan& plan, const PipelineConfig& config,
                             const std::function<void(const BenchmarkCell&)>& on_cell) {
    plan.validate();
    require(data.class_names.size() >= 2, "benchmark: data has a single class");
    const int positive = plan.positive_class ? *plan.positive_class : minority_class(data);
    require(std::find(data.class_names.begin(), data.class_names.end(), positive) != data.class_names.end(),
            "benchmark: positive class " + std::to_string(positive) + " does not occur in the data");
    BenchmarkTable table;
    table.dataset = plan.dataset;
    for (std::size_t i = 0; i < plan.ratios.size(); ++i) {
        const double ratio = plan.ratios[i];
        std::vector<BenchmarkCell> cells;
        try {
            const Dataset holed = inject_missing(data, ratio, config.seed * 1000003 + i);
            const auto reports = run_cv(holed, positive, plan.methods, plan.folds, config);
            for (const auto& rep : reports) {
                BenchmarkCell cell;
                cell.ratio = ratio;
                cell.method = rep.method;
                cell.metrics = rep.mean;
                cell.gmean_std = rep.gmean_std;
                cell.seconds = rep.seconds;
                cells.push_back(cell);
                for (const auto& w : rep.warnings)
                    if (std::find(table.warnings.begin(), table.warnings.end(), w) == table.warnings.end())
                        table.warnings.push_back(w);
            }
        } catch (const Error& e) {
            cells.clear();
            for (Method m : plan.methods) {
                BenchmarkCell cell;
                cell.ratio = ratio;
                cell.method = m;
                cell.error = e.what();
                cells.push_back(cell);
            }
        }
        for (const auto& c : cells) {
            if (on_cell) on_cell(c);
            table.cells.push_back(c);
        }
    }
    return table;
}

void write_long_header(std::ostream& out, bool timing) {
    out << "dataset,r_mv,method,SN,SP,Gmean,ACC,Gmean_std";
    if (timing) out << ",seconds";
    out << '\n';
}

void write_long_row(std::ostream& out, const std::string& dataset, const BenchmarkCell& c, bool timing) {
    out << dataset << ',' << fmt("%.2f", c.ratio) << ',' << method_name(c.method) << ',';
    if (!c.error.empty()) {
        out << "NA,NA,NA,NA,NA";
        if (timing) out << ",NA";
        out << '\n';
        return;
    }
    out << fmt("%.4f", c.metrics.sn) << ',' << fmt("%.4f", c.metrics.sp) << ',' << fmt("%.4f", c.metrics.gmean) << ','
        << fmt("%.4f", c.metrics.acc) << ',' << fmt("%.4f", c.gmean_std);
    if (timing) out << ',' << fmt("%.2f", c.seconds);
    out << '\n';
}

namespace {

void write_wide(std::ostream& out, const BenchmarkTable& table, const char* spec, bool seconds) {
    std::vector<Method> methods;
    std::vector<double> ratios;
    for (const auto& c : table.cells) {
        if (std::find(methods.begin(), methods.end(), c.method) == methods.end()) methods.push_back(c.method);
        if (std::find(ratios.begin(), ratios.end(), c.ratio) == ratios.end()) ratios.push_back(c.ratio);
    }
    out << "dataset,r_mv";
    for (Method m : methods) out << ',' << method_name(m);
    out << '\n';
    for (double r : ratios) {
        out << table.dataset << ',' << fmt("%.2f", r);
        for (Method m : methods) {
            out << ',';
            for (const auto& c : table.cells)
                if (c.ratio == r && c.method == m)
                    out << (c.error.empty() ? fmt(spec, seconds ? c.seconds : c.metrics.gmean) : "NA");
        }
        out << '\n';
    }
}

}  // namespace

void write_gmean_table(std::ostream& out, const BenchmarkTable& table) { write_wide(out, table, "%.2f", false); }

void write_timing_table(std::ostream& out, const BenchmarkTable& table) { write_wide(out, table, "%.1f", true); }

}  // namespace mlsvm
