#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "mlsvm/dataset.hpp"
#include "mlsvm/error.hpp"
#include "mlsvm/evaluation.hpp"
#include "mlsvm/multilevel.hpp"
#include "mlsvm/rem.hpp"
#include "mlsvm/svm.hpp"

using namespace mlsvm;

namespace {

struct InputOptions {
    std::string path;
    std::string label_column = "-1";
    std::string missing_token = "?";
    std::string delimiter = ",";
    std::string format = "csv";
    std::string header = "auto";

    LoadOptions load() const {
        LoadOptions o;
        o.format = format == "sparse" ? FileFormat::Sparse : FileFormat::Delimited;
        try {
            std::size_t used = 0;
            const int idx = std::stoi(label_column, &used);
            if (used == label_column.size())
                o.label_column = idx;
            else
                o.label_column = label_column;
        } catch (const std::exception&) {
            o.label_column = label_column;
        }
        o.missing_token = missing_token;
        require(delimiter.size() == 1 || delimiter == "\\t", "delimiter must be a single character");
        o.delimiter = delimiter == "\\t" ? '\t' : delimiter[0];
        o.header = header == "yes" ? HeaderMode::Present : header == "no" ? HeaderMode::Absent : HeaderMode::Auto;
        return o;
    }
};

struct Globals {
    std::string config;
    std::uint64_t seed = 1;
    int workers = 1;
    int verbose = 0;
    std::string timing = "on";

    bool timing_on() const { return timing == "on"; }
};

struct PipelineOptions {
    std::string imputer = "rem";
    std::string normalization = "fold";
    bool time_imputation = false;
    // multilevel
    double q = 0.5;
    std::size_t qdt = 5000;
    std::size_t coarsest_max = 500;
    int k = 10;
    int neighbors = 5;
    double p_fraction = 0.10;
    std::string final_model = "retrain";
    std::string knn_mode = "auto";
    // UD
    int ud_stage1 = 9;
    int ud_stage2 = 5;
    double c_min = 0.01;
    double c_max = 100.0;
    double gamma_min = 0.005;
    double gamma_max = 3.000078;
    int ud_folds = 5;
    std::string objective = "gmean";
    // solver
    double kkt_tol = 1e-3;
    double cache_mb = 256.0;
    bool no_shrinking = false;
    // REM
    int rem_max_iters = 50;
    double rem_tol = 1e-2;
    double rem_ridge = -1.0;
    std::string rem_regression = "ridge";

    PipelineConfig build(const Globals& g) const {
        PipelineConfig c;
        c.imputer = parse_imputer(imputer);
        require(normalization == "fold" || normalization == "global", "normalization must be fold or global");
        c.normalization = normalization == "fold" ? NormalizationScope::Fold : NormalizationScope::Global;
        c.time_imputation = time_imputation;
        c.framework.q = q;
        c.framework.qdt = qdt;
        c.framework.coarsest_max = coarsest_max;
        c.framework.neighbor_expansion = neighbors;
        c.framework.p_fraction = p_fraction;
        require(final_model == "retrain" || final_model == "ensemble", "--final must be ensemble or retrain");
        c.framework.final_model = final_model == "retrain" ? FinalModel::Retrain : FinalModel::Ensemble;
        c.framework.validate();
        c.knn.k = k;
        c.knn.mode = knn_mode == "exact" ? KnnMode::Exact : knn_mode == "approx" ? KnnMode::Approximate : KnnMode::Auto;
        c.ud.stage1_runs = ud_stage1;
        c.ud.stage2_runs = ud_stage2;
        c.ud.c_min = c_min;
        c.ud.c_max = c_max;
        c.ud.gamma_min = gamma_min;
        c.ud.gamma_max = gamma_max;
        c.ud.internal_cv_folds = ud_folds;
        require(objective == "gmean" || objective == "accuracy", "objective must be gmean or accuracy");
        c.ud.objective = objective == "gmean" ? UdObjective::GMean : UdObjective::Accuracy;
        c.ud.validate();
        c.solver.kkt_tolerance = kkt_tol;
        require(cache_mb >= 0.0, "cache size must be nonnegative");
        c.solver.cache_bytes = static_cast<std::size_t>(cache_mb * 1024.0 * 1024.0);
        c.solver.shrinking = !no_shrinking;
        c.solver.validate();
        c.rem.max_iters = rem_max_iters;
        c.rem.stagnation_tol = rem_tol;
        if (rem_ridge >= 0.0) c.rem.ridge = rem_ridge;
        require(rem_regression == "ridge" || rem_regression == "ttls", "REM regression must be ridge or ttls");
        c.rem.regression = rem_regression == "ridge" ? RemRegression::MultipleRidge : RemRegression::TruncatedTls;
        c.rem.validate();
        c.seed = g.seed;
        c.workers = g.workers;
        return c;
    }
};

void add_input_options(CLI::App* app, InputOptions& in) {
    app->add_option("--in", in.path, "Input dataset")->required();
    app->add_option("--label-column", in.label_column, "Label column: 0-based index (negative counts from the end) or header name")
        ->capture_default_str();
    app->add_option("--missing-token", in.missing_token, "Token marking a missing cell")->capture_default_str();
    app->add_option("--delimiter", in.delimiter, "Field delimiter (\\t for tab)")->capture_default_str();
    app->add_option("--format", in.format, "Input format")->check(CLI::IsMember({"csv", "sparse"}))->capture_default_str();
    app->add_option("--header", in.header, "Header line")->check(CLI::IsMember({"auto", "yes", "no"}))->capture_default_str();
}

void add_imputer_options(CLI::App* app, PipelineOptions& p) {
    app->add_option("--rem-max-iters", p.rem_max_iters, "REM iteration cap")->capture_default_str();
    app->add_option("--rem-tol", p.rem_tol, "REM stagnation tolerance")->capture_default_str();
    app->add_option("--rem-ridge", p.rem_ridge, "Fixed REM ridge parameter; negative selects it by K-fold CV")
        ->capture_default_str();
    app->add_option("--rem-regression", p.rem_regression, "REM regression")
        ->check(CLI::IsMember({"ridge", "ttls"}))
        ->capture_default_str();
}

void add_pipeline_options(CLI::App* app, PipelineOptions& p) {
    app->add_option("--imputer", p.imputer, "Missing-value imputer")
        ->check(CLI::IsMember({"rem", "mean", "none"}))
        ->capture_default_str();
    app->add_option("--normalization", p.normalization, "Fit normalization per fold or on all rows")
        ->check(CLI::IsMember({"fold", "global"}))
        ->capture_default_str();
    app->add_flag("--time-imputation", p.time_imputation, "Include imputation in reported seconds");
    app->add_option("--Q", p.q, "Coarse-to-fine size ratio")->capture_default_str();
    app->add_option("--Qdt", p.qdt, "Refinement direct-training threshold")->capture_default_str();
    app->add_option("--coarsest-max", p.coarsest_max, "Coarsest level size bound")->capture_default_str();
    app->add_option("--k", p.k, "Neighbors per point in the kNN graphs")->capture_default_str();
    app->add_option("--knn-mode", p.knn_mode, "kNN search")
        ->check(CLI::IsMember({"auto", "exact", "approx"}))
        ->capture_default_str();
    app->add_option("--neighbors", p.neighbors, "Neighbors added per support vector during refinement")
        ->capture_default_str();
    app->add_option("--p-fraction", p.p_fraction, "Fraction of opposite-class clusters paired")->capture_default_str();
    app->add_option("--final", p.final_model, "Level-0 predictor after cluster-pair refinement")
        ->check(CLI::IsMember({"ensemble", "retrain"}))
        ->capture_default_str();
    app->add_option("--ud-stage1", p.ud_stage1, "First-stage uniform design runs")->capture_default_str();
    app->add_option("--ud-stage2", p.ud_stage2, "Second-stage uniform design runs")->capture_default_str();
    app->add_option("--C-min", p.c_min, "Lower bound of C")->capture_default_str();
    app->add_option("--C-max", p.c_max, "Upper bound of C")->capture_default_str();
    app->add_option("--gamma-min", p.gamma_min, "Lower bound of gamma")->capture_default_str();
    app->add_option("--gamma-max", p.gamma_max, "Upper bound of gamma")->capture_default_str();
    app->add_option("--ud-folds", p.ud_folds, "Internal CV folds for model selection")->capture_default_str();
    app->add_option("--objective", p.objective, "Model selection objective")
        ->check(CLI::IsMember({"gmean", "accuracy"}))
        ->capture_default_str();
    app->add_option("--kkt-tol", p.kkt_tol, "SMO stopping tolerance")->capture_default_str();
    app->add_option("--cache-mb", p.cache_mb, "Kernel row cache size in MiB")->capture_default_str();
    app->add_flag("--no-shrinking", p.no_shrinking, "Disable SMO shrinking");
    add_imputer_options(app, p);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Writes the whole buffer at once so failures leave no partial file.
void commit(const std::string& path, const std::string& contents) {
    if (path.empty() || path == "-") {
        std::cout << contents << std::flush;
        return;
    }
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        require(out.good(), "cannot write " + path);
        out << contents;
        require(out.good(), "cannot write " + path);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    require(!ec, "cannot write " + path + ": " + ec.message());
}

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

Dataset fill_missing(Dataset d, const std::vector<double>& fill) {
    for (Eigen::Index r = 0; r < d.features.rows(); ++r)
        for (Eigen::Index c = 0; c < d.features.cols(); ++c)
            if (d.missing(r, c)) {
                d.features(r, c) = fill[static_cast<std::size_t>(c)];
                d.missing(r, c) = false;
            }
    return d;
}

// Model bundle: label mapping, normalization, fallback fill values, classifier.
void write_bundle(std::ostream& out, int positive, const std::string& negative, const NormalizationStats& norm,
                  const std::vector<double>& fill, const MultilevelClassifier& clf) {
    out << "mlsvm-classifier 1\n";
    out << "positive_label " << positive << '\n';
    out << "negative_label " << negative << '\n';
    out << "normalization " << norm.size() << '\n';
    for (std::size_t c = 0; c < norm.size(); ++c)
        out << fmt17(norm.mean[c]) << ' ' << fmt17(norm.std[c]) << ' ' << (norm.constant[c] ? 1 : 0) << '\n';
    out << "fill";
    for (double v : fill) out << ' ' << fmt17(v);
    out << '\n';
    const auto write_matrix = [&](const char* name, const Matrix& m) {
        out << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c) out << (c ? " " : "") << fmt17(m(r, c));
            out << '\n';
        }
    };
    if (clf.single) {
        out << "kind single\n";
        write_model(out, *clf.single);
        return;
    }
    out << "kind ensemble\n";
    write_matrix("positive_centroids", clf.positive_centroids);
    write_matrix("negative_centroids", clf.negative_centroids);
    out << "pairs " << clf.pairs.size() << '\n';
    for (const auto& p : clf.pairs) {
        out << "pair " << p.positive_cluster << ' ' << p.negative_cluster << '\n';
        write_model(out, p.model);
    }
}

struct Bundle {
    int positive = 0;
    std::string negative;
    NormalizationStats norm;
    std::vector<double> fill;
    MultilevelClassifier clf;
};

Bundle read_bundle(std::istream& in) {
    const auto expect = [&](const std::string& key) {
        std::string k;
        if (!(in >> k) || k != key) throw Error("model file: expected '" + key + "'");
    };
    Bundle b;
    std::string magic;
    int version = 0;
    if (!(in >> magic >> version) || magic != "mlsvm-classifier" || version != 1)
        throw Error("model file: not an mlsvm-classifier v1 file");
    expect("positive_label");
    in >> b.positive;
    expect("negative_label");
    in >> b.negative;
    expect("normalization");
    std::size_t d = 0;
    in >> d;
    b.norm.mean.resize(d);
    b.norm.std.resize(d);
    b.norm.constant.resize(d);
    for (std::size_t c = 0; c < d; ++c) {
        int flag = 0;
        in >> b.norm.mean[c] >> b.norm.std[c] >> flag;
        b.norm.constant[c] = flag != 0;
    }
    expect("fill");
    b.fill.resize(d);
    for (auto& v : b.fill) in >> v;
    require(in.good(), "model file: truncated header");
    expect("kind");
    std::string kind;
    in >> kind;
    const auto read_matrix = [&](const std::string& name) {
        expect(name);
        Eigen::Index r = 0;
        Eigen::Index c = 0;
        in >> r >> c;
        Matrix m(r, c);
        for (Eigen::Index i = 0; i < r; ++i)
            for (Eigen::Index j = 0; j < c; ++j) in >> m(i, j);
        require(in.good(), "model file: truncated " + name);
        return m;
    };
    if (kind == "single") {
        b.clf.single = read_model(in);
    } else if (kind == "ensemble") {
        b.clf.positive_centroids = read_matrix("positive_centroids");
        b.clf.negative_centroids = read_matrix("negative_centroids");
        expect("pairs");
        std::size_t n = 0;
        in >> n;
        for (std::size_t i = 0; i < n; ++i) {
            expect("pair");
            PairModel p;
            in >> p.positive_cluster >> p.negative_cluster;
            p.model = read_model(in);
            b.clf.pairs.push_back(std::move(p));
        }
    } else {
        throw Error("model file: unknown classifier kind '" + kind + "'");
    }
    return b;
}

std::vector<double> column_means(const Dataset& d) {
    std::vector<double> m(d.cols(), 0.0);
    if (d.rows() == 0) return m;
    for (Eigen::Index c = 0; c < d.features.cols(); ++c) m[static_cast<std::size_t>(c)] = d.features.col(c).mean();
    return m;
}

Dataset impute_with(const Dataset& data, const PipelineConfig& cfg, std::ostream* diagnostics) {
    switch (cfg.imputer) {
        case Imputer::Rem: {
            RemResult r = rem_fit(data, cfg.rem);
            if (diagnostics) {
                *diagnostics << "iterations " << r.diagnostics.iterations << '\n';
                *diagnostics << "final_change " << fmt17(r.diagnostics.final_change) << '\n';
                *diagnostics << "converged " << (r.diagnostics.converged ? "yes" : "no") << '\n';
                *diagnostics << "missing_per_feature";
                for (auto n : r.diagnostics.missing_per_feature) *diagnostics << ' ' << n;
                *diagnostics << '\n';
            }
            return std::move(r.completed);
        }
        case Imputer::Mean:
            return mean_impute(data);
        case Imputer::None:
            require(!data.has_missing(), "data has missing values; choose an imputer");
            return data;
    }
    return data;
}

int resolve_positive(const Dataset& data, const std::optional<int>& requested) {
    if (requested) {
        require(std::find(data.class_names.begin(), data.class_names.end(), *requested) != data.class_names.end(),
                "positive class " + std::to_string(*requested) + " does not occur in the data");
        return *requested;
    }
    require(data.class_names.size() == 2, "data has " + std::to_string(data.class_names.size()) +
                                              " classes; pass --positive-class for a one-against-rest model");
    return minority_class(data);
}

std::vector<double> parse_ratios(const std::vector<std::string>& items) {
    std::vector<double> out;
    for (const auto& s : items) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(s, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        require(used == s.size() && !s.empty(), "invalid missing ratio '" + s + "'");
        out.push_back(v);
    }
    return out;
}

// Flat key=value config: keys are long flag names without dashes. Keys that
// belong to the selected subcommand are inserted right after it, global keys
// before it. Explicit flags win.
std::vector<std::string> expand_config(CLI::App& app, std::vector<std::string> args) {
    std::string path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
        if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
    }
    if (path.empty()) return args;
    std::istringstream text(slurp(path));
    std::size_t sub_pos = args.size();
    CLI::App* sub = nullptr;
    for (std::size_t i = 1; i < args.size() && !sub; ++i)
        for (CLI::App* s : app.get_subcommands({}))
            if (s->get_name() == args[i]) {
                sub = s;
                sub_pos = i;
            }
    std::vector<std::string> global_tokens;
    std::vector<std::string> sub_tokens;
    std::string line;
    int lineno = 0;
    while (std::getline(text, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        require(eq != std::string::npos, path + ":" + std::to_string(lineno) + ": expected key=value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const std::string flag = "--" + key;
        if (sub && sub->get_option_no_throw(flag)) {
            const CLI::Option* opt = sub->get_option_no_throw(flag);
            if (opt->get_type_size() == 0) {
                if (value == "true" || value == "1" || value == "yes") sub_tokens.push_back(flag);
            } else {
                sub_tokens.push_back(flag + "=" + value);
            }
        } else if (app.get_option_no_throw(flag)) {
            global_tokens.push_back(flag + "=" + value);
        } else {
            throw Error(path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
        }
    }
    std::vector<std::string> out(args.begin(), args.begin() + 1);
    out.insert(out.end(), global_tokens.begin(), global_tokens.end());
    if (sub) {
        out.insert(out.end(), args.begin() + 1, args.begin() + static_cast<std::ptrdiff_t>(sub_pos) + 1);
        out.insert(out.end(), sub_tokens.begin(), sub_tokens.end());
        out.insert(out.end(), args.begin() + static_cast<std::ptrdiff_t>(sub_pos) + 1, args.end());
    } else {
        out.insert(out.end(), args.begin() + 1, args.end());
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    auto logger = spdlog::stderr_color_mt("mlsvm");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%l] %v");
    spdlog::set_level(spdlog::level::warn);

    CLI::App app{"Multilevel (weighted) SVM training and evaluation on data with missing values"};
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config, "Flat key=value file; keys are flag names without dashes");
    app.add_option("--seed", g.seed, "Seed for every random choice")->capture_default_str();
    app.add_option("--workers", g.workers, "Concurrent workers")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_flag("-v,--verbose", g.verbose, "More logging (repeat for debug)");
    app.add_option("--timing", g.timing, "Print wall-clock columns")
        ->check(CLI::IsMember({"on", "off"}))
        ->capture_default_str();

    // impute
    auto* imp = app.add_subcommand("impute", "Complete a dataset with missing cells");
    InputOptions imp_in;
    PipelineOptions imp_p;
    std::string imp_out;
    std::string imp_method = "rem";
    std::string imp_diag;
    add_input_options(imp, imp_in);
    imp->add_option("--out", imp_out, "Completed dataset")->required();
    imp->add_option("--method", imp_method, "Imputation method")
        ->check(CLI::IsMember({"rem", "mean"}))
        ->capture_default_str();
    imp->add_option("--diagnostics", imp_diag, "Write diagnostics here instead of the error stream");
    add_imputer_options(imp, imp_p);

    // train
    auto* tr = app.add_subcommand("train", "Train a classifier and write a model file");
    InputOptions tr_in;
    PipelineOptions tr_p;
    std::string tr_model;
    std::string tr_report;
    std::string tr_method = "mlsvm";
    std::optional<int> tr_positive;
    add_input_options(tr, tr_in);
    tr->add_option("--model", tr_model, "Model file to write")->required();
    tr->add_option("--report", tr_report, "Training report (default: <model>.report)");
    tr->add_option("--method", tr_method, "Training method")
        ->check(CLI::IsMember({"svm", "wsvm", "mlsvm", "mlwsvm"}))
        ->capture_default_str();
    tr->add_option("--positive-class", tr_positive, "Label trained as +1 against the rest (default: minority)");
    add_pipeline_options(tr, tr_p);

    // predict
    auto* pr = app.add_subcommand("predict", "Predict with a model file");
    InputOptions pr_in;
    std::string pr_model;
    std::string pr_out;
    add_input_options(pr, pr_in);
    pr->add_option("--model", pr_model, "Model file")->required();
    pr->add_option("--out", pr_out, "Predictions (default: standard output)");

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "Stratified cross-validation of one or more methods");
    InputOptions ev_in;
    PipelineOptions ev_p;
    std::vector<std::string> ev_methods = {"mlsvm"};
    int ev_folds = 10;
    std::optional<int> ev_positive;
    bool ev_ova = false;
    double ev_ratio = 0.0;
    std::string ev_out;
    std::string ev_name = "data";
    add_input_options(ev, ev_in);
    ev->add_option("--methods", ev_methods, "Methods")
        ->delimiter(',')
        ->check(CLI::IsMember({"svm", "wsvm", "mlsvm", "mlwsvm"}))
        ->capture_default_str();
    ev->add_option("--folds", ev_folds, "Cross-validation folds")->capture_default_str();
    ev->add_option("--positive-class", ev_positive, "Label evaluated as +1 (default: minority)");
    ev->add_flag("--one-against-all", ev_ova, "One binary evaluation per class (first method only)");
    ev->add_option("--missing-ratio", ev_ratio, "Fraction of cells to blank before evaluation")->capture_default_str();
    ev->add_option("--dataset-name", ev_name, "Name printed in the dataset column")->capture_default_str();
    ev->add_option("--out", ev_out, "Also write the table here");
    add_pipeline_options(ev, ev_p);

    // benchmark
    auto* bm = app.add_subcommand("benchmark", "Methods x missing ratios benchmark tables");
    InputOptions bm_in;
    PipelineOptions bm_p;
    std::vector<std::string> bm_methods = {"svm", "wsvm", "mlsvm", "mlwsvm"};
    std::vector<std::string> bm_ratios = {"0.05", "0.10", "0.20", "0.40"};
    int bm_folds = 10;
    std::optional<int> bm_positive;
    std::string bm_out;
    std::string bm_name;
    add_input_options(bm, bm_in);
    bm->add_option("--methods", bm_methods, "Methods")
        ->delimiter(',')
        ->check(CLI::IsMember({"svm", "wsvm", "mlsvm", "mlwsvm"}))
        ->capture_default_str();
    bm->add_option("--ratios", bm_ratios, "Missing-value ratios")->delimiter(',')->capture_default_str();
    bm->add_option("--folds", bm_folds, "Cross-validation folds")->capture_default_str();
    bm->add_option("--positive-class", bm_positive, "Label evaluated as +1 (default: minority)");
    bm->add_option("--dataset-name", bm_name, "Name printed in the dataset column (default: file stem)");
    bm->add_option("--out", bm_out, "Also write the tables here");
    add_pipeline_options(bm, bm_p);

    try {
        std::vector<std::string> args(argv, argv + argc);
        args = expand_config(app, args);
        std::vector<const char*> cargs;
        for (const auto& a : args) cargs.push_back(a.c_str());
        try {
            app.parse(static_cast<int>(cargs.size()), cargs.data());
        } catch (const CLI::CallForHelp& e) {
            return app.exit(e);
        } catch (const CLI::CallForAllHelp& e) {
            return app.exit(e);
        } catch (const CLI::ParseError& e) {
            app.exit(e);
            return 1;
        }
        if (g.verbose == 1) spdlog::set_level(spdlog::level::info);
        if (g.verbose >= 2) spdlog::set_level(spdlog::level::debug);

        if (*imp) {
            const Dataset data = load_dataset(imp_in.path, imp_in.load());
            PipelineConfig cfg = imp_p.build(g);
            cfg.imputer = parse_imputer(imp_method);
            std::ostringstream diag;
            const Dataset done = impute_with(data, cfg.resolved(), &diag);
            if (imp_method == "mean") diag << "method mean\n";
            std::ostringstream out;
            write_dataset(out, done, imp_in.load());
            if (!imp_diag.empty())
                commit(imp_diag, diag.str());
            else
                std::cerr << diag.str();
            commit(imp_out, out.str());
            return 0;
        }

        if (*tr) {
            const Dataset raw = load_dataset(tr_in.path, tr_in.load());
            const PipelineConfig cfg = tr_p.build(g).resolved();
            const int positive = resolve_positive(raw, tr_positive);
            std::string negative = "rest";
            if (raw.class_names.size() == 2)
                for (int c : raw.class_names)
                    if (c != positive) negative = std::to_string(c);
            const NormalizationStats norm = fit_normalization(raw);
            const Dataset data = impute_with(apply_normalization(raw, norm), cfg, nullptr);
            const Method method = parse_method(tr_method);
            const TrainedModel tm = train_method(data, positive, method, cfg);

            std::ostringstream model;
            write_bundle(model, positive, negative, norm, column_means(data), tm.classifier);
            std::ostringstream report;
            report << "method " << tr_method << "\npositive_class " << positive << '\n';
            if (tm.report) write_report(report, *tm.report, g.timing_on());
            if (tm.ud) {
                char buf[128];
                std::snprintf(buf, sizeof buf, "C %.6g\ngamma %.6g\nscore %.6f\nevaluations %zu\n", tm.ud->c,
                              tm.ud->gamma, tm.ud->score, tm.ud->evaluations);
                report << buf << "stage\tC\tgamma\tscore\treused\n";
                for (const auto& c : tm.ud->candidates) {
                    std::snprintf(buf, sizeof buf, "%d\t%.6g\t%.6g\t%.6f\t%d\n", c.stage, c.c, c.gamma, c.score,
                                  c.reused ? 1 : 0);
                    report << buf;
                }
            }
            if (g.timing_on()) {
                char buf[64];
                std::snprintf(buf, sizeof buf, "train_seconds %.3f\n", tm.seconds);
                report << buf;
            }
            commit(tr_model, model.str());
            commit(tr_report.empty() ? tr_model + ".report" : tr_report, report.str());
            return 0;
        }

        if (*pr) {
            std::istringstream model_text(slurp(pr_model));
            const Bundle b = read_bundle(model_text);
            const Dataset raw = load_dataset(pr_in.path, pr_in.load());
            require(raw.cols() == b.norm.size(), "data has " + std::to_string(raw.cols()) +
                                                     " features, model expects " + std::to_string(b.norm.size()));
            const Dataset data = fill_missing(apply_normalization(raw, b.norm), b.fill);
            const Prediction p = b.clf.predict(data.features);
            std::ostringstream out;
            out << "label,margin\n";
            ConfusionMatrix cm;
            for (std::size_t i = 0; i < p.labels.size(); ++i) {
                out << (p.labels[i] > 0 ? std::to_string(b.positive) : b.negative) << ',' << fmt17(p.margins[i])
                    << '\n';
                cm.add(raw.labels[i] == b.positive ? 1 : -1, p.labels[i]);
            }
            const Metrics m = compute_metrics(cm);
            spdlog::info("accuracy {:.4f}, SN {:.4f}, SP {:.4f}, G-mean {:.4f}", m.acc, m.sn, m.sp, m.gmean);
            commit(pr_out, out.str());
            return 0;
        }

        if (*ev) {
            Dataset data = load_dataset(ev_in.path, ev_in.load());
            const PipelineConfig cfg = ev_p.build(g);
            require(ev_ratio >= 0.0 && ev_ratio < 1.0, "--missing-ratio must lie in [0, 1)");
            if (ev_ratio > 0.0) data = inject_missing(data, ev_ratio, g.seed * 1000003);
            std::vector<Method> methods;
            for (const auto& m : ev_methods) methods.push_back(parse_method(m));
            std::ostringstream out;
            if (ev_ova) {
                const auto reports = one_against_all(data, methods.front(), ev_folds, cfg);
                write_class_table(out, reports);
            } else {
                const int positive = resolve_positive(data, ev_positive);
                const auto reports = run_cv(data, positive, methods, ev_folds, cfg);
                write_long_header(out, g.timing_on());
                for (const auto& r : reports) {
                    BenchmarkCell cell;
                    cell.ratio = ev_ratio;
                    cell.method = r.method;
                    cell.metrics = r.mean;
                    cell.gmean_std = r.gmean_std;
                    cell.seconds = r.seconds;
                    write_long_row(out, ev_name, cell, g.timing_on());
                    for (const auto& w : r.warnings) spdlog::warn("{}: {}", method_name(r.method), w);
                }
            }
            std::cout << out.str() << std::flush;
            if (!ev_out.empty()) commit(ev_out, out.str());
            return 0;
        }

        if (*bm) {
            const Dataset data = load_dataset(bm_in.path, bm_in.load());
            BenchmarkPlan plan;
            plan.dataset = bm_name.empty() ? std::filesystem::path(bm_in.path).stem().string() : bm_name;
            plan.ratios = parse_ratios(bm_ratios);
            plan.methods.clear();
            for (const auto& m : bm_methods) plan.methods.push_back(parse_method(m));
            plan.folds = bm_folds;
            plan.positive_class = bm_positive;
            plan.validate();
            const PipelineConfig cfg = bm_p.build(g);
            const bool timing = g.timing_on();
            std::ostringstream all;
            write_long_header(all, timing);
            write_long_header(std::cout, timing);
            std::cout << std::flush;
            const auto table = run_benchmark(data, plan, cfg, [&](const BenchmarkCell& c) {
                write_long_row(std::cout, plan.dataset, c, timing);
                std::cout << std::flush;
                write_long_row(all, plan.dataset, c, timing);
                if (!c.error.empty()) spdlog::error("r_mv {} {}: {}", c.ratio, method_name(c.method), c.error);
            });
            std::ostringstream tail;
            tail << "\n# G-mean\n";
            write_gmean_table(tail, table);
            if (timing) {
                tail << "\n# seconds\n";
                write_timing_table(tail, table);
            }
            for (const auto& w : table.warnings) spdlog::warn("{}", w);
            std::cout << tail.str() << std::flush;
            all << tail.str();
            if (!bm_out.empty()) commit(bm_out, all.str());
            bool failed = false;
            for (const auto& c : table.cells) failed = failed || !c.error.empty();
            return failed ? 1 : 0;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const InvariantError& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return 2;
    } catch (const std::bad_alloc&) {
        std::cerr << "error: out of memory\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
