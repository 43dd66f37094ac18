#include "mlsvm/svm.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "mlsvm/error.hpp"

namespace mlsvm {

ClassWeights ClassWeights::inverse_frequency(double c, std::size_t n_plus, std::size_t n_minus) {
    require(n_plus > 0 && n_minus > 0, "class weights need both classes");
    const double n = static_cast<double>(n_plus + n_minus);
    return {c * n / (2.0 * static_cast<double>(n_plus)), c * n / (2.0 * static_cast<double>(n_minus))};
}

namespace {

/// f(x) for every row of `points`, computed in blocks of kernel rows.
Vector decisions(const SvmModel& m, const Matrix& points) {
    Vector f = Vector::Constant(points.rows(), m.bias);
    if (m.size() == 0) return f;
    Vector coef(static_cast<Eigen::Index>(m.size()));
    for (std::size_t i = 0; i < m.size(); ++i) coef(static_cast<Eigen::Index>(i)) = m.sv_alpha[i] * m.sv_labels[i];
    const Vector sv_norms = m.support_vectors.rowwise().squaredNorm();
    constexpr Eigen::Index block = 256;
    for (Eigen::Index r0 = 0; r0 < points.rows(); r0 += block) {
        const Eigen::Index nb = std::min(block, points.rows() - r0);
        const auto p = points.middleRows(r0, nb);
        Eigen::MatrixXd k = p * m.support_vectors.transpose();
        const Vector pn = p.rowwise().squaredNorm();
        k = ((2.0 * k.array()).colwise() - pn.array());
        k = ((k.array().rowwise() - sv_norms.transpose().array()).min(0.0) * m.kernel.gamma).exp();
        f.segment(r0, nb) += k * coef;
    }
    return f;
}

std::string dimension_error(std::size_t got, std::size_t want) {
    return "points have " + std::to_string(got) + " features, model expects " + std::to_string(want);
}

}  // namespace

double SvmModel::decision(std::span<const double> x) const {
    if (x.size() != dimension()) throw Error(dimension_error(x.size(), dimension()));
    const Matrix p = Eigen::Map<const Matrix>(x.data(), 1, static_cast<Eigen::Index>(x.size()));
    return decisions(*this, p)(0);
}

Prediction SvmModel::predict(const Matrix& points) const {
    if (static_cast<std::size_t>(points.cols()) != dimension())
        throw Error(dimension_error(static_cast<std::size_t>(points.cols()), dimension()));
    const Vector f = decisions(*this, points);
    Prediction out;
    out.margins.assign(f.data(), f.data() + f.size());
    out.labels.reserve(out.margins.size());
    for (double v : out.margins) out.labels.push_back(v > 0.0 ? 1 : -1);
    return out;
}

Prediction predict(const SvmModel& model, const Matrix& points) { return model.predict(points); }

SvmModel train_svm(const BinaryView& view, const ClassWeights& weights, const KernelParams& kernel,
                   const SolverConfig& config, std::span<const RowIndex> rows) {
    require(view.base != nullptr, "train_svm: view has no dataset");
    require(weights.c_plus > 0.0 && weights.c_minus > 0.0, "class penalties must be positive");
    require(kernel.gamma > 0.0, "RBF gamma must be positive");
    const Dataset& data = *view.base;
    std::vector<RowIndex> all;
    if (rows.empty()) {
        all.resize(data.rows());
        std::iota(all.begin(), all.end(), RowIndex{0});
        rows = all;
    }
    Matrix points(static_cast<Eigen::Index>(rows.size()), data.features.cols());
    std::vector<int> y(rows.size());
    std::vector<double> upper(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(rows[i]);
        if (data.row_has_missing(rows[i]))
            throw Error("train_svm: row " + std::to_string(rows[i]) + " has missing values");
        if (!data.features.row(r).allFinite())
            throw Error("train_svm: row " + std::to_string(rows[i]) + " is not finite");
        points.row(static_cast<Eigen::Index>(i)) = data.features.row(r);
        y[i] = view.y(rows[i]);
        upper[i] = y[i] > 0 ? weights.c_plus : weights.c_minus;
    }
    const RbfKernelSource source(points, kernel.gamma);
    const DualSolution sol = solve_dual(source, y, upper, config);

    SvmModel model;
    model.kernel = kernel;
    model.weights = weights;
    model.bias = sol.bias;
    model.iterations = sol.iterations;
    model.training_size = rows.size();
    std::vector<Eigen::Index> keep;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (sol.alpha[i] <= 0.0) continue;
        keep.push_back(static_cast<Eigen::Index>(i));
        model.sv_labels.push_back(y[i]);
        model.sv_alpha.push_back(sol.alpha[i]);
        model.sv_rows.push_back(rows[i]);
    }
    model.support_vectors = points(keep, Eigen::all);
    return model;
}

double dual_objective(const SvmModel& model) {
    const auto n = model.size();
    const auto d = model.dimension();
    double quad = 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sum += model.sv_alpha[i];
        const double* xi = model.support_vectors.row(static_cast<Eigen::Index>(i)).data();
        for (std::size_t j = 0; j < n; ++j) {
            const double* xj = model.support_vectors.row(static_cast<Eigen::Index>(j)).data();
            quad += model.sv_alpha[i] * model.sv_alpha[j] * model.sv_labels[i] * model.sv_labels[j] *
                    rbf({xi, d}, {xj, d}, model.kernel.gamma);
        }
    }
    return sum - 0.5 * quad;
}

double dual_objective(const SvmModel& model, const BinaryView& view) {
    require(view.base != nullptr, "dual_objective: view has no dataset");
    require(model.size() == 0 || model.dimension() == view.base->cols(), "dual_objective: dimension mismatch");
    return dual_objective(model);
}

namespace {

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <class T>
T expect_field(std::istream& in, const std::string& key) {
    std::string k;
    T value{};
    if (!(in >> k) || k != key || !(in >> value))
        throw Error("model file: expected '" + key + "'");
    return value;
}

}  // namespace

void write_model(std::ostream& out, const SvmModel& model) {
    out << "mlsvm-model 1\n";
    out << "gamma " << fmt17(model.kernel.gamma) << '\n';
    out << "c_plus " << fmt17(model.weights.c_plus) << '\n';
    out << "c_minus " << fmt17(model.weights.c_minus) << '\n';
    out << "bias " << fmt17(model.bias) << '\n';
    out << "features " << model.dimension() << '\n';
    out << "support_vectors " << model.size() << '\n';
    for (std::size_t i = 0; i < model.size(); ++i) {
        out << model.sv_labels[i] << ' ' << fmt17(model.sv_alpha[i]);
        for (Eigen::Index c = 0; c < model.support_vectors.cols(); ++c)
            out << ' ' << fmt17(model.support_vectors(static_cast<Eigen::Index>(i), c));
        out << '\n';
    }
}

SvmModel read_model(std::istream& in) {
    std::string magic;
    int version = 0;
    if (!(in >> magic >> version) || magic != "mlsvm-model" || version != 1)
        throw Error("model file: not an mlsvm-model v1 file");
    SvmModel m;
    m.kernel.gamma = expect_field<double>(in, "gamma");
    m.weights.c_plus = expect_field<double>(in, "c_plus");
    m.weights.c_minus = expect_field<double>(in, "c_minus");
    m.bias = expect_field<double>(in, "bias");
    const auto nf = expect_field<std::size_t>(in, "features");
    const auto nsv = expect_field<std::size_t>(in, "support_vectors");
    m.support_vectors.resize(static_cast<Eigen::Index>(nsv), static_cast<Eigen::Index>(nf));
    m.sv_labels.resize(nsv);
    m.sv_alpha.resize(nsv);
    for (std::size_t i = 0; i < nsv; ++i) {
        if (!(in >> m.sv_labels[i] >> m.sv_alpha[i])) throw Error("model file: truncated support vector list");
        for (std::size_t c = 0; c < nf; ++c)
            if (!(in >> m.support_vectors(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c))))
                throw Error("model file: truncated support vector list");
    }
    require(m.kernel.gamma > 0.0, "model file: gamma must be positive");
    return m;
}

}  // namespace mlsvm
