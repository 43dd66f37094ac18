#include "mlsvm/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_set>

#include "mlsvm/error.hpp"

namespace mlsvm {

namespace {

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split(std::string_view line, char delim) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(delim, start);
        out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        const std::size_t start = i;
        while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        if (i > start) out.push_back(line.substr(start, i - start));
    }
    return out;
}

bool parse_double(std::string_view s, double& value) {
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    if (s.empty()) return false;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    return ec == std::errc() && ptr == s.data() + s.size();
}

bool parse_label(std::string_view s, int& label) {
    double v = 0.0;
    if (!parse_double(s, v) || !std::isfinite(v) || v != std::floor(v)) return false;
    if (std::abs(v) > static_cast<double>(std::numeric_limits<int>::max())) return false;
    label = static_cast<int>(v);
    return true;
}

std::string line_error(std::size_t line_no, const std::string& what) {
    return "line " + std::to_string(line_no) + ": " + what;
}

Dataset read_delimited(std::istream& in, const LoadOptions& opt) {
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::vector<std::string_view>> rows;
    std::vector<std::size_t> row_lines;
    std::vector<std::string> storage;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        storage.push_back(line);
        row_lines.push_back(line_no);
    }
    require(!storage.empty(), "empty file");
    for (const auto& s : storage) rows.push_back(split(s, opt.delimiter));

    bool has_header = opt.header == HeaderMode::Present;
    if (opt.header == HeaderMode::Auto) {
        for (auto field : rows.front()) {
            double v = 0.0;
            if (field != opt.missing_token && !parse_double(field, v)) {
                has_header = true;
                break;
            }
        }
    }
    const std::size_t arity = rows.front().size();
    require(arity >= 2, line_error(row_lines.front(), "need at least one feature and a label"));

    std::size_t label_col = 0;
    if (const auto* name = std::get_if<std::string>(&opt.label_column)) {
        require(has_header, "label column '" + *name + "' requested but the file has no header");
        const auto& header = rows.front();
        const auto it = std::find(header.begin(), header.end(), std::string_view(*name));
        require(it != header.end(), "unknown label column '" + *name + "'");
        label_col = static_cast<std::size_t>(it - header.begin());
    } else {
        const int idx = std::get<int>(opt.label_column);
        const long resolved = idx < 0 ? static_cast<long>(arity) + idx : idx;
        require(resolved >= 0 && resolved < static_cast<long>(arity),
                "unknown label column index " + std::to_string(idx));
        label_col = static_cast<std::size_t>(resolved);
    }

    const std::size_t first = has_header ? 1 : 0;
    require(rows.size() > first, "empty file");
    const std::size_t n = rows.size() - first;
    const std::size_t nf = arity - 1;

    Dataset data;
    data.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(nf));
    data.missing = MaskMatrix::Constant(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(nf), false);
    data.labels.resize(n);
    if (has_header) {
        for (std::size_t c = 0; c < arity; ++c)
            if (c != label_col) data.feature_names.emplace_back(rows.front()[c]);
    }
    for (std::size_t r = 0; r < n; ++r) {
        const auto& fields = rows[first + r];
        const std::size_t ln = row_lines[first + r];
        if (fields.size() != arity) {
            throw Error(line_error(ln, "expected " + std::to_string(arity) + " fields, found " +
                                           std::to_string(fields.size())));
        }
        if (!parse_label(fields[label_col], data.labels[r]))
            throw Error(line_error(ln, "label '" + std::string(fields[label_col]) + "' is not an integer"));
        std::size_t f = 0;
        for (std::size_t c = 0; c < arity; ++c) {
            if (c == label_col) continue;
            const auto ri = static_cast<Eigen::Index>(r);
            const auto fi = static_cast<Eigen::Index>(f);
            if (fields[c] == opt.missing_token) {
                data.features(ri, fi) = kMissing;
                data.missing(ri, fi) = true;
            } else {
                double v = 0.0;
                if (!parse_double(fields[c], v) || !std::isfinite(v))
                    throw Error(line_error(ln, "cannot parse value '" + std::string(fields[c]) + "'"));
                data.features(ri, fi) = v;
            }
            ++f;
        }
    }
    data.class_names = distinct_labels(data.labels);
    return data;
}

Dataset read_sparse(std::istream& in, const LoadOptions& opt) {
    struct Entry {
        std::size_t index;
        double value;
    };
    std::vector<std::vector<Entry>> entries;
    std::vector<int> labels;
    std::size_t max_index = 0;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto tokens = split_ws(line);
        if (tokens.empty()) continue;
        int label = 0;
        if (!parse_label(tokens.front(), label))
            throw Error(line_error(line_no, "label '" + std::string(tokens.front()) + "' is not an integer"));
        std::vector<Entry> row;
        for (std::size_t t = 1; t < tokens.size(); ++t) {
            const auto colon = tokens[t].find(':');
            if (colon == std::string_view::npos)
                throw Error(line_error(line_no, "expected index:value, found '" + std::string(tokens[t]) + "'"));
            double idx = 0.0;
            double value = 0.0;
            if (!parse_double(tokens[t].substr(0, colon), idx) || idx < 1 || idx != std::floor(idx) ||
                !parse_double(tokens[t].substr(colon + 1), value) || !std::isfinite(value))
                throw Error(line_error(line_no, "malformed entry '" + std::string(tokens[t]) + "'"));
            const auto index = static_cast<std::size_t>(idx);
            max_index = std::max(max_index, index);
            row.push_back({index - 1, value});
        }
        entries.push_back(std::move(row));
        labels.push_back(label);
    }
    require(!entries.empty(), "empty file");
    const std::size_t nf = opt.sparse_features > 0 ? opt.sparse_features : max_index;
    require(max_index <= nf, "feature index " + std::to_string(max_index) + " exceeds feature count " +
                                 std::to_string(nf));
    require(nf > 0, "sparse file has no features");

    Dataset data;
    const auto n = static_cast<Eigen::Index>(entries.size());
    data.features = Matrix::Zero(n, static_cast<Eigen::Index>(nf));
    data.missing = MaskMatrix::Constant(n, static_cast<Eigen::Index>(nf), false);
    for (Eigen::Index r = 0; r < n; ++r)
        for (const auto& e : entries[static_cast<std::size_t>(r)])
            data.features(r, static_cast<Eigen::Index>(e.index)) = e.value;
    data.labels = std::move(labels);
    data.class_names = distinct_labels(data.labels);
    return data;
}

void format_double(std::ostream& out, double v) {
    char buf[64];
    const int len = std::snprintf(buf, sizeof buf, "%.17g", v);
    out.write(buf, len);
}

}  // namespace

std::size_t Dataset::missing_count() const {
    return static_cast<std::size_t>(missing.count());
}

bool Dataset::row_has_missing(RowIndex r) const {
    return missing.row(static_cast<Eigen::Index>(r)).any();
}

void Dataset::validate() const {
    ensure(features.rows() == missing.rows() && features.cols() == missing.cols(),
           "features and missing mask differ in shape");
    ensure(labels.size() == rows(), "label count differs from row count");
    ensure(class_names == distinct_labels(labels), "class_names out of sync with labels");
    ensure(feature_names.empty() || feature_names.size() == cols(), "feature name count differs from columns");
}

Dataset Dataset::subset(std::span<const RowIndex> rows) const {
    Dataset out;
    const auto n = static_cast<Eigen::Index>(rows.size());
    out.features.resize(n, features.cols());
    out.missing.resize(n, features.cols());
    out.labels.reserve(rows.size());
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto r = static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)]);
        out.features.row(i) = features.row(r);
        out.missing.row(i) = missing.row(r);
        out.labels.push_back(labels[static_cast<std::size_t>(r)]);
    }
    std::unordered_set<int> present(out.labels.begin(), out.labels.end());
    for (int c : class_names)
        if (present.count(c)) out.class_names.push_back(c);
    out.feature_names = feature_names;
    return out;
}

Dataset Dataset::from_matrix(Matrix features, std::vector<int> labels) {
    require(static_cast<std::size_t>(features.rows()) == labels.size(), "label count differs from row count");
    Dataset d;
    d.missing = MaskMatrix::Constant(features.rows(), features.cols(), false);
    d.features = std::move(features);
    d.labels = std::move(labels);
    d.class_names = distinct_labels(d.labels);
    return d;
}

std::vector<int> distinct_labels(std::span<const int> labels) {
    std::vector<int> out;
    std::unordered_set<int> seen;
    for (int l : labels)
        if (seen.insert(l).second) out.push_back(l);
    return out;
}

Dataset read_dataset(std::istream& in, const LoadOptions& options) {
    return options.format == FileFormat::Sparse ? read_sparse(in, options) : read_delimited(in, options);
}

Dataset load_dataset(const std::string& path, const LoadOptions& options) {
    std::ifstream in(path);
    require(static_cast<bool>(in), "cannot open '" + path + "'");
    try {
        return read_dataset(in, options);
    } catch (const Error& e) {
        throw Error(path + ": " + e.what());
    }
}

void write_dataset(std::ostream& out, const Dataset& data, const LoadOptions& options) {
    const auto n = data.features.rows();
    const auto nf = data.features.cols();
    if (options.format == FileFormat::Sparse) {
        require(!data.has_missing(), "sparse format cannot represent missing cells");
        for (Eigen::Index r = 0; r < n; ++r) {
            out << data.labels[static_cast<std::size_t>(r)];
            for (Eigen::Index c = 0; c < nf; ++c) {
                const double v = data.features(r, c);
                if (v == 0.0) continue;
                out << ' ' << (c + 1) << ':';
                format_double(out, v);
            }
            out << '\n';
        }
        return;
    }
    const char d = options.delimiter;
    if (!data.feature_names.empty()) {
        for (const auto& name : data.feature_names) out << name << d;
        out << "label\n";
    }
    for (Eigen::Index r = 0; r < n; ++r) {
        for (Eigen::Index c = 0; c < nf; ++c) {
            if (data.missing(r, c))
                out << options.missing_token;
            else
                format_double(out, data.features(r, c));
            out << d;
        }
        out << data.labels[static_cast<std::size_t>(r)] << '\n';
    }
}

void write_dataset(const std::string& path, const Dataset& data, const LoadOptions& options) {
    std::ostringstream buffer;
    write_dataset(buffer, data, options);
    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), "cannot write '" + path + "'");
    out << buffer.str();
    require(static_cast<bool>(out), "write to '" + path + "' failed");
}

NormalizationStats fit_normalization(const Dataset& data, std::span<const RowIndex> rows) {
    require(!rows.empty(), "normalization needs at least one row");
    const std::size_t nf = data.cols();
    NormalizationStats stats;
    stats.mean.assign(nf, 0.0);
    stats.std.assign(nf, 1.0);
    stats.constant.assign(nf, false);
    for (std::size_t f = 0; f < nf; ++f) {
        const auto fi = static_cast<Eigen::Index>(f);
        double sum = 0.0;
        std::size_t count = 0;
        for (RowIndex r : rows) {
            const auto ri = static_cast<Eigen::Index>(r);
            if (data.missing(ri, fi)) continue;
            sum += data.features(ri, fi);
            ++count;
        }
        if (count == 0) {
            const std::string name = f < data.feature_names.size() ? " '" + data.feature_names[f] + "'" : "";
            throw Error("feature " + std::to_string(f) + name + " has no observed values");
        }
        const double mean = sum / static_cast<double>(count);
        double ss = 0.0;
        for (RowIndex r : rows) {
            const auto ri = static_cast<Eigen::Index>(r);
            if (data.missing(ri, fi)) continue;
            const double d = data.features(ri, fi) - mean;
            ss += d * d;
        }
        stats.mean[f] = mean;
        const double sd = count > 1 ? std::sqrt(ss / static_cast<double>(count - 1)) : 0.0;
        if (sd <= 1e-12 * std::max(1.0, std::abs(mean))) {
            stats.constant[f] = true;
            stats.std[f] = 1.0;
        } else {
            stats.std[f] = sd;
        }
    }
    return stats;
}

NormalizationStats fit_normalization(const Dataset& data) {
    std::vector<RowIndex> all(data.rows());
    std::iota(all.begin(), all.end(), RowIndex{0});
    return fit_normalization(data, all);
}

Dataset apply_normalization(const Dataset& data, const NormalizationStats& stats) {
    require(stats.size() == data.cols(), "normalization has " + std::to_string(stats.size()) +
                                             " features, data has " + std::to_string(data.cols()));
    Dataset out = data;
    for (Eigen::Index c = 0; c < out.features.cols(); ++c) {
        const auto f = static_cast<std::size_t>(c);
        for (Eigen::Index r = 0; r < out.features.rows(); ++r) {
            if (out.missing(r, c)) continue;
            out.features(r, c) = stats.constant[f] ? 0.0 : (out.features(r, c) - stats.mean[f]) / stats.std[f];
        }
    }
    return out;
}

Dataset inject_missing(const Dataset& data, double rate, std::uint64_t seed) {
    require(rate >= 0.0 && rate < 1.0, "missing rate must lie in [0, 1)");
    const std::size_t total = data.rows() * data.cols();
    const auto count = static_cast<std::size_t>(std::floor(rate * static_cast<double>(total) + 1e-9));
    Dataset out = data;
    if (count == 0) return out;
    std::vector<std::size_t> cells(total);
    std::iota(cells.begin(), cells.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    // Partial Fisher-Yates: the first `count` slots become a uniform sample.
    for (std::size_t i = 0; i < count; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, total - 1);
        std::swap(cells[i], cells[pick(rng)]);
    }
    const std::size_t nf = data.cols();
    for (std::size_t i = 0; i < count; ++i) {
        const auto r = static_cast<Eigen::Index>(cells[i] / nf);
        const auto c = static_cast<Eigen::Index>(cells[i] % nf);
        out.missing(r, c) = true;
        out.features(r, c) = kMissing;
    }
    return out;
}

std::vector<int> BinaryView::signs(std::span<const RowIndex> rows) const {
    std::vector<int> out;
    out.reserve(rows.size());
    for (RowIndex r : rows) out.push_back(y(r));
    return out;
}

std::size_t BinaryView::count_positive(std::span<const RowIndex> rows) const {
    return static_cast<std::size_t>(
        std::count_if(rows.begin(), rows.end(), [&](RowIndex r) { return y(r) > 0; }));
}

BinaryView binary_view(const Dataset& data, int positive_class) {
    require(std::find(data.class_names.begin(), data.class_names.end(), positive_class) != data.class_names.end(),
            "class " + std::to_string(positive_class) + " does not occur in the labels");
    BinaryView view;
    view.base = &data;
    view.positive_class = positive_class;
    for (RowIndex r = 0; r < data.rows(); ++r)
        (data.labels[r] == positive_class ? view.rows_positive : view.rows_negative).push_back(r);
    return view;
}

int minority_class(const Dataset& data) {
    require(!data.class_names.empty(), "dataset has no classes");
    int best = data.class_names.front();
    std::size_t best_count = std::numeric_limits<std::size_t>::max();
    for (int c : data.class_names) {
        const auto n = static_cast<std::size_t>(std::count(data.labels.begin(), data.labels.end(), c));
        if (n < best_count) {
            best = c;
            best_count = n;
        }
    }
    return best;
}

}  // namespace mlsvm
