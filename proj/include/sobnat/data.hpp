#pragma once
// Datasets: the two-moons generator, CSV ingestion and export, train-split
// normalization and the input down-scaling used by the Sobolev kernel.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"
#include "linalg.hpp"
#include "rng.hpp"

namespace sobnat {

struct Dataset {
    DenseMatrix features;             // N x n
    DenseMatrix targets;              // N x m; one-hot rows for classification
    std::vector<std::size_t> labels;  // class indices, empty for regression targets
    std::size_t num_classes = 0;

    std::vector<std::size_t> train;  // row indices
    std::vector<std::size_t> test;

    Vector feature_mean;  // filled by normalize()
    Vector feature_std;
    bool normalized = false;
    double scale_applied = 1.0;
    bool scaled = false;

    [[nodiscard]] std::size_t size() const noexcept { return features.rows(); }
    [[nodiscard]] std::size_t input_dim() const noexcept { return features.cols(); }
    [[nodiscard]] std::size_t output_dim() const noexcept { return targets.cols(); }
    [[nodiscard]] bool is_classification() const noexcept { return !labels.empty(); }
};

inline DenseMatrix select_rows(const DenseMatrix& m, const std::vector<std::size_t>& idx) {
    DenseMatrix out(idx.size(), m.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) {
        if (idx[r] >= m.rows()) throw InvalidArgument("select_rows: index out of range");
        auto src = m.row(idx[r]);
        std::copy(src.begin(), src.end(), out.row(r).begin());
    }
    return out;
}

inline std::vector<std::size_t> select(const std::vector<std::size_t>& v, const std::vector<std::size_t>& idx) {
    std::vector<std::size_t> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(v.at(i));
    return out;
}

inline DenseMatrix one_hot(const std::vector<std::size_t>& labels, std::size_t classes) {
    DenseMatrix t(labels.size(), classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= classes) throw InvalidArgument("one_hot: label out of range");
        t(i, labels[i]) = 1.0;
    }
    return t;
}

inline std::size_t argmax(std::span<const double> v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

// Fraction of rows whose argmax output equals the label.
inline double accuracy(const DenseMatrix& outputs, const std::vector<std::size_t>& labels) {
    if (outputs.rows() != labels.size()) throw DimensionMismatch("accuracy: outputs and labels differ in count");
    if (labels.empty()) return 0.0;
    std::size_t hit = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) hit += argmax(outputs.row(i)) == labels[i] ? 1 : 0;
    return static_cast<double>(hit) / static_cast<double>(labels.size());
}

// Two interleaved half circles: the outer moon (cos t, sin t), t in [0, pi],
// labelled 0, and the inner moon (1 - cos t, 1 - sin t - 0.5) labelled 1,
// plus isotropic Gaussian noise. Row order is shuffled; everything comes from
// the "data" stream of `seed`. All rows start in the train split.
inline Dataset gen_two_moons(std::size_t count, double noise, std::uint64_t seed) {
    if (count < 2) throw InvalidArgument("gen_two_moons: need at least two points");
    if (!(noise >= 0.0)) throw InvalidArgument("gen_two_moons: noise must be non-negative");
    const std::size_t n_outer = count / 2;
    const std::size_t n_inner = count - n_outer;
    Rng rng = make_rng(seed, "data");

    auto angle = [](std::size_t i, std::size_t n) {
        return n == 1 ? 0.0 : std::numbers::pi * static_cast<double>(i) / static_cast<double>(n - 1);
    };
    DenseMatrix x(count, 2);
    std::vector<std::size_t> y(count);
    for (std::size_t i = 0; i < n_outer; ++i) {
        const double t = angle(i, n_outer);
        x(i, 0) = std::cos(t);
        x(i, 1) = std::sin(t);
        y[i] = 0;
    }
    for (std::size_t i = 0; i < n_inner; ++i) {
        const double t = angle(i, n_inner);
        x(n_outer + i, 0) = 1.0 - std::cos(t);
        x(n_outer + i, 1) = 1.0 - std::sin(t) - 0.5;
        y[n_outer + i] = 1;
    }
    if (noise > 0.0)
        for (auto& v : x.data()) v += noise * standard_normal(rng);

    std::vector<std::size_t> order(count);
    for (std::size_t i = 0; i < count; ++i) order[i] = i;
    shuffle(order, rng);

    Dataset ds;
    ds.features = select_rows(x, order);
    ds.labels = select(y, order);
    ds.num_classes = 2;
    ds.targets = one_hot(ds.labels, 2);
    ds.train = std::move(order);
    std::sort(ds.train.begin(), ds.train.end());
    return ds;
}

// Random split of all rows (stream "split"); both index lists come out sorted.
inline Dataset train_test_split(Dataset ds, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
        throw InvalidArgument("train_test_split: test_fraction must be in [0, 1)");
    }
    std::vector<std::size_t> order(ds.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng = make_rng(seed, "split");
    shuffle(order, rng);
    const auto n_test = static_cast<std::size_t>(std::floor(test_fraction * static_cast<double>(ds.size())));
    ds.test.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
    ds.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
    std::sort(ds.test.begin(), ds.test.end());
    std::sort(ds.train.begin(), ds.train.end());
    return ds;
}

// Per-feature standardization with statistics from the train split only
// (population std). Constant columns keep std 1.
inline Dataset normalize(Dataset ds) {
    if (ds.normalized) throw InvalidArgument("normalize: dataset already normalized");
    const std::size_t n = ds.input_dim();
    std::vector<std::size_t> rows = ds.train;
    if (rows.empty()) {
        rows.resize(ds.size());
        for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    }
    if (rows.empty()) throw InvalidArgument("normalize: empty dataset");
    ds.feature_mean.assign(n, 0.0);
    ds.feature_std.assign(n, 1.0);
    const double count = static_cast<double>(rows.size());
    for (std::size_t j = 0; j < n; ++j) {
        double mean = 0.0;
        for (auto r : rows) mean += ds.features(r, j);
        mean /= count;
        double var = 0.0;
        for (auto r : rows) {
            const double d = ds.features(r, j) - mean;
            var += d * d;
        }
        var /= count;
        const double sd = std::sqrt(var);
        ds.feature_mean[j] = mean;
        ds.feature_std[j] = sd > 1e-12 * std::max(1.0, std::abs(mean)) ? sd : 1.0;
    }
    for (std::size_t i = 0; i < ds.size(); ++i)
        for (std::size_t j = 0; j < n; ++j) ds.features(i, j) = (ds.features(i, j) - ds.feature_mean[j]) / ds.feature_std[j];
    ds.normalized = true;
    return ds;
}

// Divides every feature by `factor`. A dataset is scaled at most once.
inline Dataset scale_inputs(Dataset ds, double factor) {
    if (!(factor > 0.0)) throw InvalidArgument("scale_inputs: factor must be positive");
    if (ds.scaled) throw InvalidArgument("scale_inputs: dataset already scaled by " + std::to_string(ds.scale_applied));
    ds.features *= 1.0 / factor;
    ds.scale_applied = factor;
    ds.scaled = true;
    return ds;
}

enum class CsvSchema {
    // label, feature_1, ..., feature_n
    label_first,
    // feature_1, ..., feature_n, target_1, ..., target_m
    targets_last_m,
};

struct CsvOptions {
    CsvSchema schema = CsvSchema::label_first;
    std::size_t target_count = 1;  // m, targets_last_m only
    bool skip_header = false;
};

inline CsvSchema parse_csv_schema(const std::string& s) {
    if (s == "label_first") return CsvSchema::label_first;
    if (s == "targets_last_m" || s == "targets_last") return CsvSchema::targets_last_m;
    throw InvalidArgument("unknown CSV schema '" + s + "'");
}

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
}

inline double parse_field(std::string_view field, std::size_t line, std::size_t column) {
    const std::string_view f = trim(field);
    if (f.empty()) throw ParseError(line, column, "empty field");
    const char* begin = f.data();
    if (*begin == '+') ++begin;
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(begin, f.data() + f.size(), v);
    if (ec != std::errc() || ptr != f.data() + f.size()) {
        throw ParseError(line, column, "not a number: '" + std::string(f) + "'");
    }
    if (!std::isfinite(v)) throw ParseError(line, column, "non-finite value");
    return v;
}

}  // namespace detail

// Comma-separated, '.' decimals, LF or CRLF line ends. Blank lines are skipped.
inline Dataset parse_csv(std::istream& in, const CsvOptions& opts = {}) {
    std::vector<std::vector<double>> rows;
    std::size_t width = 0;
    std::size_t line_no = 0;
    std::string line;
    bool header_pending = opts.skip_header;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (detail::trim(line).empty()) continue;
        if (header_pending) {
            header_pending = false;
            continue;
        }
        std::vector<double> values;
        std::size_t start = 0;
        std::size_t column = 1;
        while (true) {
            const std::size_t comma = line.find(',', start);
            const std::string_view field(line.data() + start, (comma == std::string::npos ? line.size() : comma) - start);
            values.push_back(detail::parse_field(field, line_no, column));
            if (comma == std::string::npos) break;
            start = comma + 1;
            ++column;
        }
        if (rows.empty()) {
            width = values.size();
            const std::size_t needed = opts.schema == CsvSchema::label_first ? 2 : opts.target_count + 1;
            if (width < needed) {
                throw ParseError(line_no, width, "need at least " + std::to_string(needed) + " columns");
            }
        } else if (values.size() != width) {
            throw InconsistentWidth(line_no, width, values.size());
        }
        if (opts.schema == CsvSchema::label_first) {
            const double label = values[0];
            if (label < 0.0 || label != std::floor(label) || label > 1e6) {
                throw ParseError(line_no, 1, "label must be a non-negative integer");
            }
        }
        rows.push_back(std::move(values));
    }
    if (rows.empty()) throw ParseError(line_no == 0 ? 1 : line_no, 1, "no data rows");

    Dataset ds;
    const std::size_t n_rows = rows.size();
    if (opts.schema == CsvSchema::label_first) {
        ds.features = DenseMatrix(n_rows, width - 1);
        ds.labels.resize(n_rows);
        for (std::size_t i = 0; i < n_rows; ++i) {
            ds.labels[i] = static_cast<std::size_t>(rows[i][0]);
            for (std::size_t j = 1; j < width; ++j) ds.features(i, j - 1) = rows[i][j];
            ds.num_classes = std::max(ds.num_classes, ds.labels[i] + 1);
        }
        ds.targets = one_hot(ds.labels, ds.num_classes);
    } else {
        const std::size_t m = opts.target_count;
        const std::size_t n = width - m;
        ds.features = DenseMatrix(n_rows, n);
        ds.targets = DenseMatrix(n_rows, m);
        for (std::size_t i = 0; i < n_rows; ++i) {
            for (std::size_t j = 0; j < n; ++j) ds.features(i, j) = rows[i][j];
            for (std::size_t c = 0; c < m; ++c) ds.targets(i, c) = rows[i][n + c];
        }
    }
    ds.train.resize(n_rows);
    for (std::size_t i = 0; i < n_rows; ++i) ds.train[i] = i;
    return ds;
}

inline Dataset load_csv(const std::string& path, const CsvOptions& opts = {}) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidArgument("load_csv: cannot open '" + path + "'");
    return parse_csv(in, opts);
}

// Shortest text that parses back to the same double.
inline std::string format_real(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline void write_csv(std::ostream& out, const Dataset& ds, const CsvOptions& opts = {}) {
    if (opts.schema == CsvSchema::label_first && !ds.is_classification()) {
        throw InvalidArgument("write_csv: label_first needs class labels");
    }
    for (std::size_t i = 0; i < ds.size(); ++i) {
        std::string line;
        if (opts.schema == CsvSchema::label_first) line = std::to_string(ds.labels[i]);
        for (std::size_t j = 0; j < ds.input_dim(); ++j) {
            if (!line.empty() || j > 0) line += ',';
            line += format_real(ds.features(i, j));
        }
        if (opts.schema == CsvSchema::targets_last_m)
            for (std::size_t c = 0; c < ds.output_dim(); ++c) line += ',' + format_real(ds.targets(i, c));
        out << line << '\n';
    }
}

inline void write_csv(const std::string& path, const Dataset& ds, const CsvOptions& opts = {}) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidArgument("write_csv: cannot open '" + path + "'");
    write_csv(out, ds, opts);
}

}  // namespace sobnat
