#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>

#include "errors.hpp"
#include "linalg.hpp"

namespace sobnat {

enum class LossKind { squared, softmax_cross_entropy };

inline const char* to_string(LossKind k) {
    return k == LossKind::squared ? "squared" : "softmax_cross_entropy";
}

inline LossKind parse_loss_kind(const std::string& s) {
    if (s == "squared") return LossKind::squared;
    if (s == "softmax_cross_entropy" || s == "xent") return LossKind::softmax_cross_entropy;
    throw InvalidArgument("unknown loss '" + s + "'");
}

inline Vector softmax(std::span<const double> z) {
    Vector p(z.begin(), z.end());
    const double zmax = *std::max_element(p.begin(), p.end());
    double sum = 0.0;
    for (auto& v : p) {
        v = std::exp(v - zmax);
        sum += v;
    }
    for (auto& v : p) v /= sum;
    return p;
}

// Squared: 0.5 |z - y|^2. Softmax cross-entropy: -sum_c y_c log softmax(z)_c,
// with y a one-hot (or any probability) vector.
inline double loss_value(LossKind kind, std::span<const double> z, std::span<const double> y) {
    if (z.size() != y.size()) throw DimensionMismatch("loss: output/target length mismatch");
    if (kind == LossKind::squared) {
        double s = 0.0;
        for (std::size_t c = 0; c < z.size(); ++c) s += (z[c] - y[c]) * (z[c] - y[c]);
        return 0.5 * s;
    }
    const double zmax = *std::max_element(z.begin(), z.end());
    double lse = 0.0;
    for (double v : z) lse += std::exp(v - zmax);
    lse = zmax + std::log(lse);
    double s = 0.0;
    for (std::size_t c = 0; c < z.size(); ++c) s -= y[c] * (z[c] - lse);
    return s;
}

// dL/dz: z - y, or softmax(z) - y.
inline Vector loss_gradient(LossKind kind, std::span<const double> z, std::span<const double> y) {
    if (z.size() != y.size()) throw DimensionMismatch("loss: output/target length mismatch");
    Vector g(z.size());
    if (kind == LossKind::squared) {
        for (std::size_t c = 0; c < z.size(); ++c) g[c] = z[c] - y[c];
        return g;
    }
    const Vector p = softmax(z);
    double ysum = 0.0;
    for (double v : y) ysum += v;
    for (std::size_t c = 0; c < z.size(); ++c) g[c] = ysum * p[c] - y[c];
    return g;
}

// Mean loss over the rows of outputs/targets.
inline double batch_loss(LossKind kind, const DenseMatrix& outputs, const DenseMatrix& targets) {
    if (outputs.rows() != targets.rows() || outputs.cols() != targets.cols()) {
        throw DimensionMismatch("batch_loss: outputs " + shape_str(outputs) + " vs targets " + shape_str(targets));
    }
    if (outputs.rows() == 0) return 0.0;
    double s = 0.0;
    for (std::size_t b = 0; b < outputs.rows(); ++b) s += loss_value(kind, outputs.row(b), targets.row(b));
    return s / static_cast<double>(outputs.rows());
}

// Row b holds d(mean loss)/d(output_b) = loss_gradient / B.
inline DenseMatrix batch_residuals(LossKind kind, const DenseMatrix& outputs, const DenseMatrix& targets) {
    if (outputs.rows() != targets.rows() || outputs.cols() != targets.cols()) {
        throw DimensionMismatch("batch_residuals: outputs " + shape_str(outputs) + " vs targets " + shape_str(targets));
    }
    DenseMatrix r(outputs.rows(), outputs.cols());
    const double inv_b = outputs.rows() == 0 ? 0.0 : 1.0 / static_cast<double>(outputs.rows());
    for (std::size_t b = 0; b < outputs.rows(); ++b) {
        const Vector g = loss_gradient(kind, outputs.row(b), targets.row(b));
        for (std::size_t c = 0; c < g.size(); ++c) r(b, c) = g[c] * inv_b;
    }
    return r;
}

}  // namespace sobnat
