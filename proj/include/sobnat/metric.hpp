#pragma once
// Pullback metric estimates and the gradients built from them.
//
// Jacobians use the layout of param_jacobian: J is P x (B m) with column b*m + c
// holding dphi^c(x_b)/dtheta.

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "errors.hpp"
#include "linalg.hpp"
#include "network.hpp"
#include "quadrature.hpp"
#include "sobolev_kernel.hpp"

namespace sobnat {

enum class MetricProvenance { rkhs_projected, gauss_newton, exact_quadrature };

struct PullbackMetric {
    DenseMatrix values;  // P x P, symmetric PSD
    double damping = 0.0;
    MetricProvenance provenance = MetricProvenance::rkhs_projected;

    [[nodiscard]] std::size_t dim() const noexcept { return values.rows(); }
    [[nodiscard]] DenseMatrix damped() const { return add_diagonal(values, damping); }
};

namespace detail {

inline std::size_t outputs_per_point(const DenseMatrix& j, std::size_t batch) {
    if (batch == 0 || j.cols() % batch != 0) {
        throw DimensionMismatch("metric: Jacobian has " + std::to_string(j.cols()) + " columns for a batch of " +
                                std::to_string(batch));
    }
    return j.cols() / batch;
}

// Columns of J for output component c: P x B.
inline DenseMatrix component_columns(const DenseMatrix& j, std::size_t m, std::size_t c) {
    const std::size_t b = j.cols() / m;
    DenseMatrix out(j.rows(), b);
    for (std::size_t i = 0; i < j.rows(); ++i)
        for (std::size_t r = 0; r < b; ++r) out(i, r) = j(i, r * m + c);
    return out;
}

}  // namespace detail

// g_ij = sum_c sum_{a,b} dphi^c/dtheta_i(x_a) Kinv_ab dphi^c/dtheta_j(x_b).
// With an identity gram this is exactly J J^T (Gauss-Newton).
inline PullbackMetric estimate_metric(const DenseMatrix& j, const GramMatrix& gram, double damping = 0.0) {
    const std::size_t b = gram.size();
    const std::size_t m = detail::outputs_per_point(j, b);
    PullbackMetric g;
    g.damping = damping;
    if (gram.is_identity()) {
        g.values = matmul_nt(j, j);
        g.provenance = MetricProvenance::gauss_newton;
    } else {
        g.values = DenseMatrix(j.rows(), j.rows());
        for (std::size_t c = 0; c < m; ++c) {
            const DenseMatrix w = gram.whiten(transpose(detail::component_columns(j, m, c)));
            g.values += matmul_tn(w, w);
        }
        g.provenance = MetricProvenance::rkhs_projected;
    }
    symmetrize(g.values);
    return g;
}

// Solves (g + damping I) v = euclid_grad.
inline Vector natural_gradient(const PullbackMetric& metric, std::span<const double> euclid_grad) {
    if (euclid_grad.size() != metric.dim()) throw DimensionMismatch("natural_gradient: gradient length");
    return Cholesky(metric.damped()).solve(euclid_grad);
}

// Row-major stacking of B x m residuals into a (B m)-vector matching J's columns.
inline Vector stack_residuals(const DenseMatrix& residuals) { return residuals.data(); }

// Tangent coefficients of the projected ambient gradient:
// c = (g + damping I)^{-1} sum_i (dL/dz(x_i) . dphi/dtheta(x_i)).
inline Vector project_empirical_gradient(const DenseMatrix& j, const GramMatrix& gram, const DenseMatrix& residuals,
                                         double damping = 0.0) {
    if (residuals.rows() != gram.size() || residuals.rows() * residuals.cols() != j.cols()) {
        throw DimensionMismatch("project_empirical_gradient: residuals " + shape_str(residuals) + " vs J " +
                                shape_str(j));
    }
    const PullbackMetric g = estimate_metric(j, gram, damping);
    return natural_gradient(g, matvec(j, stack_residuals(residuals)));
}

// Theta(x_a, x_b)_{ce} = sum_i dphi^c/dtheta_i(x_a) dphi^e/dtheta_i(x_b).
inline DenseMatrix ntk_kernel(const DenseMatrix& j, std::size_t m, std::size_t a, std::size_t b) {
    if (m == 0 || j.cols() % m != 0 || (a + 1) * m > j.cols() || (b + 1) * m > j.cols()) {
        throw DimensionMismatch("ntk_kernel: point index out of range");
    }
    DenseMatrix theta(m, m);
    for (std::size_t i = 0; i < j.rows(); ++i)
        for (std::size_t c = 0; c < m; ++c)
            for (std::size_t e = 0; e < m; ++e) theta(c, e) += j(i, a * m + c) * j(i, b * m + e);
    return theta;
}

// Whole-batch NTK: (B m) x (B m) matrix J^T J.
inline DenseMatrix ntk_gram(const DenseMatrix& j) { return matmul_tn(j, j); }

// S(grad) coefficients: J r with no metric inverse.
inline Vector ntk_surrogate_gradient(const DenseMatrix& j, const DenseMatrix& residuals) {
    if (residuals.rows() * residuals.cols() != j.cols()) {
        throw DimensionMismatch("ntk_surrogate_gradient: residuals " + shape_str(residuals) + " vs J " +
                                shape_str(j));
    }
    return matvec(j, stack_residuals(residuals));
}

struct InputMeasure {
    enum class Kind { gaussian, box };
    Kind kind = Kind::gaussian;
    double lo = -1.0;  // box only
    double hi = 1.0;

    static InputMeasure standard_normal() { return {}; }
    static InputMeasure uniform_box(double lo, double hi) { return {Kind::box, lo, hi}; }
};

struct QuadratureBudget {
    std::size_t max_parameters = 12;
    std::size_t max_nodes = 1'000'000;
};

// Tensor-product nodes (rows) and probability weights for the measure.
inline std::pair<DenseMatrix, Vector> tensor_rule(const InputMeasure& measure, std::size_t dim,
                                                  std::size_t nodes_per_dim) {
    QuadratureRule rule;
    if (measure.kind == InputMeasure::Kind::gaussian) {
        rule = gauss_hermite(nodes_per_dim);
    } else {
        if (!(measure.hi > measure.lo)) throw InvalidArgument("tensor_rule: empty box");
        rule = gauss_legendre(nodes_per_dim);
        const double half = 0.5 * (measure.hi - measure.lo);
        const double mid = 0.5 * (measure.hi + measure.lo);
        for (auto& x : rule.nodes) x = mid + half * x;
        for (auto& w : rule.weights) w *= 0.5;
    }
    std::size_t total = 1;
    for (std::size_t d = 0; d < dim; ++d) total *= nodes_per_dim;
    DenseMatrix x(total, dim);
    Vector w(total, 1.0);
    for (std::size_t k = 0; k < total; ++k) {
        std::size_t rem = k;
        for (std::size_t d = 0; d < dim; ++d) {
            const std::size_t idx = rem % nodes_per_dim;
            rem /= nodes_per_dim;
            x(k, d) = rule.nodes[idx];
            w[k] *= rule.weights[idx];
        }
    }
    return {std::move(x), std::move(w)};
}

// L2 pullback metric g_ij = E_mu[sum_c dphi^c/dtheta_i dphi^c/dtheta_j] by
// tensor Gauss-Hermite (standard normal) or Gauss-Legendre (uniform box)
// quadrature. `subset` picks parameters (flattened indices); empty means all.
inline PullbackMetric exact_pullback_quadrature(const MlpNetwork& net, const InputMeasure& measure,
                                                std::size_t nodes_per_dim, std::vector<std::size_t> subset = {},
                                                const QuadratureBudget& budget = {}) {
    if (subset.empty()) {
        subset.resize(net.parameter_count());
        for (std::size_t i = 0; i < subset.size(); ++i) subset[i] = i;
    }
    for (auto i : subset)
        if (i >= net.parameter_count()) throw InvalidArgument("exact_pullback_quadrature: parameter index out of range");
    if (subset.size() > budget.max_parameters) {
        throw BudgetExceeded("exact_pullback_quadrature: " + std::to_string(subset.size()) + " parameters > " +
                             std::to_string(budget.max_parameters));
    }
    const double total = std::pow(static_cast<double>(nodes_per_dim), static_cast<double>(net.input_dim()));
    if (total > static_cast<double>(budget.max_nodes)) {
        throw BudgetExceeded("exact_pullback_quadrature: " + std::to_string(static_cast<std::size_t>(total)) +
                             " quadrature nodes > " + std::to_string(budget.max_nodes));
    }
    const auto [x, w] = tensor_rule(measure, net.input_dim(), nodes_per_dim);
    const DenseMatrix j = param_jacobian(net, x);
    const std::size_t m = net.output_dim();
    const std::size_t p = subset.size();
    PullbackMetric g;
    g.provenance = MetricProvenance::exact_quadrature;
    g.values = DenseMatrix(p, p);
    for (std::size_t a = 0; a < p; ++a)
        for (std::size_t b = a; b < p; ++b) {
            double s = 0.0;
            for (std::size_t k = 0; k < w.size(); ++k)
                for (std::size_t c = 0; c < m; ++c) s += w[k] * j(subset[a], k * m + c) * j(subset[b], k * m + c);
            g.values(a, b) = s;
            g.values(b, a) = s;
        }
    return g;
}

}  // namespace sobnat
