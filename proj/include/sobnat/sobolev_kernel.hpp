#pragma once
// Closed-form reproducing kernel of the Sobolev space H_s(R^n) at s = n + 3,
//
//     d_x(y) = C_n * exp(-r) * (1 + r),   r = |x - y|,
//
// plus Gram assembly over a batch and its jittered Cholesky inverse.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <string>

#include "errors.hpp"
#include "linalg.hpp"
#include "parallel.hpp"

namespace sobnat {

enum class ConstantMode {
    // Dimension constants as derived by residues: 1/4 for n = 1, the simplified
    // odd-n constant (n-1)! / (pi^{(n+1)/2} 2^{n+4}), and the even-n product form.
    exact_dimension_constant,
    // C_n = 1. The constant only rescales the metric, which the learning rate absorbs.
    unit_constant,
    // The constant that makes d_x the inverse Fourier transform of (1+|xi|^2)^{-s/2}
    // in every dimension: 1 / (2^{n+1} pi^{(n-1)/2} Gamma((n+3)/2)).
    fourier_normalized,
};

inline const char* to_string(ConstantMode m) {
    switch (m) {
        case ConstantMode::exact_dimension_constant: return "exact_dimension_constant";
        case ConstantMode::unit_constant: return "unit_constant";
        case ConstantMode::fourier_normalized: return "fourier_normalized";
    }
    return "?";
}

inline ConstantMode parse_constant_mode(const std::string& s) {
    for (auto m : {ConstantMode::exact_dimension_constant, ConstantMode::unit_constant, ConstantMode::fourier_normalized})
        if (s == to_string(m)) return m;
    if (s == "exact") return ConstantMode::exact_dimension_constant;
    if (s == "unit") return ConstantMode::unit_constant;
    if (s == "fourier") return ConstantMode::fourier_normalized;
    throw InvalidArgument("unknown constant mode '" + s + "'");
}

struct KernelSpec {
    std::size_t input_dim = 1;
    std::size_t sobolev_order = 4;
    ConstantMode constant_mode = ConstantMode::unit_constant;
    double input_scale = 20.0;
    double jitter = 1e-8;
    // Multiplies C_n. Left at 1 except by mutation checks of the verification harness.
    double constant_factor = 1.0;

    static KernelSpec for_dim(std::size_t n, ConstantMode mode = ConstantMode::unit_constant) {
        KernelSpec s;
        s.input_dim = n;
        s.sobolev_order = n + 3;
        s.constant_mode = mode;
        return s;
    }

    void validate() const {
        if (input_dim < 1) throw InvalidArgument("KernelSpec: input_dim must be >= 1");
        if (sobolev_order != input_dim + 3) {
            throw UnsupportedOrder("KernelSpec: only s = n + 3 has a closed form (n = " + std::to_string(input_dim) +
                                   ", s = " + std::to_string(sobolev_order) + ")");
        }
        if (!(input_scale > 0.0)) throw InvalidArgument("KernelSpec: input_scale must be positive");
        if (!(jitter >= 0.0)) throw InvalidArgument("KernelSpec: jitter must be non-negative");
        if (!(constant_factor > 0.0)) throw InvalidArgument("KernelSpec: constant_factor must be positive");
    }
};

namespace detail {

inline double factorial(std::size_t k) {
    double f = 1.0;
    for (std::size_t i = 2; i <= k; ++i) f *= static_cast<double>(i);
    return f;
}

// Even n: 2^{n/2+5} (3!)^2 P (n-1)! / (pi^{n/2+1} 6! (2n-2)!), where P is the
// integration-by-parts product prod_{k=1}^{n/2-1} (s/2 - k) at s = n + 3.
inline double even_dimension_constant(std::size_t n) {
    const double s = static_cast<double>(n + 3);
    double p = 1.0;
    for (std::size_t k = 1; k + 1 <= n / 2; ++k) p *= s / 2.0 - static_cast<double>(k);
    const double nd = static_cast<double>(n);
    return std::pow(2.0, nd / 2.0 + 5.0) * 36.0 * p * factorial(n - 1) /
           (std::pow(std::numbers::pi, nd / 2.0 + 1.0) * 720.0 * factorial(2 * n - 2));
}

}  // namespace detail

inline double base_dimension_constant(const KernelSpec& spec) {
    spec.validate();
    const std::size_t n = spec.input_dim;
    const double nd = static_cast<double>(n);
    switch (spec.constant_mode) {
        case ConstantMode::unit_constant: return 1.0;
        case ConstantMode::fourier_normalized:
            return 1.0 / (std::pow(2.0, nd + 1.0) * std::pow(std::numbers::pi, (nd - 1.0) / 2.0) *
                          std::tgamma((nd + 3.0) / 2.0));
        case ConstantMode::exact_dimension_constant:
            // n = 1: d(0) = binom(2A-2, A-1) 2^{1-2A} at A = 2.
            if (n == 1) return 0.25;
            if (n % 2 == 1) {
                return detail::factorial(n - 1) / (std::pow(std::numbers::pi, (nd + 1.0) / 2.0) * std::pow(2.0, nd + 4.0));
            }
            return detail::even_dimension_constant(n);
    }
    return 1.0;
}

inline double dimension_constant(const KernelSpec& spec) { return spec.constant_factor * base_dimension_constant(spec); }

// d(r) for a distance r >= 0 already measured in scaled coordinates.
inline double point_kernel(double r, const KernelSpec& spec) {
    if (!(r >= 0.0)) throw InvalidArgument("point_kernel: distance must be non-negative");
    return dimension_constant(spec) * std::exp(-r) * (1.0 + r);
}

// Divides every coordinate by spec.input_scale.
inline DenseMatrix scaled_points(const DenseMatrix& x, const KernelSpec& spec) {
    spec.validate();
    return x * (1.0 / spec.input_scale);
}

class GramMatrix {
public:
    // Kernel values K (no jitter); rows of `points` are the batch points.
    GramMatrix(DenseMatrix points, DenseMatrix values, double jitter_rel, bool identity = false)
        : points_(std::move(points)), values_(std::move(values)), identity_(identity) {
        if (!values_.square()) throw DimensionMismatch("GramMatrix: values must be square");
        const std::size_t b = values_.rows();
        diag_ = b == 0 ? 0.0 : values_(0, 0);
        if (identity_) return;
        // Jitter escalation: x10 up to three times, then give up.
        double rel = jitter_rel;
        for (int attempt = 0; attempt < 4; ++attempt) {
            try {
                chol_.emplace(add_diagonal(values_, rel * diag_), kPivotFloor * diag_);
                jitter_used_ = rel * diag_;
                smallest_pivot_ = chol_->smallest_pivot();
                return;
            } catch (const NotPositiveDefinite&) {
                if (rel == 0.0) break;
                rel *= 10.0;
            }
        }
        throw DegenerateGram("gram: Cholesky failed after jitter escalation (batch of " + std::to_string(b) +
                             " points, duplicate or near-duplicate inputs?)");
    }

    [[nodiscard]] std::size_t size() const noexcept { return values_.rows(); }
    [[nodiscard]] const DenseMatrix& points() const noexcept { return points_; }
    [[nodiscard]] const DenseMatrix& values() const noexcept { return values_; }
    // (K + jitter I)^{-1}.
    [[nodiscard]] DenseMatrix inverse() const { return identity_ ? DenseMatrix::identity(size()) : chol_->inverse(); }
    // L^{-1} x with L L^T = K + jitter I, so that x^T K^{-1} y = whiten(x)^T whiten(y)
    // stays positive semidefinite however ill-conditioned K is.
    [[nodiscard]] DenseMatrix whiten(const DenseMatrix& x) const {
        if (x.rows() != size()) throw DimensionMismatch("gram whiten: " + shape_str(x) + " for batch " + std::to_string(size()));
        return identity_ ? x : chol_->forward_substitute(x);
    }
    // (K + jitter I)^{-1} x.
    [[nodiscard]] DenseMatrix solve(const DenseMatrix& x) const {
        if (x.rows() != size()) throw DimensionMismatch("gram solve: " + shape_str(x) + " for batch " + std::to_string(size()));
        return identity_ ? x : chol_->solve(x);
    }
    [[nodiscard]] double jitter_used() const noexcept { return jitter_used_; }
    [[nodiscard]] double smallest_pivot() const noexcept { return smallest_pivot_; }
    [[nodiscard]] bool is_identity() const noexcept { return identity_; }

private:
    static constexpr double kPivotFloor = 1e-14;

    DenseMatrix points_;
    DenseMatrix values_;
    std::optional<Cholesky> chol_;
    double diag_ = 0.0;
    double jitter_used_ = 0.0;
    double smallest_pivot_ = 1.0;
    bool identity_ = false;
};

// K = I stand-in: turns the projected metric into Gauss-Newton.
inline GramMatrix identity_gram(std::size_t batch) {
    return GramMatrix(DenseMatrix(batch, 0), DenseMatrix::identity(batch), 0.0, true);
}

// Gram from explicit values, jitter relative to K[0][0].
inline GramMatrix gram_from_values(DenseMatrix values, double jitter_rel = 1e-8) {
    const std::size_t b = values.rows();
    return GramMatrix(DenseMatrix(b, 0), std::move(values), jitter_rel);
}

inline DenseMatrix kernel_matrix(const DenseMatrix& points, const KernelSpec& spec) {
    spec.validate();
    if (points.cols() != spec.input_dim) {
        throw DimensionMismatch("gram: points have " + std::to_string(points.cols()) + " coordinates, spec expects " +
                                std::to_string(spec.input_dim));
    }
    const std::size_t b = points.rows();
    const double c = dimension_constant(spec);
    DenseMatrix k(b, b);
    parallel_for(b, [&](std::size_t i) {
        for (std::size_t j = 0; j < b; ++j) {
            const double r = distance(points.row(i), points.row(j));
            k(i, j) = c * std::exp(-r) * (1.0 + r);
        }
    });
    return k;
}

// K[a][b] = d(|x_a - x_b|). Points must already be divided by input_scale.
inline GramMatrix gram(const DenseMatrix& points, const KernelSpec& spec) {
    if (points.rows() == 0) throw InvalidArgument("gram: need at least one point");
    return GramMatrix(points, kernel_matrix(points, spec), spec.jitter);
}

}  // namespace sobnat
