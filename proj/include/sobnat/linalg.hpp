#pragma once
// Dense double-precision linear algebra shared by every other header.
//
// DenseMatrix is row-major. vec() follows the usual column-stacking
// convention, so vec(S V A) = (A^T kron S) vec(V).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace sobnat {

using Vector = std::vector<double>;

class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw DimensionMismatch("DenseMatrix: data length " + std::to_string(data_.size()) +
                                    " != " + std::to_string(rows_) + "x" + std::to_string(cols_));
        }
    }
    DenseMatrix(std::initializer_list<std::initializer_list<double>> rows) {
        rows_ = rows.size();
        cols_ = rows_ == 0 ? 0 : rows.begin()->size();
        data_.reserve(rows_ * cols_);
        for (const auto& r : rows) {
            if (r.size() != cols_) throw DimensionMismatch("DenseMatrix: ragged initializer");
            data_.insert(data_.end(), r.begin(), r.end());
        }
    }

    static DenseMatrix identity(std::size_t n) {
        DenseMatrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }
    static DenseMatrix column(std::span<const double> v) {
        return DenseMatrix(v.size(), 1, std::vector<double>(v.begin(), v.end()));
    }
    static DenseMatrix diagonal(std::span<const double> v) {
        DenseMatrix m(v.size(), v.size());
        for (std::size_t i = 0; i < v.size(); ++i) m(i, i) = v[i];
        return m;
    }

    [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
    [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
    [[nodiscard]] bool square() const noexcept { return rows_ == cols_; }

    double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
    const double& operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

    [[nodiscard]] std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
    [[nodiscard]] std::span<const double> row(std::size_t i) const noexcept {
        return {data_.data() + i * cols_, cols_};
    }
    [[nodiscard]] Vector col(std::size_t j) const {
        Vector out(rows_);
        for (std::size_t i = 0; i < rows_; ++i) out[i] = (*this)(i, j);
        return out;
    }

    [[nodiscard]] std::vector<double>& data() noexcept { return data_; }
    [[nodiscard]] const std::vector<double>& data() const noexcept { return data_; }

    DenseMatrix& operator+=(const DenseMatrix& o) {
        require_same_shape(o, "+=");
        for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
        return *this;
    }
    DenseMatrix& operator-=(const DenseMatrix& o) {
        require_same_shape(o, "-=");
        for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= o.data_[k];
        return *this;
    }
    DenseMatrix& operator*=(double s) noexcept {
        for (auto& x : data_) x *= s;
        return *this;
    }

    bool operator==(const DenseMatrix&) const = default;

private:
    void require_same_shape(const DenseMatrix& o, const char* op) const {
        if (rows_ != o.rows_ || cols_ != o.cols_) {
            throw DimensionMismatch(std::string("DenseMatrix ") + op + ": shape mismatch");
        }
    }

    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline std::string shape_str(const DenseMatrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

inline DenseMatrix operator+(DenseMatrix a, const DenseMatrix& b) { return a += b; }
inline DenseMatrix operator-(DenseMatrix a, const DenseMatrix& b) { return a -= b; }
inline DenseMatrix operator*(DenseMatrix a, double s) { return a *= s; }
inline DenseMatrix operator*(double s, DenseMatrix a) { return a *= s; }

inline DenseMatrix transpose(const DenseMatrix& a) {
    DenseMatrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

inline DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols() != b.rows()) {
        throw DimensionMismatch("matmul: " + shape_str(a) + " * " + shape_str(b));
    }
    DenseMatrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto ci = c.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            auto bk = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += aik * bk[j];
        }
    }
    return c;
}

inline DenseMatrix operator*(const DenseMatrix& a, const DenseMatrix& b) { return matmul(a, b); }

// a^T * b without forming the transpose.
inline DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.rows() != b.rows()) {
        throw DimensionMismatch("matmul_tn: " + shape_str(a) + "^T * " + shape_str(b));
    }
    DenseMatrix c(a.cols(), b.cols());
    for (std::size_t k = 0; k < a.rows(); ++k) {
        auto ak = a.row(k);
        auto bk = b.row(k);
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double aki = ak[i];
            if (aki == 0.0) continue;
            auto ci = c.row(i);
            for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += aki * bk[j];
        }
    }
    return c;
}

// a * b^T.
inline DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols() != b.cols()) {
        throw DimensionMismatch("matmul_nt: " + shape_str(a) + " * " + shape_str(b) + "^T");
    }
    DenseMatrix c(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto ai = a.row(i);
        for (std::size_t j = 0; j < b.rows(); ++j) {
            auto bj = b.row(j);
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += ai[k] * bj[k];
            c(i, j) = s;
        }
    }
    return c;
}

inline Vector matvec(const DenseMatrix& a, std::span<const double> x) {
    if (a.cols() != x.size()) {
        throw DimensionMismatch("matvec: " + shape_str(a) + " * vector(" + std::to_string(x.size()) + ")");
    }
    Vector y(a.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto ai = a.row(i);
        double s = 0.0;
        for (std::size_t k = 0; k < x.size(); ++k) s += ai[k] * x[k];
        y[i] = s;
    }
    return y;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DimensionMismatch("dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double distance(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DimensionMismatch("distance: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

inline double frobenius_norm(const DenseMatrix& a) {
    double s = 0.0;
    for (double x : a.data()) s += x * x;
    return std::sqrt(s);
}

inline double max_abs(const DenseMatrix& a) {
    double m = 0.0;
    for (double x : a.data()) m = std::max(m, std::abs(x));
    return m;
}

inline double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DimensionMismatch("max_abs_diff: " + shape_str(a) + " vs " + shape_str(b));
    }
    double m = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a.data()[k] - b.data()[k]));
    return m;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DimensionMismatch("max_abs_diff: length mismatch");
    double m = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
    return m;
}

inline double trace(const DenseMatrix& a) {
    double t = 0.0;
    for (std::size_t i = 0; i < std::min(a.rows(), a.cols()); ++i) t += a(i, i);
    return t;
}

// |M_ij - M_ji| <= tol * max(1, |M_ij|) for every pair.
inline bool is_symmetric(const DenseMatrix& a, double tol = 1e-12) {
    if (!a.square()) return false;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = i + 1; j < a.cols(); ++j)
            if (std::abs(a(i, j) - a(j, i)) > tol * std::max(1.0, std::abs(a(i, j)))) return false;
    return true;
}

inline void symmetrize(DenseMatrix& a) {
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = i + 1; j < a.cols(); ++j) {
            const double m = 0.5 * (a(i, j) + a(j, i));
            a(i, j) = m;
            a(j, i) = m;
        }
}

inline DenseMatrix add_diagonal(DenseMatrix a, double value) {
    for (std::size_t i = 0; i < std::min(a.rows(), a.cols()); ++i) a(i, i) += value;
    return a;
}

inline DenseMatrix outer(std::span<const double> a, std::span<const double> b) {
    DenseMatrix m(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) m(i, j) = a[i] * b[j];
    return m;
}

inline DenseMatrix kron(const DenseMatrix& a, const DenseMatrix& b) {
    DenseMatrix k(a.rows() * b.rows(), a.cols() * b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) {
            const double aij = a(i, j);
            for (std::size_t p = 0; p < b.rows(); ++p)
                for (std::size_t q = 0; q < b.cols(); ++q) k(i * b.rows() + p, j * b.cols() + q) = aij * b(p, q);
        }
    return k;
}

// Column-stacking vectorization.
inline Vector vec(const DenseMatrix& a) {
    Vector v(a.size());
    for (std::size_t j = 0; j < a.cols(); ++j)
        for (std::size_t i = 0; i < a.rows(); ++i) v[j * a.rows() + i] = a(i, j);
    return v;
}

inline DenseMatrix unvec(std::span<const double> v, std::size_t rows, std::size_t cols) {
    if (v.size() != rows * cols) throw DimensionMismatch("unvec: length mismatch");
    DenseMatrix a(rows, cols);
    for (std::size_t j = 0; j < cols; ++j)
        for (std::size_t i = 0; i < rows; ++i) a(i, j) = v[j * rows + i];
    return a;
}

// Lower-triangular Cholesky factor, no pivoting. The caller owns jitter.
class Cholesky {
public:
    // Throws NotPositiveDefinite when a pivot falls to min_pivot or below.
    explicit Cholesky(const DenseMatrix& a, double min_pivot = 0.0) : l_(a.rows(), a.cols()) {
        if (!a.square()) throw DimensionMismatch("cholesky: matrix is " + shape_str(a));
        const std::size_t n = a.rows();
        smallest_pivot_ = n == 0 ? 0.0 : std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            double d = a(j, j);
            for (std::size_t k = 0; k < j; ++k) d -= l_(j, k) * l_(j, k);
            if (!(d > min_pivot)) {
                throw NotPositiveDefinite("cholesky: pivot " + std::to_string(j) + " = " + std::to_string(d));
            }
            smallest_pivot_ = std::min(smallest_pivot_, d);
            const double ljj = std::sqrt(d);
            l_(j, j) = ljj;
            for (std::size_t i = j + 1; i < n; ++i) {
                double s = a(i, j);
                for (std::size_t k = 0; k < j; ++k) s -= l_(i, k) * l_(j, k);
                l_(i, j) = s / ljj;
            }
        }
    }

    [[nodiscard]] const DenseMatrix& lower() const noexcept { return l_; }
    [[nodiscard]] std::size_t dim() const noexcept { return l_.rows(); }
    [[nodiscard]] double smallest_pivot() const noexcept { return smallest_pivot_; }

    [[nodiscard]] double log_det() const {
        double s = 0.0;
        for (std::size_t i = 0; i < dim(); ++i) s += std::log(l_(i, i));
        return 2.0 * s;
    }

    // L^{-1} b.
    [[nodiscard]] DenseMatrix forward_substitute(const DenseMatrix& b) const {
        check_rhs(b);
        DenseMatrix x = b;
        const std::size_t n = dim();
        const std::size_t m = x.cols();
        for (std::size_t i = 0; i < n; ++i) {
            auto xi = x.row(i);
            for (std::size_t k = 0; k < i; ++k) {
                const double lik = l_(i, k);
                if (lik == 0.0) continue;
                auto xk = x.row(k);
                for (std::size_t c = 0; c < m; ++c) xi[c] -= lik * xk[c];
            }
            const double inv = 1.0 / l_(i, i);
            for (std::size_t c = 0; c < m; ++c) xi[c] *= inv;
        }
        return x;
    }

    // L^{-T} y.
    [[nodiscard]] DenseMatrix back_substitute(const DenseMatrix& y) const {
        check_rhs(y);
        DenseMatrix x = y;
        const std::size_t n = dim();
        const std::size_t m = x.cols();
        for (std::size_t i = n; i-- > 0;) {
            auto xi = x.row(i);
            for (std::size_t k = i + 1; k < n; ++k) {
                const double lki = l_(k, i);
                if (lki == 0.0) continue;
                auto xk = x.row(k);
                for (std::size_t c = 0; c < m; ++c) xi[c] -= lki * xk[c];
            }
            const double inv = 1.0 / l_(i, i);
            for (std::size_t c = 0; c < m; ++c) xi[c] *= inv;
        }
        return x;
    }

    [[nodiscard]] DenseMatrix solve(const DenseMatrix& b) const { return back_substitute(forward_substitute(b)); }

    [[nodiscard]] Vector solve(std::span<const double> b) const {
        return solve(DenseMatrix::column(b)).data();
    }

    [[nodiscard]] DenseMatrix inverse() const {
        DenseMatrix inv = solve(DenseMatrix::identity(dim()));
        symmetrize(inv);
        return inv;
    }

private:
    void check_rhs(const DenseMatrix& b) const {
        if (b.rows() != dim()) {
            throw DimensionMismatch("cholesky solve: rhs " + shape_str(b) + " for order " + std::to_string(dim()));
        }
    }

    DenseMatrix l_;
    double smallest_pivot_ = 0.0;
};

inline DenseMatrix cholesky_solve(const DenseMatrix& a, const DenseMatrix& b) { return Cholesky(a).solve(b); }

inline Vector cholesky_solve(const DenseMatrix& a, std::span<const double> b) { return Cholesky(a).solve(b); }

inline DenseMatrix spd_inverse(const DenseMatrix& a) { return Cholesky(a).inverse(); }

// s_inv * v * a_inv, i.e. unvec((A^-1 kron S^-1) vec(V)) for symmetric factors.
inline DenseMatrix kron_precondition(const DenseMatrix& a_inv, const DenseMatrix& s_inv, const DenseMatrix& v) {
    if (!a_inv.square() || !s_inv.square() || s_inv.rows() != v.rows() || a_inv.rows() != v.cols()) {
        throw DimensionMismatch("kron_precondition: a_inv " + shape_str(a_inv) + ", s_inv " + shape_str(s_inv) +
                                ", v " + shape_str(v));
    }
    return matmul(matmul(s_inv, v), a_inv);
}

struct SymmetricEigen {
    Vector values;         // ascending
    DenseMatrix vectors;   // column k pairs with values[k]
};

// Cyclic Jacobi rotations; adequate for the few-hundred-order matrices used here.
inline SymmetricEigen symmetric_eigen(const DenseMatrix& input, double tol = 1e-14, int max_sweeps = 100) {
    if (!input.square()) throw DimensionMismatch("symmetric_eigen: matrix is " + shape_str(input));
    const std::size_t n = input.rows();
    DenseMatrix a = input;
    symmetrize(a);
    DenseMatrix v = DenseMatrix::identity(n);
    const double scale = std::max(frobenius_norm(a), std::numeric_limits<double>::min());
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (std::sqrt(off) <= tol * scale) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (std::abs(apq) <= std::numeric_limits<double>::min()) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a(i, i) < a(j, j); });
    SymmetricEigen out{Vector(n), DenseMatrix(n, n)};
    for (std::size_t k = 0; k < n; ++k) {
        out.values[k] = a(order[k], order[k]);
        for (std::size_t i = 0; i < n; ++i) out.vectors(i, k) = v(i, order[k]);
    }
    return out;
}

inline double min_eigenvalue(const DenseMatrix& a) {
    auto e = symmetric_eigen(a);
    return e.values.empty() ? 0.0 : e.values.front();
}

inline double max_eigenvalue(const DenseMatrix& a) {
    auto e = symmetric_eigen(a);
    return e.values.empty() ? 0.0 : e.values.back();
}

}  // namespace sobnat
