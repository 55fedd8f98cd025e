#pragma once
// RKHS functions in representer form, f(x) = sum_t d(|x - x_t|) c_t, and the
// operations on them: evaluation, functional gradient descent, inner
// products, the basis-induced kernel check and projected kernels.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "linalg.hpp"
#include "loss.hpp"
#include "sobolev_kernel.hpp"

namespace sobnat {

struct KernelExpansion {
    KernelSpec spec;
    std::size_t output_dim = 1;
    std::vector<Vector> centers;
    std::vector<Vector> coeffs;

    KernelExpansion() = default;
    KernelExpansion(KernelSpec s, std::size_t m) : spec(s), output_dim(m) { spec.validate(); }

    [[nodiscard]] std::size_t size() const noexcept { return centers.size(); }

    void add_term(std::span<const double> center, std::span<const double> coeff) {
        if (center.size() != spec.input_dim) throw DimensionMismatch("KernelExpansion: center dimension");
        if (coeff.size() != output_dim) throw DimensionMismatch("KernelExpansion: coefficient dimension");
        centers.emplace_back(center.begin(), center.end());
        coeffs.emplace_back(coeff.begin(), coeff.end());
    }
};

inline Vector eval(const KernelExpansion& f, std::span<const double> x) {
    if (x.size() != f.spec.input_dim) throw DimensionMismatch("eval: point dimension");
    Vector out(f.output_dim, 0.0);
    const double c = dimension_constant(f.spec);
    for (std::size_t t = 0; t < f.size(); ++t) {
        const double r = distance(x, f.centers[t]);
        const double k = c * std::exp(-r) * (1.0 + r);
        for (std::size_t j = 0; j < f.output_dim; ++j) out[j] += k * f.coeffs[t][j];
    }
    return out;
}

inline bool same_spec(const KernelSpec& a, const KernelSpec& b) {
    return a.input_dim == b.input_dim && a.sobolev_order == b.sobolev_order && a.constant_mode == b.constant_mode &&
           a.constant_factor == b.constant_factor;
}

// sum_{a,b} d(|x_a - x_b|) <c_a, c_b>.
inline double rkhs_inner(const KernelExpansion& f, const KernelExpansion& g) {
    if (!same_spec(f.spec, g.spec)) throw InvalidArgument("rkhs_inner: expansions use different kernels");
    if (f.output_dim != g.output_dim) throw DimensionMismatch("rkhs_inner: output dimensions differ");
    const double c = dimension_constant(f.spec);
    double s = 0.0;
    for (std::size_t a = 0; a < f.size(); ++a)
        for (std::size_t b = 0; b < g.size(); ++b) {
            const double r = distance(f.centers[a], g.centers[b]);
            s += c * std::exp(-r) * (1.0 + r) * dot(f.coeffs[a], g.coeffs[b]);
        }
    return s;
}

inline double rkhs_norm(const KernelExpansion& f) { return std::sqrt(std::max(0.0, rkhs_inner(f, f))); }

enum class FunctionalGdMode {
    // One data point per step, cycling through the data in order.
    single_sample,
    // Every step uses the whole data set; the gradient is averaged over points.
    full_batch,
};

using StepSchedule = std::function<double(std::size_t step)>;  // step counts from 1

// f_0 = 0, f_t = f_{t-1} - eta_t sum K(x, .) dL/dz(f_{t-1}(x), y). Rows of x are
// points (already scaled), rows of y the targets. The result's centers are the
// distinct visited points.
inline KernelExpansion functional_gd(const DenseMatrix& x, const DenseMatrix& y, LossKind loss, std::size_t steps,
                                     const StepSchedule& lr, const KernelSpec& spec,
                                     FunctionalGdMode mode = FunctionalGdMode::single_sample) {
    if (x.rows() != y.rows()) throw DimensionMismatch("functional_gd: inputs and targets differ in count");
    KernelExpansion f(spec, y.cols());
    if (steps == 0 || x.rows() == 0) return f;
    const std::size_t n = x.rows();

    if (mode == FunctionalGdMode::single_sample) {
        std::vector<std::ptrdiff_t> slot(n, -1);
        for (std::size_t t = 1; t <= steps; ++t) {
            const std::size_t i = (t - 1) % n;
            const Vector z = eval(f, x.row(i));
            const Vector g = loss_gradient(loss, z, y.row(i));
            const double eta = lr(t);
            if (slot[i] < 0) {
                Vector c(g.size());
                for (std::size_t j = 0; j < g.size(); ++j) c[j] = -eta * g[j];
                slot[i] = static_cast<std::ptrdiff_t>(f.size());
                f.add_term(x.row(i), c);
            } else {
                auto& c = f.coeffs[static_cast<std::size_t>(slot[i])];
                for (std::size_t j = 0; j < g.size(); ++j) c[j] -= eta * g[j];
            }
        }
        return f;
    }

    const DenseMatrix k = kernel_matrix(x, spec);
    DenseMatrix alpha(n, y.cols());
    for (std::size_t t = 1; t <= steps; ++t) {
        const DenseMatrix z = matmul(k, alpha);
        const double step = lr(t) / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            const Vector g = loss_gradient(loss, z.row(i), y.row(i));
            for (std::size_t j = 0; j < g.size(); ++j) alpha(i, j) -= step * g[j];
        }
    }
    for (std::size_t i = 0; i < n; ++i) f.add_term(x.row(i), alpha.row(i));
    return f;
}

using BasisFunction = std::function<Vector(std::span<const double>)>;

// Gram matrix of the basis {b_i} in the RKHS of K(x, x') = sum_i b_i(x) b_i(x')^T.
// Each b_i is written as sum_t K(., p_t) alpha_{i,t} by minimum-norm least
// squares over the probes (rows of `probes`); the result should be the identity.
inline DenseMatrix check_basis_orthonormality(const std::vector<BasisFunction>& basis, const DenseMatrix& probes,
                                              std::size_t output_dim) {
    const std::size_t d = basis.size();
    const std::size_t t = probes.rows();
    const std::size_t m = output_dim;
    if (d == 0) throw InvalidArgument("check_basis_orthonormality: empty basis");

    // values(i, (p, c)) = b_i(p)_c
    DenseMatrix values(d, t * m);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t p = 0; p < t; ++p) {
            const Vector v = basis[i](probes.row(p));
            if (v.size() != m) throw DimensionMismatch("check_basis_orthonormality: basis output dimension");
            for (std::size_t c = 0; c < m; ++c) values(i, p * m + c) = v[c];
        }

    // Kernel over probes: kk((p,c),(q,e)) = K(p_p, p_q)_{c,e}.
    DenseMatrix kk(t * m, t * m);
    for (std::size_t u = 0; u < t * m; ++u)
        for (std::size_t w = 0; w < t * m; ++w) {
            double s = 0.0;
            for (std::size_t i = 0; i < d; ++i) s += values(i, u) * values(i, w);
            kk(u, w) = s;
        }

    // Pseudo-inverse of the (rank <= d) probe kernel.
    const SymmetricEigen eig = symmetric_eigen(kk);
    const double lmax = eig.values.empty() ? 0.0 : std::max(0.0, eig.values.back());
    const double cutoff = 1e-10 * lmax;
    std::size_t rank = 0;
    DenseMatrix pinv(t * m, t * m);
    for (std::size_t k = 0; k < eig.values.size(); ++k) {
        if (eig.values[k] <= cutoff || lmax == 0.0) continue;
        ++rank;
        const double inv = 1.0 / eig.values[k];
        for (std::size_t u = 0; u < t * m; ++u)
            for (std::size_t w = 0; w < t * m; ++w) pinv(u, w) += inv * eig.vectors(u, k) * eig.vectors(w, k);
    }
    if (rank < d) {
        throw SingularProbeSet("check_basis_orthonormality: probes expose rank " + std::to_string(rank) + " < " +
                               std::to_string(d) + " basis functions");
    }

    // alpha_i = pinv * b_i(probes); reproduce b_i on the probes or fail.
    const DenseMatrix alpha = matmul_nt(pinv, values);  // (t m) x d
    const DenseMatrix recon = matmul(kk, alpha);
    const double scale = std::max(1.0, max_abs(values));
    if (max_abs_diff(transpose(recon), values) > 1e-8 * scale) {
        throw SingularProbeSet("check_basis_orthonormality: basis is not representable over the probe set");
    }
    DenseMatrix g = matmul_tn(alpha, matmul(kk, alpha));
    symmetrize(g);
    return g;
}

// K_f(x, x') = J(x)^T g^{-1} J(x'), with J(x) the P x m matrix of dphi^c/dtheta_i at x.
inline DenseMatrix projection_kernel(const DenseMatrix& jac_x, const DenseMatrix& jac_xp,
                                     const DenseMatrix& gtilde_inverse) {
    if (jac_x.rows() != gtilde_inverse.rows() || jac_xp.rows() != gtilde_inverse.cols() ||
        jac_x.cols() != jac_xp.cols()) {
        throw DimensionMismatch("projection_kernel: J(x) " + shape_str(jac_x) + ", J(x') " + shape_str(jac_xp) +
                                ", g^-1 " + shape_str(gtilde_inverse));
    }
    return matmul_tn(jac_x, matmul(gtilde_inverse, jac_xp));
}

}  // namespace sobnat
