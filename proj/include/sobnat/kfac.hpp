#pragma once
// Kronecker-factored approximation of the K^{-1}-weighted metric block of a
// fully-connected layer:
//
//     g_l ~ E_K[abar abar^T] kron E_K[Ds Ds^T],   E_K[X Y] = X(x_i) Kinv_ij Y(x_j) / B,
//
// and the matching preconditioner Wbar update = S^{-1} V A^{-1}.

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "errors.hpp"
#include "linalg.hpp"
#include "network.hpp"
#include "sobolev_kernel.hpp"

namespace sobnat {

struct KfacFactors {
    DenseMatrix a;  // (in + 1) x (in + 1)
    DenseMatrix s;  // out x out
};

namespace detail {

// X^T Kinv X / B for a B x d matrix X.
inline DenseMatrix weighted_second_moment(const DenseMatrix& x, const GramMatrix& gram) {
    const double inv_b = 1.0 / static_cast<double>(x.rows());
    const DenseMatrix w = gram.whiten(x);
    DenseMatrix m = matmul_tn(w, w);
    m *= inv_b;
    symmetrize(m);
    return m;
}

}  // namespace detail

inline std::vector<KfacFactors> compute_factors(const BatchCache& cache, const OutputJacobians& jac,
                                                const GramMatrix& gram) {
    const std::size_t b = cache.batch_size();
    if (gram.size() != b) {
        throw DimensionMismatch("compute_factors: gram of size " + std::to_string(gram.size()) + " for batch " +
                                std::to_string(b));
    }
    if (jac.ds.size() != cache.activations.size()) throw DimensionMismatch("compute_factors: layer count mismatch");
    std::vector<KfacFactors> out;
    for (std::size_t l = 0; l < cache.activations.size(); ++l) {
        KfacFactors f;
        f.a = detail::weighted_second_moment(cache.activations[l], gram);
        const std::size_t out_dim = cache.preacts[l].cols();
        f.s = DenseMatrix(out_dim, out_dim);
        for (const auto& ds : jac.ds[l]) {
            if (ds.rows() != b || ds.cols() != out_dim) throw DimensionMismatch("compute_factors: Ds shape");
            f.s += detail::weighted_second_moment(ds, gram);
        }
        out.push_back(std::move(f));
    }
    return out;
}

enum class KfacDamping {
    // (A + pi sqrt(lambda) I) kron (S + sqrt(lambda)/pi I), pi = sqrt((tr A / dim A) / (tr S / dim S)).
    factored,
    // Exact (A kron S + lambda I)^{-1} through eigendecompositions of both factors.
    eigen_exact,
};

struct KfacLayerState {
    DenseMatrix a_factor;
    DenseMatrix s_factor;
    double decay = 0.95;
    double damping = 0.03;
    std::size_t update_period = 10;
    KfacDamping damping_mode = KfacDamping::factored;
    bool initialized = false;

    // Inverse caches, rebuilt lazily after every factor update.
    struct Cache {
        DenseMatrix a_inv;
        DenseMatrix s_inv;
        SymmetricEigen a_eig;
        SymmetricEigen s_eig;
        double damping_used = 0.0;
    };
    std::optional<Cache> cache;
};

// First update adopts the fresh factors; later ones blend
// new = decay * old + (1 - decay) * fresh. Either way the inverse cache is dropped.
inline KfacLayerState update_state(KfacLayerState state, const KfacFactors& fresh) {
    if (!state.initialized) {
        state.a_factor = fresh.a;
        state.s_factor = fresh.s;
        state.initialized = true;
    } else {
        if (state.a_factor.rows() != fresh.a.rows() || state.s_factor.rows() != fresh.s.rows()) {
            throw DimensionMismatch("update_state: factor shapes changed");
        }
        state.a_factor = state.a_factor * state.decay + fresh.a * (1.0 - state.decay);
        state.s_factor = state.s_factor * state.decay + fresh.s * (1.0 - state.decay);
    }
    state.cache.reset();
    return state;
}

inline double trace_balance(const DenseMatrix& a, const DenseMatrix& s) {
    const double ta = trace(a) / static_cast<double>(a.rows());
    const double ts = trace(s) / static_cast<double>(s.rows());
    if (!(ta > 0.0) || !(ts > 0.0)) return 1.0;
    return std::sqrt(ta / ts);
}

namespace detail {

inline KfacLayerState::Cache build_inverse_cache(const KfacLayerState& state) {
    KfacLayerState::Cache c;
    double lambda = state.damping;
    if (state.damping_mode == KfacDamping::eigen_exact) {
        c.a_eig = symmetric_eigen(state.a_factor);
        c.s_eig = symmetric_eigen(state.s_factor);
        c.damping_used = lambda;
        return c;
    }
    const double pi = trace_balance(state.a_factor, state.s_factor);
    for (int attempt = 0; attempt < 4; ++attempt) {
        try {
            const double root = std::sqrt(lambda);
            c.a_inv = Cholesky(add_diagonal(state.a_factor, pi * root)).inverse();
            c.s_inv = Cholesky(add_diagonal(state.s_factor, root / pi)).inverse();
            c.damping_used = lambda;
            return c;
        } catch (const NotPositiveDefinite&) {
            lambda = lambda > 0.0 ? lambda * 10.0 : 1e-10;
        }
    }
    throw NotPositiveDefinite("kfac precondition: factors not positive definite after damping escalation");
}

}  // namespace detail

// Preconditioned update for one layer's gradient V (out x (in + 1)).
inline DenseMatrix precondition(KfacLayerState& state, const DenseMatrix& v) {
    if (!state.initialized) throw InvalidArgument("precondition: factors not initialized");
    if (v.rows() != state.s_factor.rows() || v.cols() != state.a_factor.rows()) {
        throw DimensionMismatch("precondition: gradient " + shape_str(v) + " vs factors " +
                                shape_str(state.s_factor) + ", " + shape_str(state.a_factor));
    }
    if (!state.cache) state.cache = detail::build_inverse_cache(state);
    const auto& c = *state.cache;
    if (state.damping_mode == KfacDamping::factored) return kron_precondition(c.a_inv, c.s_inv, v);

    DenseMatrix rotated = matmul(matmul_tn(c.s_eig.vectors, v), c.a_eig.vectors);
    for (std::size_t i = 0; i < rotated.rows(); ++i)
        for (std::size_t j = 0; j < rotated.cols(); ++j) {
            const double denom = c.s_eig.values[i] * c.a_eig.values[j] + c.damping_used;
            if (!(denom > 0.0)) throw NotPositiveDefinite("precondition: singular Kronecker factors and zero damping");
            rotated(i, j) /= denom;
        }
    return matmul_nt(matmul(c.s_eig.vectors, rotated), c.a_eig.vectors);
}

}  // namespace sobnat
