#pragma once

#include <cmath>
#include <cstddef>
#include <functional>

#include "errors.hpp"
#include "linalg.hpp"

namespace sobnat {

struct QuadratureRule {
    Vector nodes;
    Vector weights;
};

namespace detail {

// Golub-Welsch: nodes are eigenvalues of the symmetric Jacobi matrix with the
// given off-diagonal; weights are mu0 times the squared first eigenvector entries.
inline QuadratureRule golub_welsch(std::size_t n, const std::function<double(std::size_t)>& offdiag, double mu0) {
    DenseMatrix t(n, n);
    for (std::size_t k = 1; k < n; ++k) {
        t(k - 1, k) = offdiag(k);
        t(k, k - 1) = offdiag(k);
    }
    const SymmetricEigen e = symmetric_eigen(t, 1e-15, 200);
    QuadratureRule q{e.values, Vector(n)};
    for (std::size_t k = 0; k < n; ++k) q.weights[k] = mu0 * e.vectors(0, k) * e.vectors(0, k);
    return q;
}

}  // namespace detail

// Nodes and weights for E[f(X)], X ~ N(0, 1) (probabilists' Hermite); weights sum to 1.
inline QuadratureRule gauss_hermite(std::size_t n) {
    if (n == 0) throw InvalidArgument("gauss_hermite: need at least one node");
    return detail::golub_welsch(n, [](std::size_t k) { return std::sqrt(static_cast<double>(k)); }, 1.0);
}

// Nodes and weights on [-1, 1]; weights sum to 2.
inline QuadratureRule gauss_legendre(std::size_t n) {
    if (n == 0) throw InvalidArgument("gauss_legendre: need at least one node");
    return detail::golub_welsch(
        n,
        [](std::size_t k) {
            const double kd = static_cast<double>(k);
            return kd / std::sqrt(4.0 * kd * kd - 1.0);
        },
        2.0);
}

// Adaptive Gauss-Kronrod (7/15) on [a, b] to absolute tolerance tol.
inline double integrate_adaptive(const std::function<double(double)>& f, double a, double b, double tol = 1e-10,
                                 int max_depth = 40) {
    static constexpr double xk[8] = {0.991455371120812639, 0.949107912342758525, 0.864864423359769073,
                                     0.741531185599394440, 0.586087235467691130, 0.405845151377397167,
                                     0.207784955007898468, 0.000000000000000000};
    static constexpr double wk[8] = {0.022935322010529225, 0.063092092629978553, 0.104790010322250184,
                                     0.140653259715525919, 0.169004726639267903, 0.190350578064785410,
                                     0.204432940075298892, 0.209482141084727828};
    static constexpr double wg[4] = {0.129484966168869693, 0.279705391489276668, 0.381830050505118945,
                                     0.417959183673469388};
    std::function<double(double, double, double, int)> rec = [&](double lo, double hi, double eps, int depth) {
        const double c = 0.5 * (lo + hi);
        const double h = 0.5 * (hi - lo);
        const double fc = f(c);
        double kron = wk[7] * fc;
        double gauss = wg[3] * fc;
        for (int i = 0; i < 7; ++i) {
            const double v = f(c - h * xk[i]) + f(c + h * xk[i]);
            kron += wk[i] * v;
            if (i % 2 == 1) gauss += wg[i / 2] * v;
        }
        kron *= h;
        gauss *= h;
        if (std::abs(kron - gauss) <= eps || depth >= max_depth) return kron;
        return rec(lo, c, 0.5 * eps, depth + 1) + rec(c, hi, 0.5 * eps, depth + 1);
    };
    return rec(a, b, tol, 0);
}

}  // namespace sobnat
