#pragma once
// Riemannian primal descent and mirror descent on convex problems whose
// metric dominates the Euclidean norm: ||v||_E^2 <= C ||v||_{g(x)}^2.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "linalg.hpp"
#include "rng.hpp"

namespace sobnat {

struct RiemannProblem {
    std::size_t dim = 0;
    std::function<double(std::span<const double>)> f;
    std::function<Vector(std::span<const double>)> grad;
    std::function<DenseMatrix(std::span<const double>)> metric;
    double lipschitz_L = 0.0;  // ||grad f(x) - grad f(y)|| <= L ||x - y||
    double compat_C = 0.0;     // ||v||_E^2 <= C ||v||_{g(x)}^2 for all x
    Vector minimizer;
    double f_star = 0.0;
    // Quadratic problems: Hessian H and a constant G_up with g(x) <= G_up
    // everywhere; both feed the certified radius of the initial sublevel set.
    DenseMatrix hessian;
    DenseMatrix metric_upper;
};

// Euclidean gradient preconditioned by g(x)^{-1}.
inline Vector riemannian_gradient(const RiemannProblem& p, std::span<const double> x) {
    return Cholesky(p.metric(x)).solve(p.grad(x));
}

// x - (1 / (C L)) g(x)^{-1} grad f(x).
inline Vector grad_step(const RiemannProblem& p, std::span<const double> x) {
    const Vector rg = riemannian_gradient(p, x);
    const double step = 1.0 / (p.compat_C * p.lipschitz_L);
    Vector out(x.begin(), x.end());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= step * rg[i];
    return out;
}

// Guaranteed progress (1 / (2 C L)) grad f^T g^{-1} grad f.
inline double prog(const RiemannProblem& p, std::span<const double> x) {
    const Vector g = p.grad(x);
    return dot(g, Cholesky(p.metric(x)).solve(g)) / (2.0 * p.compat_C * p.lipschitz_L);
}

// argmin_y <grad f(x), y - x> + (alpha / 2) ||y - x||^2_{g(x)} = x - (1/alpha) g(x)^{-1} grad f(x).
inline Vector mirror_step(const RiemannProblem& p, std::span<const double> x, double alpha) {
    if (!(alpha > 0.0)) throw InvalidArgument("mirror_step: alpha must be positive");
    const Vector rg = riemannian_gradient(p, x);
    const double step = 1.0 / alpha;
    Vector out(x.begin(), x.end());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= step * rg[i];
    return out;
}

// V_x(y) = w(y) - <grad w(x), y - x> - w(x) for w(z) = 1/2 z^T G z.
inline double bregman(const DenseMatrix& g, std::span<const double> x, std::span<const double> y) {
    const Vector gx = matvec(g, x);
    const double wx = 0.5 * dot(x, gx);
    const double wy = 0.5 * dot(y, matvec(g, y));
    double lin = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) lin += gx[i] * (y[i] - x[i]);
    return wy - lin - wx;
}

// f(x) = 1/2 (x - x*)^T H (x - x*) + f*, constant metric G.
// L = lambda_max(H), C = lambda_max(G^{-1}).
inline RiemannProblem quadratic_problem(const DenseMatrix& h, const DenseMatrix& g, Vector minimizer = {},
                                        double f_star = 0.0) {
    if (!h.square() || !g.square() || h.rows() != g.rows()) throw DimensionMismatch("quadratic_problem: shapes");
    const std::size_t n = h.rows();
    if (minimizer.empty()) minimizer.assign(n, 0.0);
    if (minimizer.size() != n) throw DimensionMismatch("quadratic_problem: minimizer length");
    (void)Cholesky(h);  // H must be SPD
    RiemannProblem p;
    p.dim = n;
    p.f = [h, minimizer, f_star](std::span<const double> x) {
        Vector d(x.begin(), x.end());
        for (std::size_t i = 0; i < d.size(); ++i) d[i] -= minimizer[i];
        return 0.5 * dot(d, matvec(h, d)) + f_star;
    };
    p.grad = [h, minimizer](std::span<const double> x) {
        Vector d(x.begin(), x.end());
        for (std::size_t i = 0; i < d.size(); ++i) d[i] -= minimizer[i];
        return matvec(h, d);
    };
    p.metric = [g](std::span<const double>) { return g; };
    p.lipschitz_L = max_eigenvalue(h);
    p.compat_C = 1.0 / min_eigenvalue(g);
    if (!(p.compat_C > 0.0)) throw NotPositiveDefinite("quadratic_problem: metric is not positive definite");
    p.minimizer = std::move(minimizer);
    p.f_star = f_star;
    p.hessian = h;
    p.metric_upper = g;
    return p;
}

// Same objective with the diagonal field g_ii(x) = base_i + amp_i tanh(x_i)^2,
// so base_i <= g_ii(x) <= base_i + amp_i and C = 1 / min base exactly.
inline RiemannProblem quadratic_problem_diagonal_field(const DenseMatrix& h, const Vector& base, const Vector& amp,
                                                       Vector minimizer = {}) {
    const std::size_t n = h.rows();
    if (base.size() != n || amp.size() != n) throw DimensionMismatch("diagonal field: length");
    double min_base = base.empty() ? 0.0 : base[0];
    DenseMatrix upper(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(base[i] > 0.0) || !(amp[i] >= 0.0)) throw InvalidArgument("diagonal field: need base > 0, amp >= 0");
        min_base = std::min(min_base, base[i]);
        upper(i, i) = base[i] + amp[i];
    }
    RiemannProblem p = quadratic_problem(h, DenseMatrix::diagonal(base), std::move(minimizer));
    p.metric = [base, amp](std::span<const double> x) {
        DenseMatrix g(x.size(), x.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double t = std::tanh(x[i]);
            g(i, i) = base[i] + amp[i] * t * t;
        }
        return g;
    };
    p.compat_C = 1.0 / min_base;
    p.metric_upper = std::move(upper);
    return p;
}

// R^2 = max over {f <= f(x0)} of ||x - x*||^2_g, bounded with G_up:
// 2 (f(x0) - f*) lambda_max(H^{-1/2} G_up H^{-1/2}). Exact for constant metrics.
inline double sublevel_radius_sq(const RiemannProblem& p, std::span<const double> x0) {
    if (p.hessian.rows() != p.dim || p.metric_upper.rows() != p.dim) {
        throw InvalidArgument("sublevel_radius_sq: problem has no quadratic certificate");
    }
    const Cholesky ch(p.hessian);
    // L^{-1} G L^{-T} has the same spectrum as H^{-1/2} G H^{-1/2}.
    const DenseMatrix left = ch.forward_substitute(p.metric_upper);
    DenseMatrix m = transpose(ch.forward_substitute(transpose(left)));
    symmetrize(m);
    const double gap = std::max(0.0, p.f(x0) - p.f_star);
    return 2.0 * gap * max_eigenvalue(m);
}

struct RateReport {
    std::vector<double> gaps;    // gaps[T-1] = f(x_T) - f*
    std::vector<double> bounds;  // 2 L C R^2 / T
    double radius_sq = 0.0;
    std::size_t steps = 0;
    double min_decrease_margin = 0.0;  // min over k of f(x_k) - f(x_{k+1}) - prog(x_k)
};

// Runs T steps of grad_step from x0 and checks f(x_T) - f* <= 2 L C R^2 / T
// for every prefix, plus the per-step decrease f(x_k) - f(x_{k+1}) >= prog(x_k).
inline RateReport verify_rate(const RiemannProblem& p, std::span<const double> x0, std::size_t steps) {
    RateReport rep;
    rep.radius_sq = sublevel_radius_sq(p, x0);
    rep.steps = steps;
    rep.min_decrease_margin = std::numeric_limits<double>::infinity();
    Vector x(x0.begin(), x0.end());
    const double slack = 1e-12;
    for (std::size_t t = 1; t <= steps; ++t) {
        const double fx = p.f(x);
        const double pr = prog(p, x);
        x = grad_step(p, x);
        const double fn = p.f(x);
        const double margin = fx - fn - pr;
        rep.min_decrease_margin = std::min(rep.min_decrease_margin, margin);
        const double gap = fn - p.f_star;
        const double bound = 2.0 * p.lipschitz_L * p.compat_C * rep.radius_sq / static_cast<double>(t);
        rep.gaps.push_back(gap);
        rep.bounds.push_back(bound);
        if (gap > bound + slack * std::max(1.0, std::abs(p.f_star))) throw RateViolation(t, gap, bound);
        if (margin < -slack * std::max(1.0, std::abs(fx))) {
            throw RateViolation(t, fx - fn, pr);
        }
    }
    return rep;
}

// Random SPD matrix Q diag(eigs) Q^T with eigenvalues in [lo, hi].
inline DenseMatrix random_spd(std::size_t n, double lo, double hi, Rng& rng) {
    DenseMatrix a(n, n);
    for (auto& v : a.data()) v = standard_normal(rng);
    // Orthonormalize the columns by Gram-Schmidt.
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t k = 0; k < j; ++k) {
            double d = 0.0;
            for (std::size_t i = 0; i < n; ++i) d += a(i, j) * a(i, k);
            for (std::size_t i = 0; i < n; ++i) a(i, j) -= d * a(i, k);
        }
        double nrm = 0.0;
        for (std::size_t i = 0; i < n; ++i) nrm += a(i, j) * a(i, j);
        nrm = std::sqrt(nrm);
        for (std::size_t i = 0; i < n; ++i) a(i, j) /= nrm;
    }
    Vector eig(n);
    for (auto& e : eig) e = uniform(rng, lo, hi);
    DenseMatrix out = matmul(matmul(a, DenseMatrix::diagonal(eig)), transpose(a));
    symmetrize(out);
    return out;
}

}  // namespace sobnat
