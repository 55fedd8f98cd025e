#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "sobnat/metric.hpp"

using namespace sobnat;

namespace {

DenseMatrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
    DenseMatrix m(r, c);
    for (auto& v : m.data()) v = standard_normal(rng);
    return m;
}

// Plain lower Cholesky factor, kept separate from the library solver.
DenseMatrix lower_factor(const DenseMatrix& a) {
    const std::size_t n = a.rows();
    DenseMatrix l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double d = a(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
        l(j, j) = std::sqrt(d);
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s / l(j, j);
        }
    }
    return l;
}

KernelSpec exact_spec(std::size_t n) {
    KernelSpec s = KernelSpec::for_dim(n, ConstantMode::exact_dimension_constant);
    s.input_scale = 1.0;
    s.jitter = 0.0;
    return s;
}

}  // namespace

TEST(EstimateMetric, IdentityGramIsGaussNewton) {
    Rng rng = make_rng(1, "test");
    const DenseMatrix j = random_matrix(5, 6, rng);  // P = 5, B = 3, m = 2
    const PullbackMetric g = estimate_metric(j, identity_gram(3));
    EXPECT_EQ(g.provenance, MetricProvenance::gauss_newton);
    EXPECT_LT(oracle::max_abs_diff(g.values, oracle::naive_matmul(j, transpose(j))), 1e-14);
}

TEST(EstimateMetric, KernelMachineRecoversGram) {
    Rng rng = make_rng(2, "test");
    for (int trial = 0; trial < 5; ++trial) {
        const std::size_t b = 2 + static_cast<std::size_t>(trial);
        DenseMatrix pts(b, 1);
        for (std::size_t i = 0; i < b; ++i) pts(i, 0) = 1.3 * static_cast<double>(i) + 0.3 * uniform01(rng);
        const KernelSpec s = exact_spec(1);
        const DenseMatrix k = kernel_matrix(pts, s);
        const PullbackMetric g = estimate_metric(k, gram(pts, s));
        EXPECT_LT(oracle::max_abs_diff(g.values, k), 1e-10);
    }
}

TEST(EstimateMetric, ScalarCase) {
    const GramMatrix k = gram_from_values(DenseMatrix{{0.25}}, 0.0);
    const PullbackMetric g = estimate_metric(DenseMatrix{{3.0}}, k);
    EXPECT_NEAR(g.values(0, 0), 9.0 / 0.25, 1e-12);
}

TEST(EstimateMetric, SymmetricPositiveSemidefinite) {
    Rng rng = make_rng(3, "test");
    for (int trial = 0; trial < 10; ++trial) {
        DenseMatrix pts = random_matrix(4, 2, rng);
        const DenseMatrix j = random_matrix(6, 8, rng);  // m = 2
        const PullbackMetric g = estimate_metric(j, gram(pts, KernelSpec::for_dim(2)));
        EXPECT_TRUE(is_symmetric(g.values, 0.0));
        // Rank <= B m = 8 > P, so strictly positive here.
        EXPECT_TRUE(oracle::charpoly_positive_definite(g.values));
    }
    EXPECT_THROW(estimate_metric(DenseMatrix(3, 5), identity_gram(2)), DimensionMismatch);
}

TEST(NaturalGradient, IdentityAndDiagonal) {
    PullbackMetric g{DenseMatrix::identity(3), 0.0};
    EXPECT_EQ(natural_gradient(g, Vector{1, -2, 3}), (Vector{1, -2, 3}));
    PullbackMetric d{DenseMatrix{{4, 0}, {0, 1}}, 0.0};
    const Vector v = natural_gradient(d, Vector{4, 1});
    EXPECT_DOUBLE_EQ(v[0], 1.0);
    EXPECT_DOUBLE_EQ(v[1], 1.0);
}

TEST(NaturalGradient, RoundTrip) {
    Rng rng = make_rng(4, "test");
    const DenseMatrix a = random_matrix(6, 6, rng);
    PullbackMetric g{add_diagonal(matmul_nt(a, a), 0.1), 0.0};
    Vector v(6);
    for (auto& x : v) x = standard_normal(rng);
    EXPECT_LT(oracle::max_abs_diff(oracle::naive_matvec(g.values, natural_gradient(g, v)), v), 1e-9);
}

TEST(NaturalGradient, SingularMetricWithoutDampingFails) {
    PullbackMetric g{DenseMatrix{{1, 1}, {1, 1}}, 0.0};
    EXPECT_THROW(natural_gradient(g, Vector{1, 0}), NotPositiveDefinite);
    g.damping = 0.5;
    EXPECT_NO_THROW(natural_gradient(g, Vector{1, 0}));
}

TEST(ProjectEmpiricalGradient, ZeroResidualsGiveZero) {
    Rng rng = make_rng(5, "test");
    const DenseMatrix j = random_matrix(3, 4, rng);
    const Vector c = project_empirical_gradient(j, identity_gram(4), DenseMatrix(4, 1), 0.1);
    for (double v : c) EXPECT_EQ(v, 0.0);
}

TEST(ProjectEmpiricalGradient, SingleParameterLinearModel) {
    // phi(theta)(x) = theta x, squared loss, identity kernel: g = sum x_i^2.
    const double theta = 0.5;
    const Vector xs{1.0, -2.0, 0.5}, ys{1.0, 0.0, 2.0};
    DenseMatrix j(1, 3), res(3, 1);
    double num = 0.0, gt = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
        j(0, i) = xs[i];
        res(i, 0) = theta * xs[i] - ys[i];
        num += res(i, 0) * xs[i];
        gt += xs[i] * xs[i];
    }
    const Vector c = project_empirical_gradient(j, identity_gram(3), res);
    EXPECT_NEAR(c[0], num / gt, 1e-15);
}

TEST(ProjectEmpiricalGradient, AgreesWithNaturalGradientOfBackpropGradient) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        MlpNetwork net(mlp_layers({2, 4, 2}, Activation::tanh), seed);
        Rng rng = make_rng(seed, "test");
        const DenseMatrix x = random_matrix(6, 2, rng);
        DenseMatrix y = random_matrix(6, 2, rng);
        const BatchCache cache = forward(net, x);
        const DenseMatrix j = param_jacobian(net, x);
        const GramMatrix k = gram(x, KernelSpec::for_dim(2));
        const DenseMatrix res = batch_residuals(LossKind::squared, cache.outputs, y);
        const Vector c = project_empirical_gradient(j, k, res, 0.01);
        const Vector v = natural_gradient(estimate_metric(j, k, 0.01),
                                          flatten(backward_loss(net, cache, y, LossKind::squared)));
        double scale = 0.0;
        for (double a : v) scale = std::max(scale, std::abs(a));
        EXPECT_LT(oracle::max_abs_diff(c, v), 1e-9 * std::max(1.0, scale));
    }
}

TEST(ProjectEmpiricalGradient, MinimizesRkhsDistanceInBatchSpan) {
    // Ambient gradient v = sum_a K(x_a, .) r_a; tangent i is interpolated as
    // sum_a K(x_a, .) (K^{-1} J_i)_a. In coordinates whitened by K = L L^T the
    // problem is min_c |L^T r - L^{-1} J^T c|, solved here by Householder QR.
    Rng rng = make_rng(6, "test");
    const MlpNetwork net(mlp_layers({1, 2, 1}, Activation::tanh), 7);
    DenseMatrix x(10, 1);
    for (std::size_t i = 0; i < 10; ++i) x(i, 0) = -2.0 + 0.45 * static_cast<double>(i);
    const KernelSpec spec = exact_spec(1);
    const DenseMatrix k = kernel_matrix(x, spec);
    const DenseMatrix j = param_jacobian(net, x);
    DenseMatrix r(10, 1);
    for (auto& v : r.data()) v = standard_normal(rng);

    const DenseMatrix l = lower_factor(k);
    const DenseMatrix l_inv = oracle::adjugate_inverse(l);
    const DenseMatrix a = oracle::naive_matmul(l_inv, transpose(j));  // B x P
    const Vector b = oracle::naive_matvec(transpose(l), r.data());
    const Vector want = oracle::householder_lstsq(a, b);
    const Vector got = project_empirical_gradient(j, gram(x, spec), r);
    double scale = 0.0;
    for (double v : want) scale = std::max(scale, std::abs(v));
    EXPECT_LT(oracle::max_abs_diff(got, want), 1e-6 * std::max(1.0, scale));
}

TEST(Ntk, ScalarAndPsd) {
    const DenseMatrix j{{2.0, -3.0}};  // one parameter, two points, m = 1
    EXPECT_EQ(ntk_kernel(j, 1, 0, 1)(0, 0), -6.0);
    Rng rng = make_rng(7, "test");
    const DenseMatrix jj = random_matrix(5, 12, rng);  // B = 4, m = 3
    for (std::size_t a = 0; a < 4; ++a) {
        const DenseMatrix t = ntk_kernel(jj, 3, a, a);
        EXPECT_TRUE(oracle::charpoly_positive_definite(add_diagonal(t, 1e-12)));
    }
}

TEST(Ntk, BlocksAssembleToJTransposeJ) {
    Rng rng = make_rng(8, "test");
    const DenseMatrix j = random_matrix(4, 6, rng);  // B = 3, m = 2
    const DenseMatrix full = ntk_gram(j);
    const DenseMatrix want = oracle::naive_matmul(transpose(j), j);
    EXPECT_LT(oracle::max_abs_diff(full, want), 1e-13);
    for (std::size_t a = 0; a < 3; ++a)
        for (std::size_t b = 0; b < 3; ++b) {
            const DenseMatrix t = ntk_kernel(j, 2, a, b);
            for (std::size_t c = 0; c < 2; ++c)
                for (std::size_t e = 0; e < 2; ++e) EXPECT_NEAR(t(c, e), want(a * 2 + c, b * 2 + e), 1e-13);
        }
}

TEST(Ntk, SurrogateMatchesProjectionOnlyForIdentityMetric) {
    // Orthonormal tangent rows: J J^T = I.
    const double s = 1.0 / std::sqrt(2.0);
    const DenseMatrix j{{s, s, 0.0}, {0.0, 0.0, 1.0}};
    const DenseMatrix r{{0.3}, {-1.2}, {0.7}};
    EXPECT_TRUE(ntk_surrogate_gradient(j, DenseMatrix(3, 1)) == Vector(2, 0.0));
    const Vector sur = ntk_surrogate_gradient(j, r);
    const Vector proj = project_empirical_gradient(j, identity_gram(3), r);
    EXPECT_LT(oracle::max_abs_diff(sur, proj), 1e-15);

    // Two-parameter toy with a non-identity tangent Gram.
    const DenseMatrix j2{{1.0, 2.0, 0.0}, {0.5, 0.0, 1.0}};
    const Vector sur2 = ntk_surrogate_gradient(j2, r);
    const Vector proj2 = project_empirical_gradient(j2, identity_gram(3), r);
    EXPECT_GT(oracle::max_abs_diff(sur2, proj2), 1e-3);
}

TEST(KernelScale, MetricScalesInverselyAndStepScalesWithConstant) {
    Rng rng = make_rng(9, "test");
    const DenseMatrix pts = random_matrix(5, 2, rng);
    const DenseMatrix k = kernel_matrix(pts, KernelSpec::for_dim(2));
    const DenseMatrix j = random_matrix(4, 5, rng);
    Vector grad(4);
    for (auto& v : grad) v = standard_normal(rng);
    const PullbackMetric g1 = estimate_metric(j, gram_from_values(k, 0.0));
    const Vector v1 = natural_gradient(g1, grad);
    for (double c : {0.5, 3.0, 40.0}) {
        const PullbackMetric gc = estimate_metric(j, gram_from_values(k * c, 0.0));
        EXPECT_LT(oracle::max_abs_diff(gc.values, g1.values * (1.0 / c)), 1e-10 * oracle::max_abs(g1.values));
        const Vector vc = natural_gradient(gc, grad);
        for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(vc[i], c * v1[i], 1e-9 * std::max(1.0, std::abs(c * v1[i])));
    }
}

TEST(Quadrature, OneOneOneLinearNetClosedForm) {
    const double w1 = 0.8, w2 = -1.7;
    const MlpNetwork net(mlp_layers({1, 1, 1}, Activation::identity), {DenseMatrix{{w1, 0.0}}, DenseMatrix{{w2, 0.0}}});
    // Parameters 0 (w1) and 2 (w2); biases excluded.
    const PullbackMetric g = exact_pullback_quadrature(net, InputMeasure::standard_normal(), 8, {0, 2});
    EXPECT_NEAR(g.values(0, 0), w2 * w2, 1e-8);
    EXPECT_NEAR(g.values(0, 1), w1 * w2, 1e-8);
    EXPECT_NEAR(g.values(1, 0), w1 * w2, 1e-8);
    EXPECT_NEAR(g.values(1, 1), w1 * w1, 1e-8);
    EXPECT_NE(g.values(0, 1), 0.0);
}

TEST(Quadrature, ZeroSecondLayerWeightIsDegenerate) {
    const MlpNetwork net(mlp_layers({1, 1, 1}, Activation::identity), {DenseMatrix{{0.8, 0.0}}, DenseMatrix{{0.0, 0.0}}});
    const PullbackMetric g = exact_pullback_quadrature(net, InputMeasure::standard_normal(), 8, {0, 2});
    EXPECT_NEAR(g.values(0, 0), 0.0, 1e-15);
}

TEST(Quadrature, TanhNetMatchesMonteCarloWithinThreeStandardErrors) {
    MlpNetwork net(mlp_layers({1, 2, 1}, Activation::tanh), 5);
    net.weights(0)(0, 1) = 0.3;
    net.weights(0)(1, 1) = -0.2;
    net.weights(1)(0, 2) = 0.1;
    const PullbackMetric g = exact_pullback_quadrature(net, InputMeasure::standard_normal(), 60);
    const std::size_t p = net.parameter_count();
    const std::size_t n = 1'000'000;
    Rng rng = make_rng(5, "mc");
    std::vector<double> sum(p * p, 0.0), sum_sq(p * p, 0.0);
    const std::size_t chunk = 50'000;
    for (std::size_t done = 0; done < n; done += chunk) {
        DenseMatrix x(chunk, 1);
        for (auto& v : x.data()) v = standard_normal(rng);
        const DenseMatrix j = param_jacobian(net, x);
        for (std::size_t s = 0; s < chunk; ++s)
            for (std::size_t a = 0; a < p; ++a)
                for (std::size_t b = 0; b < p; ++b) {
                    const double v = j(a, s) * j(b, s);
                    sum[a * p + b] += v;
                    sum_sq[a * p + b] += v * v;
                }
    }
    const double nd = static_cast<double>(n);
    for (std::size_t a = 0; a < p; ++a)
        for (std::size_t b = 0; b < p; ++b) {
            const double mean = sum[a * p + b] / nd;
            const double se = std::sqrt(std::max(0.0, sum_sq[a * p + b] / nd - mean * mean) / (nd - 1.0));
            EXPECT_LE(std::abs(g.values(a, b) - mean), 3.0 * se + 1e-12) << a << "," << b;
        }
}

TEST(Quadrature, BudgetsAreEnforced) {
    const MlpNetwork net(mlp_layers({1, 16, 1}, Activation::tanh), 1);
    EXPECT_THROW(exact_pullback_quadrature(net, InputMeasure::standard_normal(), 10), BudgetExceeded);
    const MlpNetwork wide(mlp_layers({4, 1}, Activation::identity), 1);
    QuadratureBudget b;
    b.max_nodes = 1000;
    EXPECT_THROW(exact_pullback_quadrature(wide, InputMeasure::standard_normal(), 10, {}, b), BudgetExceeded);
}

TEST(Quadrature, UniformBoxMeasure) {
    // phi = w x on U(-1, 1) with bias: g = [[E x^2, E x], [E x, 1]] = [[1/3, 0], [0, 1]].
    const MlpNetwork net(mlp_layers({1, 1}, Activation::identity), {DenseMatrix{{2.0, 0.5}}});
    const PullbackMetric g = exact_pullback_quadrature(net, InputMeasure::uniform_box(-1.0, 1.0), 4);
    EXPECT_NEAR(g.values(0, 0), 1.0 / 3.0, 1e-14);
    EXPECT_NEAR(g.values(0, 1), 0.0, 1e-14);
    EXPECT_NEAR(g.values(1, 1), 1.0, 1e-14);
}
