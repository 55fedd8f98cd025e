#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "sobnat/kfac.hpp"
#include "sobnat/metric.hpp"

using namespace sobnat;

namespace {

DenseMatrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
    DenseMatrix m(r, c);
    for (auto& v : m.data()) v = standard_normal(rng);
    return m;
}

DenseMatrix random_spd(std::size_t n, Rng& rng) {
    const DenseMatrix a = random_matrix(n, n, rng);
    return add_diagonal(oracle::naive_matmul(a, transpose(a)), 0.5);
}

DenseMatrix block(const DenseMatrix& g, std::size_t off, std::size_t n) {
    DenseMatrix b(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) b(i, j) = g(off + i, off + j);
    return b;
}

// 1-2-1 tanh net whose first-layer weights are zero, so the hidden activations
// (and the first layer's Ds) are the same for every sample.
MlpNetwork constant_hidden_net() {
    return MlpNetwork(mlp_layers({1, 2, 1}, Activation::tanh),
                      {DenseMatrix{{0.0, 0.4}, {0.0, -0.9}}, DenseMatrix{{1.3, -0.6, 0.2}}});
}

KfacLayerState state_with(const DenseMatrix& a, const DenseMatrix& s, double damping, KfacDamping mode) {
    KfacLayerState st;
    st.damping = damping;
    st.damping_mode = mode;
    return update_state(st, {a, s});
}

}  // namespace

TEST(ComputeFactors, SingleSampleIdentityKernelGivesOuterProducts) {
    const MlpNetwork net(mlp_layers({2, 3, 1}, Activation::tanh), 4);
    const BatchCache cache = forward(net, DenseMatrix{{0.5, -1.0}});
    const OutputJacobians oj = output_jacobians(net, cache);
    const auto f = compute_factors(cache, oj, identity_gram(1));
    for (std::size_t l = 0; l < 2; ++l) {
        const Vector a(cache.activations[l].row(0).begin(), cache.activations[l].row(0).end());
        const Vector d(oj.ds[l][0].row(0).begin(), oj.ds[l][0].row(0).end());
        EXPECT_LT(oracle::max_abs_diff(f[l].a, outer(a, a)), 1e-15);
        EXPECT_LT(oracle::max_abs_diff(f[l].s, outer(d, d)), 1e-15);
    }
}

TEST(ComputeFactors, ConstantActivationsReproduceDenseBlockExactly) {
    const MlpNetwork net = constant_hidden_net();
    const DenseMatrix x{{-1.0}, {0.3}, {0.8}, {2.0}};
    const BatchCache cache = forward(net, x);
    const auto f = compute_factors(cache, output_jacobians(net, cache), identity_gram(4));
    PullbackMetric g = estimate_metric(param_jacobian(net, x), identity_gram(4));
    for (std::size_t l = 0; l < 2; ++l) {
        const DenseMatrix dense = block(g.values, net.layer_offset(l), net.layer_parameter_count(l)) * 0.25;
        EXPECT_LT(oracle::max_abs_diff(oracle::explicit_kron(f[l].s, f[l].a), dense), 1e-10) << "layer " << l;
    }
}

TEST(ComputeFactors, SobolevKernelOnConstantActivationsDiffersByScalar) {
    // With K != I the last layer's E_K block equals kron(S, A) B / (1^T K^-1 1).
    const MlpNetwork net = constant_hidden_net();
    const DenseMatrix x{{-1.0}, {0.3}, {0.8}, {2.0}};
    KernelSpec spec = KernelSpec::for_dim(1);
    spec.input_scale = 1.0;
    const GramMatrix k = gram(x, spec);
    const BatchCache cache = forward(net, x);
    const auto f = compute_factors(cache, output_jacobians(net, cache), k);
    const PullbackMetric g = estimate_metric(param_jacobian(net, x), k);
    const DenseMatrix kinv = k.inverse();
    double ones = 0.0;
    for (double v : kinv.data()) ones += v;
    const DenseMatrix dense = block(g.values, net.layer_offset(1), 3) * 0.25;
    EXPECT_LT(oracle::max_abs_diff(oracle::explicit_kron(f[1].s, f[1].a) * (4.0 / ones), dense), 1e-10);
}

TEST(ComputeFactors, ZeroJacobiansGiveZeroS) {
    const MlpNetwork net(mlp_layers({2, 3, 2}, Activation::tanh), 1);
    const BatchCache cache = forward(net, DenseMatrix{{1.0, 2.0}, {0.0, -1.0}});
    OutputJacobians oj = output_jacobians(net, cache);
    for (auto& layer : oj.ds)
        for (auto& d : layer) d = DenseMatrix(d.rows(), d.cols());
    for (const auto& f : compute_factors(cache, oj, identity_gram(2)))
        for (double v : f.s.data()) EXPECT_EQ(v, 0.0);
    EXPECT_THROW(compute_factors(cache, oj, identity_gram(3)), DimensionMismatch);
}

TEST(UpdateState, DecayZeroAdoptsFreshFactors) {
    KfacLayerState st = state_with(DenseMatrix{{1.0}}, DenseMatrix{{2.0}}, 0.0, KfacDamping::factored);
    st.decay = 0.0;
    st = update_state(st, {DenseMatrix{{5.0}}, DenseMatrix{{7.0}}});
    EXPECT_EQ(st.a_factor(0, 0), 5.0);
    EXPECT_EQ(st.s_factor(0, 0), 7.0);
}

TEST(UpdateState, DecayOneKeepsState) {
    KfacLayerState st = state_with(DenseMatrix{{1.0}}, DenseMatrix{{2.0}}, 0.0, KfacDamping::factored);
    st.decay = 1.0;
    st = update_state(st, {DenseMatrix{{5.0}}, DenseMatrix{{7.0}}});
    EXPECT_EQ(st.a_factor(0, 0), 1.0);
    EXPECT_EQ(st.s_factor(0, 0), 2.0);
}

TEST(UpdateState, HalfDecayOverIdenticalBatches) {
    KfacLayerState st;
    st.decay = 0.5;
    const KfacFactors f{DenseMatrix{{2.0, 0.5}, {0.5, 1.0}}, DenseMatrix{{3.0}}};
    st = update_state(st, f);
    st = update_state(st, f);
    EXPECT_EQ(st.a_factor, f.a);
    EXPECT_EQ(st.s_factor, f.s);
}

TEST(UpdateState, BlendsAndInvalidatesCache) {
    KfacLayerState st = state_with(DenseMatrix{{1.0}}, DenseMatrix{{1.0}}, 0.0, KfacDamping::factored);
    st.decay = 0.95;
    (void)precondition(st, DenseMatrix{{1.0}});
    ASSERT_TRUE(st.cache.has_value());
    st = update_state(st, {DenseMatrix{{3.0}}, DenseMatrix{{5.0}}});
    EXPECT_FALSE(st.cache.has_value());
    EXPECT_DOUBLE_EQ(st.a_factor(0, 0), 0.95 + 0.05 * 3.0);
    EXPECT_DOUBLE_EQ(st.s_factor(0, 0), 0.95 + 0.05 * 5.0);
    EXPECT_THROW(update_state(st, {DenseMatrix::identity(2), DenseMatrix{{1.0}}}), DimensionMismatch);
}

TEST(Precondition, IdentityFactorsZeroDamping) {
    Rng rng = make_rng(2, "test");
    const DenseMatrix v = random_matrix(3, 4, rng);
    for (auto mode : {KfacDamping::factored, KfacDamping::eigen_exact}) {
        KfacLayerState st = state_with(DenseMatrix::identity(4), DenseMatrix::identity(3), 0.0, mode);
        EXPECT_LT(oracle::max_abs_diff(precondition(st, v), v), 1e-15);
    }
}

TEST(Precondition, ScalarFactors) {
    for (auto mode : {KfacDamping::factored, KfacDamping::eigen_exact}) {
        KfacLayerState st = state_with(DenseMatrix{{2.0}}, DenseMatrix{{5.0}}, 0.0, mode);
        EXPECT_NEAR(precondition(st, DenseMatrix{{3.0}})(0, 0), 3.0 / 10.0, 1e-15);
    }
}

TEST(Precondition, MatchesDenseKroneckerInverse) {
    Rng rng = make_rng(3, "test");
    for (int trial = 0; trial < 5; ++trial) {
        const DenseMatrix a = random_spd(3, rng);
        const DenseMatrix s = random_spd(2, rng);
        const DenseMatrix v = random_matrix(2, 3, rng);
        const DenseMatrix big = oracle::explicit_kron(a, s);  // acts on column-stacked V
        const Vector want = oracle::naive_matvec(oracle::adjugate_inverse(big), oracle::col_vec(v));
        for (auto mode : {KfacDamping::factored, KfacDamping::eigen_exact}) {
            KfacLayerState st = state_with(a, s, 0.0, mode);
            EXPECT_LT(oracle::max_abs_diff(oracle::col_vec(precondition(st, v)), want), 1e-10);
        }
        // eigen_exact with damping inverts A kron S + lambda I exactly.
        const double lambda = 0.07;
        KfacLayerState st = state_with(a, s, lambda, KfacDamping::eigen_exact);
        const Vector want_damped =
            oracle::naive_matvec(oracle::adjugate_inverse(add_diagonal(big, lambda)), oracle::col_vec(v));
        EXPECT_LT(oracle::max_abs_diff(oracle::col_vec(precondition(st, v)), want_damped), 1e-10);
    }
}

TEST(Precondition, FactoredDampingUsesTraceBalance) {
    Rng rng = make_rng(4, "test");
    const DenseMatrix a = random_spd(3, rng);
    const DenseMatrix s = random_spd(2, rng) * 4.0;
    const DenseMatrix v = random_matrix(2, 3, rng);
    const double lambda = 0.03;
    const double pi = std::sqrt((trace(a) / 3.0) / (trace(s) / 2.0));
    const DenseMatrix a_d = add_diagonal(a, pi * std::sqrt(lambda));
    const DenseMatrix s_d = add_diagonal(s, std::sqrt(lambda) / pi);
    const Vector want = oracle::naive_matvec(oracle::adjugate_inverse(oracle::explicit_kron(a_d, s_d)), oracle::col_vec(v));
    KfacLayerState st = state_with(a, s, lambda, KfacDamping::factored);
    EXPECT_LT(oracle::max_abs_diff(oracle::col_vec(precondition(st, v)), want), 1e-10);
}

TEST(Precondition, SingularFactorsEscalateOrFail) {
    const DenseMatrix zero2(2, 2);
    KfacLayerState factored = state_with(zero2, DenseMatrix{{1.0}}, 0.0, KfacDamping::factored);
    EXPECT_NO_THROW(precondition(factored, DenseMatrix{{1.0, 1.0}}));
    EXPECT_GT(factored.cache->damping_used, 0.0);
    KfacLayerState exact = state_with(zero2, DenseMatrix{{1.0}}, 0.0, KfacDamping::eigen_exact);
    EXPECT_THROW(precondition(exact, DenseMatrix{{1.0, 1.0}}), NotPositiveDefinite);
    KfacLayerState fresh;
    EXPECT_THROW(precondition(fresh, DenseMatrix{{1.0}}), InvalidArgument);
}

TEST(Factors, StayPositiveSemidefiniteThroughUpdates) {
    MlpNetwork net(mlp_layers({2, 4, 3}, Activation::tanh), 8);
    Rng rng = make_rng(8, "test");
    std::vector<KfacLayerState> states(2);
    for (int step = 0; step < 20; ++step) {
        const DenseMatrix x = random_matrix(6, 2, rng);
        const BatchCache cache = forward(net, x);
        const auto f = compute_factors(cache, output_jacobians(net, cache), gram(x, KernelSpec::for_dim(2)));
        for (std::size_t l = 0; l < 2; ++l) states[l] = update_state(std::move(states[l]), f[l]);
        for (auto& w : net.weights(0).data()) w += 0.05 * standard_normal(rng);
    }
    for (const auto& st : states) {
        EXPECT_TRUE(is_symmetric(st.a_factor, 0.0));
        EXPECT_TRUE(is_symmetric(st.s_factor, 0.0));
        EXPECT_TRUE(oracle::charpoly_positive_definite(add_diagonal(st.a_factor, 1e-9)));
        EXPECT_TRUE(oracle::charpoly_positive_definite(add_diagonal(st.s_factor, 1e-9)));
    }
}

TEST(Factors, KernelScaleMultipliesStepByConstantSquared) {
    const MlpNetwork net(mlp_layers({1, 3, 2}, Activation::tanh), 9);
    const DenseMatrix x{{-1.0}, {0.0}, {0.6}, {1.4}};
    KernelSpec spec = KernelSpec::for_dim(1);
    spec.input_scale = 1.0;
    const DenseMatrix k = kernel_matrix(x, spec);
    const BatchCache cache = forward(net, x);
    const OutputJacobians oj = output_jacobians(net, cache);
    const auto f1 = compute_factors(cache, oj, gram_from_values(k, 0.0));
    const double c = 3.0;
    const auto fc = compute_factors(cache, oj, gram_from_values(k * c, 0.0));
    Rng rng = make_rng(9, "test");
    for (std::size_t l = 0; l < 2; ++l) {
        EXPECT_LT(oracle::max_abs_diff(fc[l].a, f1[l].a * (1.0 / c)), 1e-12);
        EXPECT_LT(oracle::max_abs_diff(fc[l].s, f1[l].s * (1.0 / c)), 1e-12);
        const DenseMatrix v = random_matrix(f1[l].s.rows(), f1[l].a.rows(), rng);
        KfacLayerState s1 = state_with(f1[l].a, f1[l].s, 0.0, KfacDamping::eigen_exact);
        KfacLayerState sc = state_with(fc[l].a, fc[l].s, 0.0, KfacDamping::eigen_exact);
        const DenseMatrix p1 = precondition(s1, v);
        EXPECT_LT(oracle::max_abs_diff(precondition(sc, v), p1 * (c * c)), 1e-8 * std::max(1.0, oracle::max_abs(p1)));
    }
}
