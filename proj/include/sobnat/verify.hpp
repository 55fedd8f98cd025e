#pragma once
// Property suites run by `sobnat verify`: each suite checks a family of
// identities against independent computations and reports one line per property.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "errors.hpp"
#include "flatness.hpp"
#include "kfac.hpp"
#include "linalg.hpp"
#include "loss.hpp"
#include "metric.hpp"
#include "network.hpp"
#include "quadrature.hpp"
#include "riemann_descent.hpp"
#include "rkhs.hpp"
#include "rng.hpp"
#include "sobolev_kernel.hpp"

namespace sobnat {

struct PropertyResult {
    std::string suite;
    std::string name;
    bool passed = false;
    std::string detail;
};

struct VerifyOptions {
    // Multiplies the kernel constant inside the kernel suite; 1.01 is the mutation check.
    double kernel_constant_factor = 1.0;
    std::uint64_t seed = 0;
};

inline const std::vector<std::string>& suite_names() {
    static const std::vector<std::string> names{"kernel",       "gradcheck", "exactness", "twopath",  "orthonormality",
                                                "kfac",         "quadrature", "flatness", "mirror",   "rate"};
    return names;
}

namespace verify_detail {

inline std::string sci(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", v);
    return buf;
}

// Runs `body`, which returns the measured error, and compares it with `tol`.
inline PropertyResult check(const std::string& suite, const std::string& name, double tol,
                            const std::function<double()>& body) {
    PropertyResult r{suite, name, false, {}};
    try {
        const double err = body();
        r.passed = err <= tol;
        r.detail = "error " + sci(err) + " (tolerance " + sci(tol) + ")";
    } catch (const Error& e) {
        r.detail = std::string(e.kind()) + ": " + e.what();
    }
    return r;
}

inline double rel_err(const DenseMatrix& got, const DenseMatrix& want) {
    return max_abs_diff(got, want) / std::max(max_abs(want), 1e-300);
}

inline double rel_err(std::span<const double> got, std::span<const double> want) {
    double m = 0.0;
    for (double v : want) m = std::max(m, std::abs(v));
    return max_abs_diff(got, want) / std::max(m, 1e-300);
}

inline DenseMatrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
    DenseMatrix m(r, c);
    for (auto& v : m.data()) v = scale * standard_normal(rng);
    return m;
}

// Smooth random MLP with at most `max_params` parameters and nonzero biases.
inline MlpNetwork random_net(Rng& rng, std::size_t max_params, std::size_t max_out = 3) {
    static constexpr Activation acts[] = {Activation::tanh, Activation::sigmoid, Activation::identity};
    while (true) {
        std::vector<std::size_t> dims{1 + uniform_index(rng, 3)};
        const std::size_t hidden = 1 + uniform_index(rng, 2);
        for (std::size_t h = 0; h < hidden; ++h) dims.push_back(1 + uniform_index(rng, 6));
        dims.push_back(1 + uniform_index(rng, max_out));
        const Activation act = acts[uniform_index(rng, 2)];
        auto layers = mlp_layers(dims, act, acts[uniform_index(rng, 3)]);
        MlpNetwork net(layers, rng());
        if (net.parameter_count() > max_params) continue;
        Vector p = net.parameters();
        for (auto& v : p) v += 0.3 * standard_normal(rng);
        net.set_parameters(p);
        return net;
    }
}

inline double central_difference(const std::function<double(double)>& f, double x, double h = 1e-6) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

// r-space inverse Fourier transform of (1 + xi^2)^{-2}: (1/pi) int_0^inf cos(xi r) (1 + xi^2)^{-2}.
inline double ift_1d(double r) {
    double s = 0.0;
    for (int k = 0; k < 2000; ++k) {
        s += integrate_adaptive([r](double xi) { return std::cos(xi * r) / ((1.0 + xi * xi) * (1.0 + xi * xi)); },
                                k, k + 1.0, 1e-14);
    }
    return s / std::numbers::pi;
}

// Radial inverse transform of (1 + |xi|^2)^{-3} in three dimensions.
inline double ift_3d(double r) {
    auto profile = [](double xi) {
        const double q = 1.0 + xi * xi;
        return 1.0 / (q * q * q);
    };
    double s = 0.0;
    for (int k = 0; k < 400; ++k) {
        s += integrate_adaptive(
            [&](double xi) { return r == 0.0 ? xi * xi * profile(xi) : xi * std::sin(xi * r) / r * profile(xi); }, k,
            k + 1.0, 1e-15);
    }
    return s / (2.0 * std::numbers::pi * std::numbers::pi);
}

}  // namespace verify_detail

inline std::vector<PropertyResult> verify_kernel(const VerifyOptions& opt) {
    using namespace verify_detail;
    std::vector<PropertyResult> out;
    KernelSpec one = KernelSpec::for_dim(1, ConstantMode::exact_dimension_constant);
    one.constant_factor = opt.kernel_constant_factor;
    out.push_back(check("kernel", "n=1 d(0) equals 1/4", 0.0, [&] { return std::abs(point_kernel(0.0, one) - 0.25); }));
    out.push_back(check("kernel", "n=1 closed form matches inverse Fourier quadrature", 1e-6, [&] {
        double worst = 0.0;
        for (double r : {0.0, 0.5, 1.0, 2.0, 5.0}) worst = std::max(worst, std::abs(point_kernel(r, one) - ift_1d(r)));
        return worst;
    }));
    KernelSpec three = KernelSpec::for_dim(3, ConstantMode::fourier_normalized);
    three.constant_factor = opt.kernel_constant_factor;
    out.push_back(check("kernel", "n=3 Fourier-normalized closed form matches radial quadrature", 1e-6, [&] {
        double worst = 0.0;
        for (double r : {0.0, 0.5, 1.0, 2.0, 5.0}) {
            const double want = ift_3d(r);
            worst = std::max(worst, std::abs(point_kernel(r, three) - want) / ift_3d(0.0));
        }
        return worst;
    }));
    return out;
}

inline std::vector<PropertyResult> verify_gradcheck(const VerifyOptions& opt) {
    using namespace verify_detail;
    Rng rng = make_rng(opt.seed, "verify-gradcheck");
    double loss_err = 0.0;
    double ds_err = 0.0;
    double jac_err = 0.0;
    bool failed = false;
    std::string failure;
    try {
        for (int trial = 0; trial < 20; ++trial) {
            MlpNetwork net = random_net(rng, 200);
            const std::size_t b = 2 + uniform_index(rng, 4);
            const DenseMatrix x = random_matrix(b, net.input_dim(), rng);
            const LossKind kind =
                trial % 2 == 0 || net.output_dim() == 1 ? LossKind::squared : LossKind::softmax_cross_entropy;
            DenseMatrix y(b, net.output_dim());
            for (std::size_t r = 0; r < b; ++r) y(r, uniform_index(rng, net.output_dim())) = 1.0;
            const BatchCache cache = forward(net, x);
            const Vector theta = net.parameters();
            const std::size_t p = theta.size();

            // Loss gradient.
            const Vector g = flatten(backward_loss(net, cache, y, kind));
            Vector fd(p);
            for (std::size_t i = 0; i < p; ++i) {
                fd[i] = central_difference(
                    [&](double v) {
                        MlpNetwork n2 = net;
                        Vector t = theta;
                        t[i] = v;
                        n2.set_parameters(t);
                        return batch_loss(kind, predict(n2, x), y);
                    },
                    theta[i]);
            }
            loss_err = std::max(loss_err, rel_err(g, fd));

            // Parameter Jacobian; bias columns also give dphi/ds_l.
            const OutputJacobians oj = output_jacobians(net, cache);
            const DenseMatrix j = param_jacobian(net, cache, oj);
            DenseMatrix jfd(p, b * net.output_dim());
            for (std::size_t i = 0; i < p; ++i) {
                MlpNetwork hi = net;
                MlpNetwork lo = net;
                Vector t = theta;
                const double h = 1e-6;
                t[i] = theta[i] + h;
                hi.set_parameters(t);
                t[i] = theta[i] - h;
                lo.set_parameters(t);
                const DenseMatrix d = (predict(hi, x) - predict(lo, x)) * (0.5 / h);
                std::copy(d.data().begin(), d.data().end(), jfd.row(i).begin());
            }
            jac_err = std::max(jac_err, rel_err(j, jfd));

            const std::size_t m = net.output_dim();
            for (std::size_t l = 0; l < net.depth(); ++l) {
                const std::size_t cols = net.layers()[l].in_dim + 1;
                for (std::size_t c = 0; c < m; ++c) {
                    DenseMatrix want(b, net.layers()[l].out_dim);
                    for (std::size_t k = 0; k < want.cols(); ++k) {
                        const auto row = jfd.row(net.layer_offset(l) + k * cols + (cols - 1));
                        for (std::size_t r = 0; r < b; ++r) want(r, k) = row[r * m + c];
                    }
                    ds_err = std::max(ds_err, rel_err(oj.ds[l][c], want));
                }
            }
        }
    } catch (const Error& e) {
        failed = true;
        failure = std::string(e.kind()) + ": " + e.what();
    }
    std::vector<PropertyResult> out;
    const double tol = 1e-5;
    for (auto [name, err] : {std::pair{"loss gradients match central differences", loss_err},
                             std::pair{"output Jacobians match central differences", ds_err},
                             std::pair{"parameter Jacobians match central differences", jac_err}}) {
        PropertyResult r{"gradcheck", name, !failed && err <= tol,
                         failed ? failure : "max relative error " + sci(err) + " (tolerance " + sci(tol) + ")"};
        out.push_back(r);
    }
    return out;
}

inline std::vector<PropertyResult> verify_exactness(const VerifyOptions& opt) {
    using namespace verify_detail;
    std::vector<PropertyResult> out;
    out.push_back(check("exactness", "kernel machine: projected metric equals the Gram matrix", 1e-10, [&] {
        Rng rng = make_rng(opt.seed, "verify-exactness");
        double worst = 0.0;
        for (int trial = 0; trial < 5; ++trial) {
            const std::size_t n = 1 + uniform_index(rng, 3);
            const std::size_t b = 2 + uniform_index(rng, 7);
            KernelSpec spec = KernelSpec::for_dim(n);
            spec.jitter = 0.0;
            const DenseMatrix pts = random_matrix(b, n, rng);
            // phi_theta(x) = sum_a theta_a d(x, x_a): dphi(x_i)/dtheta_a = K[a][i].
            const GramMatrix k = gram(pts, spec);
            const DenseMatrix j = k.values();
            worst = std::max(worst, max_abs_diff(estimate_metric(j, k).values, k.values()));
        }
        return worst;
    }));
    out.push_back(check("exactness", "identity kernel: projected metric equals J J^T", 0.0, [&] {
        Rng rng = make_rng(opt.seed, "verify-exactness-identity");
        double worst = 0.0;
        for (int trial = 0; trial < 5; ++trial) {
            const MlpNetwork net = random_net(rng, 60);
            const std::size_t b = 2 + uniform_index(rng, 7);
            const DenseMatrix j = param_jacobian(net, random_matrix(b, net.input_dim(), rng));
            worst = std::max(worst, max_abs_diff(estimate_metric(j, identity_gram(b)).values, matmul_nt(j, j)));
        }
        return worst;
    }));
    return out;
}

inline std::vector<PropertyResult> verify_twopath(const VerifyOptions& opt) {
    using namespace verify_detail;
    return {check("twopath", "projected coefficients equal natural gradient of the pulled-back loss", 1e-9, [&] {
        Rng rng = make_rng(opt.seed, "verify-twopath");
        double worst = 0.0;
        for (int trial = 0; trial < 10; ++trial) {
            const MlpNetwork net = random_net(rng, 40, 2);
            const std::size_t b = 4 + uniform_index(rng, 8);
            const DenseMatrix x = random_matrix(b, net.input_dim(), rng);
            DenseMatrix y = random_matrix(b, net.output_dim(), rng);
            KernelSpec spec = KernelSpec::for_dim(net.input_dim());
            spec.input_scale = 1.0;
            const GramMatrix k = gram(scaled_points(x, spec), spec);
            const double damping = 1e-3;
            const BatchCache cache = forward(net, x);
            const DenseMatrix j = param_jacobian(net, cache, output_jacobians(net, cache));

            // Parameter path: natural gradient of the summed loss, gradient by backprop.
            Vector grad = flatten(backward_loss(net, cache, y, LossKind::squared));
            for (auto& v : grad) v *= static_cast<double>(b);
            const Vector param_path = natural_gradient(estimate_metric(j, k, damping), grad);

            // Function path: Riesz representer rho = K r of the loss differential in
            // the batch RKHS, projected onto span{dphi/dtheta_i} in <u, v> = u^T K^{-1} v.
            const std::size_t m = net.output_dim();
            DenseMatrix r(b, m);
            for (std::size_t i = 0; i < b; ++i)
                for (std::size_t c = 0; c < m; ++c) r(i, c) = cache.outputs(i, c) - y(i, c);
            const DenseMatrix kj = add_diagonal(k.values(), k.jitter_used());
            const DenseMatrix rho = matmul(kj, r);
            const std::size_t p = j.rows();
            DenseMatrix gram_t(p, p);
            Vector rhs(p);
            for (std::size_t c = 0; c < m; ++c) {
                const DenseMatrix jc = transpose(detail::component_columns(j, m, c));  // B x P
                const DenseMatrix w = k.whiten(jc);
                DenseMatrix rc(b, 1);
                for (std::size_t i = 0; i < b; ++i) rc(i, 0) = rho(i, c);
                const DenseMatrix wr = k.whiten(rc);
                gram_t += matmul_tn(w, w);
                const DenseMatrix proj = matmul_tn(w, wr);
                for (std::size_t i = 0; i < p; ++i) rhs[i] += proj(i, 0);
            }
            const Vector func_path = Cholesky(add_diagonal(gram_t, damping)).solve(rhs);
            worst = std::max(worst, rel_err(func_path, param_path));
        }
        return worst;
    })};
}

inline std::vector<PropertyResult> verify_orthonormality(const VerifyOptions& opt) {
    using namespace verify_detail;
    std::vector<PropertyResult> out;
    out.push_back(check("orthonormality", "random feature bases are orthonormal under their own kernel", 1e-8, [&] {
        Rng rng = make_rng(opt.seed, "verify-basis");
        double worst = 0.0;
        for (std::size_t d = 1; d <= 5; ++d) {
            const std::size_t n = 1 + uniform_index(rng, 2);
            const std::size_t m = 1 + uniform_index(rng, 2);
            std::vector<BasisFunction> basis;
            for (std::size_t i = 0; i < d; ++i) {
                const DenseMatrix w = random_matrix(m, n, rng);
                const Vector shift{standard_normal(rng), standard_normal(rng)};
                basis.push_back([w, shift](std::span<const double> x) {
                    Vector v(w.rows());
                    for (std::size_t c = 0; c < w.rows(); ++c) {
                        double s = shift[c % 2];
                        for (std::size_t k = 0; k < w.cols(); ++k) s += w(c, k) * x[k];
                        v[c] = std::sin(s) + 0.5 * std::cos(2.0 * s);
                    }
                    return v;
                });
            }
            const DenseMatrix probes = random_matrix(3 * d + 4, n, rng);
            worst = std::max(worst, max_abs_diff(check_basis_orthonormality(basis, probes, m), DenseMatrix::identity(d)));
        }
        return worst;
    }));
    out.push_back(check("orthonormality", "NTK tangent bases are orthonormal under the tangent kernel", 1e-8, [&] {
        Rng rng = make_rng(opt.seed, "verify-ntk-basis");
        double worst = 0.0;
        for (std::size_t d = 1; d <= 5; ++d) {
            const MlpNetwork net = random_net(rng, 60, 2);
            std::vector<std::size_t> subset;
            for (std::size_t i = 0; i < d && i < net.parameter_count(); ++i)
                subset.push_back((i * 7 + d) % net.parameter_count());
            std::sort(subset.begin(), subset.end());
            subset.erase(std::unique(subset.begin(), subset.end()), subset.end());
            std::vector<BasisFunction> basis;
            for (auto idx : subset) {
                basis.push_back([net, idx](std::span<const double> x) {
                    DenseMatrix xm(1, x.size(), Vector(x.begin(), x.end()));
                    const DenseMatrix j = param_jacobian(net, xm);
                    const auto row = j.row(idx);
                    return Vector(row.begin(), row.end());
                });
            }
            const DenseMatrix probes = random_matrix(3 * d + 6, net.input_dim(), rng);
            worst = std::max(worst, max_abs_diff(check_basis_orthonormality(basis, probes, net.output_dim()),
                                                 DenseMatrix::identity(subset.size())));
        }
        return worst;
    }));
    return out;
}

// Dense metric block of layer l, parameters in row-major order of Wbar_l.
inline DenseMatrix layer_block(const MlpNetwork& net, const DenseMatrix& metric, std::size_t l) {
    const std::size_t off = net.layer_offset(l);
    const std::size_t n = net.layer_parameter_count(l);
    DenseMatrix blk(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < n; ++k) blk(i, k) = metric(off + i, off + k);
    return blk;
}

inline std::vector<PropertyResult> verify_kfac(const VerifyOptions& opt) {
    using namespace verify_detail;
    std::vector<PropertyResult> out;
    // Row-major parameters of Wbar = [W b] give the block kron(S, A).
    auto compare = [](const MlpNetwork& net, const DenseMatrix& x, const GramMatrix& k, std::size_t l, double scale) {
        const BatchCache cache = forward(net, x);
        const OutputJacobians oj = output_jacobians(net, cache);
        const DenseMatrix j = param_jacobian(net, cache, oj);
        const DenseMatrix dense = layer_block(net, estimate_metric(j, k).values, l) *
                                  (1.0 / static_cast<double>(x.rows()));
        const auto f = compute_factors(cache, oj, k);
        return rel_err(kron(f[l].s, f[l].a) * scale, dense);
    };
    out.push_back(check("kfac", "identity kernel, linear output layer: Kronecker block is exact", 1e-10, [&] {
        Rng rng = make_rng(opt.seed, "verify-kfac-gn");
        double worst = 0.0;
        for (int trial = 0; trial < 5; ++trial) {
            const std::size_t in = 1 + uniform_index(rng, 3);
            const std::size_t h = 2 + uniform_index(rng, 4);
            const std::size_t m = 1 + uniform_index(rng, 3);
            const MlpNetwork net(mlp_layers({in, h, m}, Activation::tanh), rng());
            const std::size_t b = 3 + uniform_index(rng, 6);
            worst = std::max(worst, compare(net, random_matrix(b, in, rng), identity_gram(b), 1, 1.0));
        }
        return worst;
    }));
    out.push_back(check("kfac", "single-sample batch: every layer's Kronecker block is exact", 1e-10, [&] {
        Rng rng = make_rng(opt.seed, "verify-kfac-single");
        double worst = 0.0;
        for (int trial = 0; trial < 5; ++trial) {
            const MlpNetwork net = random_net(rng, 80);
            KernelSpec spec = KernelSpec::for_dim(net.input_dim());
            spec.jitter = 0.0;
            const DenseMatrix x = random_matrix(1, net.input_dim(), rng);
            const GramMatrix k = gram(scaled_points(x, spec), spec);
            for (std::size_t l = 0; l < net.depth(); ++l) worst = std::max(worst, compare(net, x, k, l, 1.0));
        }
        return worst;
    }));
    out.push_back(check("kfac", "Sobolev kernel, linear output layer: block equals kron(S, A) B / 1^T K^-1 1", 1e-10, [&] {
        Rng rng = make_rng(opt.seed, "verify-kfac-sobolev");
        double worst = 0.0;
        for (int trial = 0; trial < 5; ++trial) {
            const std::size_t in = 1 + uniform_index(rng, 3);
            const std::size_t m = 1 + uniform_index(rng, 3);
            const MlpNetwork net(mlp_layers({in, 4, m}, Activation::tanh), rng());
            const std::size_t b = 3 + uniform_index(rng, 6);
            KernelSpec spec = KernelSpec::for_dim(in);
            spec.input_scale = 1.0;
            const DenseMatrix x = random_matrix(b, in, rng);
            const GramMatrix k = gram(scaled_points(x, spec), spec);
            const DenseMatrix ones(b, 1, Vector(b, 1.0));
            const DenseMatrix w = k.whiten(ones);
            const double mass = matmul_tn(w, w)(0, 0);
            worst = std::max(worst, compare(net, x, k, 1, static_cast<double>(b) / mass));
        }
        return worst;
    }));
    out.push_back(check("kfac", "kron_precondition matches the explicit Kronecker inverse", 1e-12, [&] {
        Rng rng = make_rng(opt.seed, "verify-kfac-precondition");
        double worst = 0.0;
        for (int trial = 0; trial < 10; ++trial) {
            const std::size_t da = 1 + uniform_index(rng, 5);
            const std::size_t ds = 1 + uniform_index(rng, 5);
            const DenseMatrix a = random_spd(da, 1.0, 3.0, rng);
            const DenseMatrix s = random_spd(ds, 1.0, 3.0, rng);
            const DenseMatrix v = random_matrix(ds, da, rng);
            const DenseMatrix fast = kron_precondition(spd_inverse(a), spd_inverse(s), v);
            const Vector slow = Cholesky(kron(a, s)).solve(vec(v));
            worst = std::max(worst, rel_err(vec(fast), slow));
        }
        return worst;
    }));
    return out;
}

inline std::vector<PropertyResult> verify_quadrature(const VerifyOptions& opt) {
    using namespace verify_detail;
    return {check("quadrature", "1-1-1 linear net: L2 pullback metric is [[w2^2, w1 w2], [w1 w2, w1^2]]", 1e-8, [&] {
        Rng rng = make_rng(opt.seed, "verify-quadrature");
        double worst = 0.0;
        for (int trial = 0; trial < 5; ++trial) {
            const double w1 = standard_normal(rng);
            const double w2 = standard_normal(rng);
            const auto layers = mlp_layers({1, 1, 1}, Activation::identity);
            // Parameters: [w1, b1] then [w2, b2]; b1 = 0 keeps the closed form.
            const MlpNetwork net(layers, {DenseMatrix(1, 2, {w1, 0.0}), DenseMatrix(1, 2, {w2, standard_normal(rng)})});
            const PullbackMetric g = exact_pullback_quadrature(net, InputMeasure::standard_normal(), 8, {0, 2});
            const DenseMatrix want(2, 2, {w2 * w2, w1 * w2, w1 * w2, w1 * w1});
            worst = std::max(worst, max_abs_diff(g.values, want));
        }
        return worst;
    })};
}

inline std::vector<PropertyResult> verify_flatness(const VerifyOptions&) {
    using namespace verify_detail;
    std::vector<PropertyResult> out;
    auto pullback_query = [](const std::string& toy, double eps) {
        FlatnessToy t = flatness_toy(toy);
        t.query.epsilon = eps;
        t.query.source = MetricSource::supplied;
        t.query.metric = t.pullback;
        return t.query;
    };
    out.push_back(check("flatness", "1-D quadratic, eps 0.04, unit metric: volume 2 sqrt(eps)", 1e-3, [&] {
        return std::abs(epsilon_flatness(pullback_query("quadratic1d", 0.04)).volume - 0.4) / 0.4;
    }));
    for (const std::string toy : {"quadratic1d", "quadratic2d"}) {
        for (const std::string rp : {"scale:2", "tanh:0.5"}) {
            out.push_back(check("flatness", toy + " pullback volume invariant under " + rp, 0.02, [&] {
                return invariance_check(pullback_query(toy, 0.04), parse_reparam(rp)).discrepancy;
            }));
        }
    }
    // Expected failure of the coordinate-dependent measure, asserted as a change of at least 25%.
    out.push_back(check("flatness", "euclidean volume is not invariant under scale:2", 0.0, [&] {
        FlatnessToy t = flatness_toy("quadratic1d");
        t.query.epsilon = 0.04;
        const double d = invariance_check(t.query, parse_reparam("scale:2")).discrepancy;
        return d >= 0.25 ? 0.0 : 0.25 - d;
    }));
    return out;
}

inline std::vector<PropertyResult> verify_mirror(const VerifyOptions& opt) {
    using namespace verify_detail;
    std::vector<PropertyResult> out;
    out.push_back(check("mirror", "mirror_step with alpha = C L equals grad_step", 0.0, [&] {
        Rng rng = make_rng(opt.seed, "verify-mirror");
        double worst = 0.0;
        for (int trial = 0; trial < 100; ++trial) {
            const std::size_t n = 1 + uniform_index(rng, 4);
            const RiemannProblem p = quadratic_problem(random_spd(n, 0.5, 4.0, rng), random_spd(n, 0.5, 2.0, rng));
            Vector x(n);
            for (auto& v : x) v = 3.0 * standard_normal(rng);
            worst = std::max(worst, max_abs_diff(mirror_step(p, x, p.compat_C * p.lipschitz_L), grad_step(p, x)));
        }
        return worst;
    }));
    out.push_back(check("mirror", "Bregman divergence of 1/2 |z|_G^2 equals 1/2 |x - y|_G^2", 1e-12, [&] {
        Rng rng = make_rng(opt.seed, "verify-bregman");
        double worst = 0.0;
        for (int trial = 0; trial < 100; ++trial) {
            const std::size_t n = 1 + uniform_index(rng, 4);
            const DenseMatrix g = random_spd(n, 0.5, 2.0, rng);
            Vector x(n);
            Vector y(n);
            Vector d(n);
            for (std::size_t i = 0; i < n; ++i) {
                x[i] = standard_normal(rng);
                y[i] = standard_normal(rng);
                d[i] = x[i] - y[i];
            }
            const double want = 0.5 * dot(d, matvec(g, d));
            worst = std::max(worst, std::abs(bregman(g, x, y) - want) / std::max(1.0, want));
        }
        return worst;
    }));
    return out;
}

inline std::vector<PropertyResult> verify_rate(const VerifyOptions& opt) {
    using namespace verify_detail;
    std::vector<PropertyResult> out;
    out.push_back(check("rate", "per-step decrease is at least Prog on random convex quadratics", 0.0, [&] {
        Rng rng = make_rng(opt.seed, "verify-decrease");
        double worst = 0.0;
        for (int trial = 0; trial < 100; ++trial) {
            const std::size_t n = 1 + uniform_index(rng, 5);
            const RiemannProblem p = trial % 2 == 0
                                         ? quadratic_problem(random_spd(n, 0.1, 5.0, rng), random_spd(n, 0.2, 3.0, rng))
                                         : quadratic_problem_diagonal_field(random_spd(n, 0.1, 5.0, rng),
                                                                            Vector(n, 0.5), Vector(n, 2.0));
            Vector x(n);
            for (auto& v : x) v = 2.0 * standard_normal(rng);
            for (int k = 0; k < 20; ++k) {
                const double fx = p.f(x);
                const double pr = prog(p, x);
                x = grad_step(p, x);
                const double shortfall = pr - (fx - p.f(x));
                worst = std::max(worst, shortfall - 1e-12 * std::max(1.0, std::abs(fx)));
            }
        }
        return std::max(0.0, worst);
    }));
    out.push_back(check("rate", "f(x_T) - f* <= 2 L C R^2 / T for every T <= 200", 0.0, [&] {
        Rng rng = make_rng(opt.seed, "verify-rate");
        for (int start = 0; start < 20; ++start) {
            const std::size_t n = 2 + uniform_index(rng, 3);
            const RiemannProblem p = start % 2 == 0
                                         ? quadratic_problem(random_spd(n, 0.05, 5.0, rng), random_spd(n, 0.2, 3.0, rng))
                                         : quadratic_problem_diagonal_field(random_spd(n, 0.05, 5.0, rng),
                                                                            Vector(n, 0.5), Vector(n, 2.0));
            Vector x(n);
            for (auto& v : x) v = 3.0 * standard_normal(rng);
            verify_rate(p, x, 200);
        }
        return 0.0;
    }));
    return out;
}

inline std::vector<PropertyResult> run_suite(const std::string& name, const VerifyOptions& opt = {}) {
    if (name == "kernel") return verify_kernel(opt);
    if (name == "gradcheck") return verify_gradcheck(opt);
    if (name == "exactness") return verify_exactness(opt);
    if (name == "twopath") return verify_twopath(opt);
    if (name == "orthonormality") return verify_orthonormality(opt);
    if (name == "kfac") return verify_kfac(opt);
    if (name == "quadrature") return verify_quadrature(opt);
    if (name == "flatness") return verify_flatness(opt);
    if (name == "mirror") return verify_mirror(opt);
    if (name == "rate") return verify_rate(opt);
    throw InvalidArgument("unknown suite '" + name + "'");
}

inline std::vector<PropertyResult> run_all(const VerifyOptions& opt = {}) {
    std::vector<PropertyResult> out;
    for (const auto& s : suite_names()) {
        auto r = run_suite(s, opt);
        out.insert(out.end(), r.begin(), r.end());
    }
    return out;
}

}  // namespace sobnat
