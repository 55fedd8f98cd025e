// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "sobnat/experiment_log.hpp"
#include "sobnat/flatness.hpp"
#include "sobnat/kfac.hpp"
#include "sobnat/metric.hpp"
#include "sobnat/optimizers.hpp"
#include "sobnat/riemann_descent.hpp"
#include "sobnat/rkhs.hpp"

using namespace sobnat;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

DenseMatrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
    DenseMatrix m(r, c);
    for (auto& v : m.data()) v = scale * standard_normal(rng);
    return m;
}

Vector random_vector(std::size_t n, Rng& rng, double scale = 1.0) {
    Vector v(n);
    for (auto& x : v) x = scale * standard_normal(rng);
    return v;
}

MlpNetwork random_net(const std::vector<std::size_t>& dims, Activation hidden, Activation output, std::uint64_t seed) {
    MlpNetwork net(mlp_layers(dims, hidden, output), seed);
    Rng rng = make_rng(seed, "bias");
    for (std::size_t l = 0; l < net.depth(); ++l) {
        auto& w = net.weights(l);
        for (std::size_t i = 0; i < w.rows(); ++i) w(i, w.cols() - 1) = 0.3 * standard_normal(rng);
    }
    return net;
}

double rel_err(double got, double want) { return std::abs(got - want) / std::max(1.0, std::abs(want)); }

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

// Central difference of every network output over the batch w.r.t. parameter i.
DenseMatrix fd_outputs(MlpNetwork net, std::size_t i, const DenseMatrix& x, double h = 1e-5) {
    Vector p = net.parameters();
    const double p0 = p[i];
    p[i] = p0 + h;
    net.set_parameters(p);
    DenseMatrix up = predict(net, x);
    p[i] = p0 - h;
    net.set_parameters(p);
    const DenseMatrix down = predict(net, x);
    for (std::size_t k = 0; k < up.data().size(); ++k) up.data()[k] = (up.data()[k] - down.data()[k]) / (2.0 * h);
    return up;
}

double fd_loss(MlpNetwork net, std::size_t i, const DenseMatrix& x, const DenseMatrix& y, LossKind loss,
               double h = 1e-5) {
    Vector p = net.parameters();
    const double p0 = p[i];
    p[i] = p0 + h;
    net.set_parameters(p);
    const double up = batch_loss(loss, predict(net, x), y);
    p[i] = p0 - h;
    net.set_parameters(p);
    return (up - batch_loss(loss, predict(net, x), y)) / (2.0 * h);
}

KernelSpec exact_spec(std::size_t n, double jitter) {
    KernelSpec s = KernelSpec::for_dim(n, ConstantMode::exact_dimension_constant);
    s.input_scale = 1.0;
    s.jitter = jitter;
    return s;
}

Outcome kernel_oracle() {
    const KernelSpec spec = exact_spec(1, 0.0);
    double worst = 0.0;
    for (double r : {0.0, 0.5, 1.0, 2.0, 5.0}) {
        // (1/pi) int_0^inf cos(r xi) (1 + xi^2)^{-2} d xi; the tail past 400 is below 1e-8.
        const double integral = oracle::panel_simpson(
            [r](double xi) { return std::cos(r * xi) / ((1.0 + xi * xi) * (1.0 + xi * xi)); }, 0.0, 400.0);
        worst = std::max(worst, std::abs(point_kernel(r, spec) - integral / std::numbers::pi));
    }
    const bool at_zero = point_kernel(0.0, spec) == 0.25;
    return {worst <= 1e-6 && at_zero, "max |d - IFT| " + fmt(worst) + ", d(0) == 1/4 " + (at_zero ? "yes" : "no")};
}

Outcome gradient_checks() {
    const std::vector<std::vector<std::size_t>> shapes{{2, 5, 3},    {3, 6, 2},     {1, 8, 1},    {2, 4, 4, 2},
                                                       {4, 10, 3},   {2, 16, 2},    {3, 5, 5, 3}, {1, 3, 3, 1},
                                                       {5, 12, 4},   {2, 8, 8, 2}};
    const Activation hidden[3] = {Activation::tanh, Activation::sigmoid, Activation::identity};
    double worst = 0.0;
    std::size_t max_params = 0;
    for (std::uint64_t k = 0; k < 20; ++k) {
        const auto& dims = shapes[k % shapes.size()];
        const MlpNetwork net = random_net(dims, hidden[k % 3], k % 4 == 3 ? Activation::sigmoid : Activation::identity,
                                          100 + k);
        max_params = std::max(max_params, net.parameter_count());
        Rng rng = make_rng(100 + k, "inputs");
        const std::size_t b = 3;
        const std::size_t m = dims.back();
        const DenseMatrix x = random_matrix(b, dims.front(), rng);
        DenseMatrix y(b, m);
        for (std::size_t r = 0; r < b; ++r) y(r, r % m) = 1.0;
        const LossKind loss = k % 2 == 0 ? LossKind::squared : LossKind::softmax_cross_entropy;

        const BatchCache cache = forward(net, x);
        const Vector grad = flatten(backward_loss(net, cache, y, loss));
        const OutputJacobians oj = output_jacobians(net, cache);
        const DenseMatrix j = param_jacobian(net, x);
        for (std::size_t i = 0; i < net.parameter_count(); ++i) {
            worst = std::max(worst, rel_err(grad[i], fd_loss(net, i, x, y, loss)));
            const DenseMatrix fd = fd_outputs(net, i, x);
            for (std::size_t r = 0; r < b; ++r)
                for (std::size_t c = 0; c < m; ++c) worst = std::max(worst, rel_err(j(i, r * m + c), fd(r, c)));
        }
        // A bias moves its pre-activation one for one, so its column is Ds.
        for (std::size_t l = 0; l < net.depth(); ++l) {
            const std::size_t in = net.layers()[l].in_dim;
            for (std::size_t u = 0; u < net.layers()[l].out_dim; ++u) {
                const DenseMatrix fd = fd_outputs(net, net.layer_offset(l) + u * (in + 1) + in, x);
                for (std::size_t r = 0; r < b; ++r)
                    for (std::size_t c = 0; c < m; ++c) worst = std::max(worst, rel_err(oj.ds[l][c](r, u), fd(r, c)));
            }
        }
    }
    return {worst <= 1e-5 && max_params <= 200,
            "max relative error " + fmt(worst) + " over 20 nets (largest " + std::to_string(max_params) + " parameters)"};
}

Outcome metric_exactness() {
    Rng rng = make_rng(3, "acceptance");
    double worst_kernel = 0.0;
    for (std::size_t trial = 0; trial < 5; ++trial) {
        const std::size_t b = 4 + trial;  // 4..8
        const std::size_t n = 1 + trial % 2;
        DenseMatrix pts = random_matrix(b, n, rng, 2.0);
        const KernelSpec spec = exact_spec(n, 0.0);
        // f_theta(x) = sum_i theta_i K(x, x_i): J(i, b) = K(x_b, x_i).
        const DenseMatrix k = kernel_matrix(pts, spec);
        const PullbackMetric g = estimate_metric(k, gram(pts, spec));
        worst_kernel = std::max(worst_kernel, oracle::max_abs_diff(g.values, k) / oracle::max_abs(k));
    }
    double worst_identity = 0.0;
    for (int trial = 0; trial < 5; ++trial) {
        const DenseMatrix j = random_matrix(6, 8, rng);
        const PullbackMetric g = estimate_metric(j, identity_gram(4));
        worst_identity = std::max(worst_identity, oracle::max_abs_diff(g.values, oracle::naive_matmul(j, transpose(j))));
    }
    return {worst_kernel <= 1e-10 && worst_identity == 0.0,
            "kernel machine max error " + fmt(worst_kernel) + ", K = I max error " + fmt(worst_identity)};
}

// Batch with pairwise distances >= 0.3 so the explicit K^-1 below stays accurate.
DenseMatrix separated_points(std::size_t b, std::size_t n, Rng& rng) {
    for (;;) {
        const DenseMatrix x = random_matrix(b, n, rng, 2.0);
        bool ok = true;
        for (std::size_t i = 0; i < b && ok; ++i)
            for (std::size_t j = i + 1; j < b && ok; ++j) ok = distance(x.row(i), x.row(j)) >= 0.3;
        if (ok) return x;
    }
}

Outcome two_path_agreement() {
    const double lambda = 1e-3;
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const std::size_t n = 1 + seed % 2;
        const std::size_t m = 1 + (seed / 2) % 2;
        const MlpNetwork net = random_net({n, 3, m}, seed % 3 == 0 ? Activation::sigmoid : Activation::tanh,
                                          Activation::identity, 200 + seed);
        Rng rng = make_rng(seed, "acceptance");
        const std::size_t b = 10;
        const DenseMatrix x = separated_points(b, n, rng);
        const DenseMatrix y = random_matrix(b, m, rng);
        const KernelSpec spec = exact_spec(n, 0.0);
        const GramMatrix k = gram(x, spec);
        const BatchCache cache = forward(net, x);
        const DenseMatrix j = param_jacobian(net, x);

        // Path 1: natural gradient of the mean loss pulled back through phi.
        const Vector euclid = flatten(backward_loss(net, cache, y, LossKind::squared));
        const Vector path1 = natural_gradient(estimate_metric(j, k, lambda), euclid);

        // Path 2: project the ambient gradient sum_b K(., x_b) r_b onto the tangent
        // directions in the K^-1 inner product (normal equations, plain arithmetic).
        const DenseMatrix res = batch_residuals(LossKind::squared, cache.outputs, y);
        const DenseMatrix kv = kernel_matrix(x, spec);
        DenseMatrix kinv(b, b);
        for (std::size_t c = 0; c < b; ++c) {
            Vector e(b, 0.0);
            e[c] = 1.0;
            const Vector col = oracle::householder_lstsq(kv, e);
            for (std::size_t r = 0; r < b; ++r) kinv(r, c) = col[r];
        }
        const std::size_t p = net.parameter_count();
        DenseMatrix normal(p, p);
        Vector rhs(p, 0.0);
        for (std::size_t c = 0; c < m; ++c) {
            DenseMatrix jc(p, b);
            Vector ambient(b, 0.0);  // K r_c at the batch points
            for (std::size_t i = 0; i < p; ++i)
                for (std::size_t r = 0; r < b; ++r) jc(i, r) = j(i, r * m + c);
            for (std::size_t r = 0; r < b; ++r)
                for (std::size_t s = 0; s < b; ++s) ambient[r] += kv(r, s) * res(s, c);
            const DenseMatrix jk = oracle::naive_matmul(jc, kinv);
            const DenseMatrix gc = oracle::naive_matmul(jk, transpose(jc));
            const Vector proj = oracle::naive_matvec(jk, ambient);
            for (std::size_t i = 0; i < p; ++i) {
                rhs[i] += proj[i];
                for (std::size_t q = 0; q < p; ++q) normal(i, q) += gc(i, q);
            }
        }
        for (std::size_t i = 0; i < p; ++i) normal(i, i) += lambda;
        const Vector path2 = oracle::householder_lstsq(normal, rhs);
        const Vector coeffs = project_empirical_gradient(j, k, res, lambda);
        const double scale = std::max(1.0, oracle::max_abs(path2));
        worst = std::max(worst, oracle::max_abs_diff(path1, path2) / scale);
        worst = std::max(worst, oracle::max_abs_diff(coeffs, path1) / scale);
    }
    return {worst <= 1e-9, "max relative difference " + fmt(worst) + " over 10 nets"};
}

Outcome basis_orthonormality() {
    Rng rng = make_rng(5, "acceptance");
    double worst = 0.0;
    std::size_t bases = 0;
    auto check = [&](const std::vector<BasisFunction>& basis, const DenseMatrix& probes, std::size_t m) {
        const DenseMatrix g = check_basis_orthonormality(basis, probes, m);
        worst = std::max(worst, oracle::max_abs_diff(g, DenseMatrix::identity(basis.size())));
        ++bases;
    };
    // Elementary functions, d = 1..5.
    const std::vector<BasisFunction> pool{[](std::span<const double>) { return Vector{1.0}; },
                                          [](std::span<const double> x) { return Vector{x[0]}; },
                                          [](std::span<const double> x) { return Vector{std::sin(x[0])}; },
                                          [](std::span<const double> x) { return Vector{std::exp(-x[0] * x[0])}; },
                                          [](std::span<const double> x) { return Vector{x[0] * x[0] * x[0]}; }};
    DenseMatrix line(9, 1);
    for (std::size_t i = 0; i < 9; ++i) line(i, 0) = -2.0 + 0.5 * static_cast<double>(i);
    for (std::size_t d = 1; d <= 5; ++d) check({pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(d)}, line, 1);

    // Tangent bases b_i(x) = d phi(x) / d theta_i of random nets.
    const std::vector<std::vector<std::size_t>> shapes{{1, 2, 1}, {2, 3, 1}, {2, 3, 2}, {1, 4, 2}};
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        const auto& dims = shapes[seed % shapes.size()];
        const MlpNetwork net = random_net(dims, Activation::tanh, Activation::identity, 300 + seed);
        const std::size_t d = 2 + seed % 4;  // 2..5
        const std::size_t m = dims.back();
        std::vector<BasisFunction> basis;
        for (std::size_t t = 0; t < d; ++t) {
            const std::size_t idx = (t * 3 + seed) % net.parameter_count();
            basis.push_back([net, idx, m](std::span<const double> x) {
                DenseMatrix point(1, x.size());
                std::copy(x.begin(), x.end(), point.row(0).begin());
                const DenseMatrix j = param_jacobian(net, point);
                Vector out(m);
                for (std::size_t c = 0; c < m; ++c) out[c] = j(idx, c);
                return out;
            });
        }
        check(basis, random_matrix(12, dims.front(), rng, 1.5), m);
    }
    return {worst <= 1e-8, "max |G - I| " + fmt(worst) + " over " + std::to_string(bases) + " bases"};
}

Outcome kfac_consistency() {
    Rng rng = make_rng(6, "acceptance");
    double worst_block = 0.0;
    for (int trial = 0; trial < 5; ++trial) {
        // Zero first-layer input weights: every sample sees the same hidden units.
        DenseMatrix w1(3, 2);
        for (std::size_t i = 0; i < 3; ++i) w1(i, 1) = standard_normal(rng);
        const MlpNetwork net(mlp_layers({1, 3, 2}, Activation::tanh), {w1, random_matrix(2, 4, rng)});
        const std::size_t b = 3 + static_cast<std::size_t>(trial);
        const DenseMatrix x = random_matrix(b, 1, rng);
        const BatchCache cache = forward(net, x);
        const auto factors = compute_factors(cache, output_jacobians(net, cache), identity_gram(b));
        const PullbackMetric g = estimate_metric(param_jacobian(net, x), identity_gram(b));
        for (std::size_t l = 0; l < net.depth(); ++l) {
            const std::size_t off = net.layer_offset(l);
            const std::size_t n = net.layer_parameter_count(l);
            const DenseMatrix kron_block = oracle::explicit_kron(factors[l].s, factors[l].a);
            double err = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t jj = 0; jj < n; ++jj)
                    err = std::max(err, std::abs(kron_block(i, jj) - g.values(off + i, off + jj) / static_cast<double>(b)));
            worst_block = std::max(worst_block, err);
        }
    }
    double worst_inverse = 0.0;
    for (int trial = 0; trial < 5; ++trial) {
        auto spd = [&](std::size_t n) {
            const DenseMatrix a = random_matrix(n, n, rng);
            return add_diagonal(oracle::naive_matmul(a, transpose(a)), 1.0);
        };
        const DenseMatrix a = spd(3);
        const DenseMatrix s = spd(2);
        const DenseMatrix v = random_matrix(2, 3, rng);
        const Vector want =
            oracle::naive_matvec(oracle::adjugate_inverse(oracle::explicit_kron(a, s)), oracle::col_vec(v));
        const DenseMatrix got = kron_precondition(spd_inverse(a), spd_inverse(s), v);
        worst_inverse = std::max(worst_inverse, oracle::max_abs_diff(oracle::col_vec(got), want));
    }
    return {worst_block <= 1e-10 && worst_inverse <= 1e-12,
            "block max error " + fmt(worst_block) + ", Kronecker inverse max error " + fmt(worst_inverse)};
}

Outcome quadrature_oracle() {
    double worst = 0.0;
    double cross = 0.0;
    for (auto [w1, w2] : {std::pair{0.7, -1.3}, std::pair{1.5, 0.4}, std::pair{-0.8, -0.6}}) {
        const MlpNetwork net(mlp_layers({1, 1, 1}, Activation::identity), {DenseMatrix{{w1, 0.0}}, DenseMatrix{{w2, 0.0}}});
        const PullbackMetric g = exact_pullback_quadrature(net, InputMeasure::standard_normal(), 8, {0, 2});
        const DenseMatrix want{{w2 * w2, w1 * w2}, {w1 * w2, w1 * w1}};
        worst = std::max(worst, oracle::max_abs_diff(g.values, want));
        cross = std::max(cross, std::abs(g.values(0, 1)));
    }
    return {worst <= 1e-8 && cross > 0.1, "max error " + fmt(worst) + ", largest cross term " + fmt(cross)};
}

Outcome flatness_invariance() {
    const FlatnessToy toy = flatness_toy("quadratic2d");
    FlatnessQuery pull = toy.query;
    pull.epsilon = 0.1;
    pull.source = MetricSource::supplied;
    pull.metric = toy.pullback;
    double worst_pullback = 0.0;
    for (const char* name : {"scale:2", "scale:0.5", "tanh:0.5", "tanh:-0.3"})
        worst_pullback = std::max(worst_pullback, invariance_check(pull, parse_reparam(name)).discrepancy);
    const FlatnessToy toy1 = flatness_toy("quadratic1d");
    FlatnessQuery pull1 = toy1.query;
    pull1.epsilon = 0.04;
    pull1.source = MetricSource::supplied;
    pull1.metric = toy1.pullback;
    for (const char* name : {"scale:2", "tanh:0.8"})
        worst_pullback = std::max(worst_pullback, invariance_check(pull1, parse_reparam(name)).discrepancy);

    FlatnessQuery euclid = toy.query;
    euclid.epsilon = 0.1;
    FlatnessQuery euclid1 = toy1.query;
    euclid1.epsilon = 0.04;
    const double shift = std::min(invariance_check(euclid, scale_reparam(2.0)).discrepancy,
                                  invariance_check(euclid1, scale_reparam(2.0)).discrepancy);
    return {worst_pullback <= 0.02 && shift >= 0.25,
            "pullback max discrepancy " + fmt(worst_pullback) + ", euclidean change under w -> 2w " + fmt(shift)};
}

Outcome riemann_descent() {
    Rng rng = make_rng(9, "acceptance");
    double worst_margin = 0.0;
    bool mirror_equal = true;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + static_cast<std::size_t>(trial % 5);
        const DenseMatrix h = random_spd(n, 0.1, 10.0, rng);
        const RiemannProblem p =
            trial % 2 == 0 ? quadratic_problem(h, random_spd(n, 0.2, 5.0, rng), random_vector(n, rng))
                           : quadratic_problem_diagonal_field(h, Vector(n, 0.5), Vector(n, 2.0), random_vector(n, rng));
        const Vector x = random_vector(n, rng, 3.0);
        const double margin = p.f(x) - p.f(grad_step(p, x)) - prog(p, x);
        worst_margin = std::min(worst_margin, margin / std::max(1.0, p.f(x)));
        if (trial % 2 == 0) mirror_equal = mirror_equal && mirror_step(p, x, p.compat_C * p.lipschitz_L) == grad_step(p, x);
    }
    bool rate_ok = true;
    const std::size_t n = 4;
    const RiemannProblem p =
        quadratic_problem(random_spd(n, 0.1, 10.0, rng), random_spd(n, 0.3, 3.0, rng), random_vector(n, rng), 1.5);
    for (int s = 0; s < 20; ++s) {
        try {
            const RateReport rep = verify_rate(p, random_vector(n, rng, 5.0), 200);
            rate_ok = rate_ok && rep.gaps.size() == 200;
            for (std::size_t t = 0; t < rep.gaps.size(); ++t) rate_ok = rate_ok && rep.gaps[t] <= rep.bounds[t];
        } catch (const RateViolation&) {
            rate_ok = false;
        }
    }
    const bool decrease_ok = worst_margin >= -1e-12;
    return {decrease_ok && mirror_equal && rate_ok,
            std::string("min decrease - prog ") + fmt(worst_margin) + ", mirror == grad_step " +
                (mirror_equal ? "yes" : "no") + ", rate bound " + (rate_ok ? "holds" : "violated")};
}

struct RunSummary {
    double final_loss = 0.0;
    double test_acc = 0.0;
    std::size_t first_below = 0;  // 0: never
};

RunSummary desk_run(Variant v, const Dataset& ds) {
    OptimConfig cfg;
    cfg.variant = v;
    // Defaults for lr, weight decay, damping, input scale, batch size and loss.
    cfg.schedule = Schedule::constant;
    cfg.kfac_damping_mode = KfacDamping::eigen_exact;
    cfg.epochs = 1000;
    cfg.max_steps = 500;
    cfg.record_timing = false;
    const DenseMatrix x_train = select_rows(ds.features, ds.train);
    const DenseMatrix y_train = select_rows(ds.targets, ds.train);
    RunSummary s;
    const TrainResult r = train(cfg, ds, mlp_layers({2, 16, 16, 2}, Activation::tanh), [&](const StepRecord& rec, const MlpNetwork& net) {
        const double loss = batch_loss(cfg.loss, predict(net, x_train), y_train);
        if (s.first_below == 0 && loss < 0.1) s.first_below = rec.step;
    });
    s.final_loss = batch_loss(cfg.loss, predict(r.net, x_train), y_train);
    std::vector<std::size_t> test_labels;
    for (auto i : ds.test) test_labels.push_back(ds.labels[i]);
    s.test_acc = accuracy(predict(r.net, select_rows(ds.features, ds.test)), test_labels);
    return s;
}

std::string describe(const char* name, const RunSummary& s) {
    return std::string(name) + " loss " + fmt(s.final_loss) + " acc " + fmt(s.test_acc) + " hits 0.1 at " +
           (s.first_below ? std::to_string(s.first_below) : std::string("never"));
}

Outcome desk_training() {
    const Dataset ds = normalize(train_test_split(gen_two_moons(1000, 0.1, 0), 0.2, 0));
    const RunSummary sob = desk_run(Variant::sobolev_kfac, ds);
    const RunSummary ama = desk_run(Variant::amari_kfac, ds);
    const RunSummary sgd = desk_run(Variant::sgd, ds);
    auto good = [&](const RunSummary& s) {
        const bool faster = s.first_below != 0 && (sgd.first_below == 0 || s.first_below < sgd.first_below);
        return s.final_loss < 0.05 && s.test_acc >= 0.95 && faster;
    };
    return {good(sob) && good(ama),
            describe("sobolev_kfac", sob) + "; " + describe("amari_kfac", ama) + "; " + describe("sgd", sgd)};
}

Outcome determinism() {
    const Dataset ds = normalize(train_test_split(gen_two_moons(1000, 0.1, 3), 0.2, 3));
    bool same = true;
    const auto base = std::filesystem::temp_directory_path() / "sobnat_acceptance_logs";
    for (Variant v : {Variant::sobolev_kfac, Variant::amari_kfac, Variant::sobolev_dense, Variant::sgd}) {
        OptimConfig cfg;
        cfg.variant = v;
        cfg.epochs = 3;
        cfg.seed = 11;
        cfg.record_timing = false;
        std::string files[2][2];
        for (int run = 0; run < 2; ++run) {
            const auto dir = base / (std::string(to_string(v)) + "_" + std::to_string(run));
            std::filesystem::remove_all(dir);
            write_logs(dir, train(cfg, ds, mlp_layers({2, 16, 16, 2}, Activation::tanh)).log);
            files[run][0] = read_file(dir / std::string(kStepLogFile));
            files[run][1] = read_file(dir / std::string(kEpochLogFile));
        }
        same = same && files[0][0] == files[1][0] && files[0][1] == files[1][1] && !files[0][0].empty();
    }
    std::filesystem::remove_all(base);
    return {same, same ? "step and epoch logs byte-identical for 4 variants" : "logs differ between runs"};
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        double limit_s;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria{
        {1, 1.0, kernel_oracle},         {2, 10.0, gradient_checks},      {3, 1.0, metric_exactness},
        {4, 5.0, two_path_agreement},    {5, 5.0, basis_orthonormality},  {6, 5.0, kfac_consistency},
        {7, 1.0, quadrature_oracle},     {8, 30.0, flatness_invariance},  {9, 30.0, riemann_descent},
        {10, 120.0, desk_training},      {11, 120.0, determinism},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool pass = o.pass && secs < c.limit_s;
        if (!pass) ++failed;
        std::printf("Criterion %d: %s %s (runtime %.2fs, limit %.0fs)\n", c.id, pass ? "PASS" : "FAIL", o.detail.c_str(),
                    secs, c.limit_s);
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
