#pragma once
// Training steps for SGD, Gauss-Newton (Amari, K = I) and Sobolev natural
// gradient in dense and Kronecker-factored form, plus the NTK surrogate.

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "data.hpp"
#include "errors.hpp"
#include "kfac.hpp"
#include "linalg.hpp"
#include "loss.hpp"
#include "metric.hpp"
#include "network.hpp"
#include "rng.hpp"
#include "sobolev_kernel.hpp"

namespace sobnat {

enum class Variant { sgd, amari_kfac, sobolev_kfac, amari_dense, sobolev_dense, ntk_surrogate };

inline const char* to_string(Variant v) {
    switch (v) {
        case Variant::sgd: return "sgd";
        case Variant::amari_kfac: return "amari_kfac";
        case Variant::sobolev_kfac: return "sobolev_kfac";
        case Variant::amari_dense: return "amari_dense";
        case Variant::sobolev_dense: return "sobolev_dense";
        case Variant::ntk_surrogate: return "ntk_surrogate";
    }
    return "?";
}

inline Variant parse_variant(const std::string& s) {
    for (auto v : {Variant::sgd, Variant::amari_kfac, Variant::sobolev_kfac, Variant::amari_dense,
                   Variant::sobolev_dense, Variant::ntk_surrogate})
        if (s == to_string(v)) return v;
    throw InvalidArgument("unknown variant '" + s + "'");
}

inline bool is_kfac(Variant v) { return v == Variant::amari_kfac || v == Variant::sobolev_kfac; }
inline bool is_dense(Variant v) { return v == Variant::amari_dense || v == Variant::sobolev_dense; }
inline bool is_sobolev(Variant v) { return v == Variant::sobolev_kfac || v == Variant::sobolev_dense; }

enum class Schedule {
    // x0.1 after every 40% of training.
    baseline_tenth_at_40pct,
    // x0.2 at 40%, another x0.2 at 60%.
    ours_fifth_at_40_and_60pct,
    constant,
};

inline const char* to_string(Schedule s) {
    switch (s) {
        case Schedule::baseline_tenth_at_40pct: return "baseline_tenth_at_40pct";
        case Schedule::ours_fifth_at_40_and_60pct: return "ours_fifth_at_40_and_60pct";
        case Schedule::constant: return "constant";
    }
    return "?";
}

inline Schedule parse_schedule(const std::string& s) {
    if (s == "baseline_tenth_at_40pct" || s == "baseline") return Schedule::baseline_tenth_at_40pct;
    if (s == "ours_fifth_at_40_and_60pct" || s == "ours") return Schedule::ours_fifth_at_40_and_60pct;
    if (s == "constant") return Schedule::constant;
    throw InvalidArgument("unknown schedule '" + s + "'");
}

inline const char* to_string(KfacDamping d) { return d == KfacDamping::factored ? "factored" : "eigen_exact"; }

inline KfacDamping parse_kfac_damping(const std::string& s) {
    if (s == "factored") return KfacDamping::factored;
    if (s == "eigen_exact") return KfacDamping::eigen_exact;
    throw InvalidArgument("unknown kfac damping mode '" + s + "'");
}

struct OptimConfig {
    Variant variant = Variant::sobolev_kfac;
    double lr = 0.01;
    double weight_decay = 0.003;
    double damping = 0.03;
    double input_scale = 20.0;
    // Unset: the Sobolev variants use the two-drop schedule, all others the baseline one.
    std::optional<Schedule> schedule;
    std::size_t batch_size = 64;
    std::size_t epochs = 10;
    std::uint64_t seed = 0;
    LossKind loss = LossKind::squared;

    ConstantMode constant_mode = ConstantMode::unit_constant;
    double jitter = 1e-8;
    // Sobolev variants with K replaced by I.
    bool force_identity_kernel = false;

    double kfac_decay = 0.95;
    std::size_t kfac_update_period = 10;
    KfacDamping kfac_damping_mode = KfacDamping::factored;
    // Above this many outputs the S factor uses one sampled output direction per sample.
    std::size_t kfac_exact_output_limit = 10;

    // Dense variants: zero the cross-layer blocks of the metric.
    bool dense_block_diagonal = false;
    std::size_t dense_budget = kDefaultDenseBudget;

    // 0 means epochs x batches.
    std::size_t max_steps = 0;
    // Off: wall_ms is logged as 0 so logs are byte-reproducible.
    bool record_timing = true;

    [[nodiscard]] Schedule effective_schedule() const {
        if (schedule) return *schedule;
        return is_sobolev(variant) ? Schedule::ours_fifth_at_40_and_60pct : Schedule::baseline_tenth_at_40pct;
    }

    void validate() const {
        if (!(lr > 0.0)) throw InvalidArgument("lr must be positive");
        if (!(damping >= 0.0)) throw InvalidArgument("damping must be non-negative");
        if (!(weight_decay >= 0.0)) throw InvalidArgument("weight_decay must be non-negative");
        if (!(input_scale > 0.0)) throw InvalidArgument("input_scale must be positive");
        if (!(jitter >= 0.0)) throw InvalidArgument("jitter must be non-negative");
        if (batch_size == 0) throw InvalidArgument("batch_size must be positive");
        if (!(kfac_decay >= 0.0 && kfac_decay <= 1.0)) throw InvalidArgument("kfac_decay must be in [0, 1]");
        if (kfac_update_period == 0) throw InvalidArgument("kfac_update_period must be positive");
    }
};

// Piecewise-constant learning rate for 0-based `step` of `total_steps`.
inline double lr_at(const OptimConfig& cfg, std::size_t step, std::size_t total_steps) {
    if (total_steps == 0) return cfg.lr;
    // Breakpoints compared in integers: step / total >= 0.4 k  <=>  5 step >= 2 k total.
    const std::size_t five = 5 * step;
    switch (cfg.effective_schedule()) {
        case Schedule::constant: return cfg.lr;
        case Schedule::baseline_tenth_at_40pct: {
            const std::size_t drops = five / (2 * total_steps);
            return cfg.lr * std::pow(0.1, static_cast<double>(drops));
        }
        case Schedule::ours_fifth_at_40_and_60pct:
            if (five >= 3 * total_steps) return cfg.lr / 25.0;
            if (five >= 2 * total_steps) return cfg.lr / 5.0;
            return cfg.lr;
    }
    return cfg.lr;
}

struct StepMetrics {
    double loss = 0.0;  // batch loss before the update
    double lr = 0.0;
    double update_norm = 0.0;
};

class Optimizer {
public:
    explicit Optimizer(OptimConfig cfg) : cfg_(std::move(cfg)), mc_(make_rng(cfg_.seed, "mc")) { cfg_.validate(); }

    [[nodiscard]] const OptimConfig& config() const noexcept { return cfg_; }
    [[nodiscard]] std::size_t steps_taken() const noexcept { return steps_; }
    [[nodiscard]] const std::vector<KfacLayerState>& kfac_states() const noexcept { return kfac_; }

    // Kernel used for the batch Gram: inputs are first divided by `input_scale`
    // relative to whatever scaling the caller has already applied.
    [[nodiscard]] KernelSpec kernel_spec(std::size_t input_dim, double already_scaled = 1.0) const {
        KernelSpec spec = KernelSpec::for_dim(input_dim, cfg_.constant_mode);
        spec.input_scale = cfg_.input_scale / already_scaled;
        spec.jitter = cfg_.jitter;
        return spec;
    }

    [[nodiscard]] GramMatrix batch_gram(const DenseMatrix& x, double already_scaled = 1.0) const {
        if (!is_sobolev(cfg_.variant) || cfg_.force_identity_kernel) return identity_gram(x.rows());
        const KernelSpec spec = kernel_spec(x.cols(), already_scaled);
        return gram(scaled_points(x, spec), spec);
    }

    // Search direction (before the learning rate) per layer, with weight decay
    // folded into the Euclidean gradient.
    std::vector<DenseMatrix> direction(const MlpNetwork& net, const DenseMatrix& x, const DenseMatrix& y,
                                       double already_scaled = 1.0, double* loss_out = nullptr) {
        if (x.rows() == 0) throw InvalidArgument("train_step: empty batch");
        const BatchCache cache = forward(net, x);
        if (loss_out) *loss_out = batch_loss(cfg_.loss, cache.outputs, y);
        std::vector<DenseMatrix> grads = backward_loss(net, cache, y, cfg_.loss);
        for (std::size_t l = 0; l < grads.size(); ++l)
            if (cfg_.weight_decay != 0.0) grads[l] += net.weights(l) * cfg_.weight_decay;

        switch (cfg_.variant) {
            case Variant::sgd: return grads;
            case Variant::ntk_surrogate: {
                const OutputJacobians oj = output_jacobians(net, cache);
                const DenseMatrix j = param_jacobian(net, cache, oj, cfg_.dense_budget);
                Vector s = ntk_surrogate_gradient(j, batch_residuals(cfg_.loss, cache.outputs, y));
                const Vector p = net.parameters();
                for (std::size_t i = 0; i < s.size(); ++i) s[i] += cfg_.weight_decay * p[i];
                return unflatten(net, s);
            }
            case Variant::amari_dense:
            case Variant::sobolev_dense: return dense_direction(net, cache, x, grads, already_scaled);
            case Variant::amari_kfac:
            case Variant::sobolev_kfac: return kfac_direction(net, cache, x, grads, already_scaled);
        }
        return grads;
    }

    // theta <- theta - lr_at(step) * direction.
    StepMetrics train_step(MlpNetwork& net, const DenseMatrix& x, const DenseMatrix& y, std::size_t total_steps,
                           double already_scaled = 1.0) {
        StepMetrics m;
        m.lr = lr_at(cfg_, steps_, total_steps);
        const auto dir = direction(net, x, y, already_scaled, &m.loss);
        double sq = 0.0;
        for (std::size_t l = 0; l < dir.size(); ++l) {
            auto& w = net.weights(l).data();
            const auto& d = dir[l].data();
            for (std::size_t k = 0; k < w.size(); ++k) {
                w[k] -= m.lr * d[k];
                sq += d[k] * d[k];
            }
        }
        m.update_norm = m.lr * std::sqrt(sq);
        ++steps_;
        return m;
    }

private:
    std::vector<DenseMatrix> dense_direction(const MlpNetwork& net, const BatchCache& cache, const DenseMatrix& x,
                                             const std::vector<DenseMatrix>& grads, double already_scaled) {
        const OutputJacobians oj = output_jacobians(net, cache);
        const DenseMatrix j = param_jacobian(net, cache, oj, cfg_.dense_budget);
        PullbackMetric g = estimate_metric(j, batch_gram(x, already_scaled), cfg_.damping);
        // Mean-loss normalization: the metric of (1/B) sum over the batch.
        g.values *= 1.0 / static_cast<double>(x.rows());
        if (cfg_.dense_block_diagonal) {
            for (std::size_t a = 0; a < net.depth(); ++a)
                for (std::size_t b = 0; b < net.depth(); ++b) {
                    if (a == b) continue;
                    for (std::size_t i = 0; i < net.layer_parameter_count(a); ++i)
                        for (std::size_t k = 0; k < net.layer_parameter_count(b); ++k)
                            g.values(net.layer_offset(a) + i, net.layer_offset(b) + k) = 0.0;
                }
        }
        return unflatten(net, natural_gradient(g, flatten(grads)));
    }

    std::vector<DenseMatrix> kfac_direction(const MlpNetwork& net, const BatchCache& cache, const DenseMatrix& x,
                                            const std::vector<DenseMatrix>& grads, double already_scaled) {
        if (kfac_.empty()) {
            kfac_.resize(net.depth());
            for (auto& s : kfac_) {
                s.decay = cfg_.kfac_decay;
                s.damping = cfg_.damping;
                s.update_period = cfg_.kfac_update_period;
                s.damping_mode = cfg_.kfac_damping_mode;
            }
        }
        if (kfac_.size() != net.depth()) throw DimensionMismatch("kfac: network depth changed");
        if (steps_ % cfg_.kfac_update_period == 0) {
            const OutputJacobians oj = net.output_dim() > cfg_.kfac_exact_output_limit
                                           ? output_jacobians_sampled(net, cache, mc_)
                                           : output_jacobians(net, cache);
            const auto fresh = compute_factors(cache, oj, batch_gram(x, already_scaled));
            for (std::size_t l = 0; l < kfac_.size(); ++l) kfac_[l] = update_state(std::move(kfac_[l]), fresh[l]);
        }
        std::vector<DenseMatrix> out;
        out.reserve(grads.size());
        for (std::size_t l = 0; l < grads.size(); ++l) out.push_back(precondition(kfac_[l], grads[l]));
        return out;
    }

    OptimConfig cfg_;
    std::vector<KfacLayerState> kfac_;
    std::size_t steps_ = 0;
    Rng mc_;
};

struct StepRecord {
    std::size_t step = 0;  // 1-based
    std::size_t epoch = 0;  // 1-based
    double lr = 0.0;
    double train_loss = 0.0;
    double wall_ms = 0.0;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_acc = 0.0;
    double test_acc = 0.0;
};

struct ExperimentLog {
    std::vector<StepRecord> steps;
    std::vector<EpochRecord> epochs;
    std::vector<std::pair<std::string, std::string>> config;  // snapshot, key order fixed
    std::uint64_t seed = 0;
};

struct TrainResult {
    ExperimentLog log;
    MlpNetwork net;
};

// Called after every step with the record and the updated network.
using StepObserver = std::function<void(const StepRecord&, const MlpNetwork&)>;

inline std::size_t steps_per_epoch(std::size_t train_size, std::size_t batch_size) {
    return (train_size + batch_size - 1) / batch_size;
}

inline std::size_t planned_steps(const OptimConfig& cfg, std::size_t train_size) {
    std::size_t total = cfg.epochs * steps_per_epoch(train_size, cfg.batch_size);
    if (cfg.max_steps > 0 && cfg.max_steps < total) total = cfg.max_steps;
    return total;
}

// Mini-batch training on ds.train, evaluated on ds.train / ds.test after each
// epoch. Batches follow a fresh permutation per epoch from the "shuffle" stream.
inline TrainResult train(const OptimConfig& cfg, const Dataset& ds, const std::vector<LayerSpec>& layers,
                         const StepObserver& observer = {}) {
    cfg.validate();
    if (layers.empty() || layers.front().in_dim != ds.input_dim() || layers.back().out_dim != ds.output_dim()) {
        throw DimensionMismatch("train: network does not match dataset dimensions");
    }
    TrainResult result{{}, MlpNetwork(layers, cfg.seed)};
    result.log.seed = cfg.seed;
    const std::size_t n_train = ds.train.size();
    if (n_train == 0 || cfg.epochs == 0) return result;

    const DenseMatrix x_train = select_rows(ds.features, ds.train);
    const DenseMatrix y_train = select_rows(ds.targets, ds.train);
    const DenseMatrix x_test = select_rows(ds.features, ds.test);
    const std::vector<std::size_t> l_train = ds.is_classification() ? select(ds.labels, ds.train) : std::vector<std::size_t>{};
    const std::vector<std::size_t> l_test = ds.is_classification() ? select(ds.labels, ds.test) : std::vector<std::size_t>{};

    const std::size_t total = planned_steps(cfg, n_train);
    Optimizer opt(cfg);
    Rng shuffle_rng = make_rng(cfg.seed, "shuffle");
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::size_t> order(n_train);
    std::size_t step = 0;
    for (std::size_t epoch = 1; epoch <= cfg.epochs && step < total; ++epoch) {
        for (std::size_t i = 0; i < n_train; ++i) order[i] = i;
        shuffle(order, shuffle_rng);
        for (std::size_t start = 0; start < n_train && step < total; start += cfg.batch_size) {
            const std::size_t end = std::min(n_train, start + cfg.batch_size);
            const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                               order.begin() + static_cast<std::ptrdiff_t>(end));
            const StepMetrics m =
                opt.train_step(result.net, select_rows(x_train, idx), select_rows(y_train, idx), total, ds.scale_applied);
            ++step;
            StepRecord rec{step, epoch, m.lr, m.loss, 0.0};
            if (cfg.record_timing) {
                rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
            }
            result.log.steps.push_back(rec);
            if (observer) observer(rec, result.net);
        }
        EpochRecord er{epoch, 0.0, 0.0};
        if (ds.is_classification()) {
            er.train_acc = accuracy(predict(result.net, x_train), l_train);
            er.test_acc = l_test.empty() ? 0.0 : accuracy(predict(result.net, x_test), l_test);
        }
        result.log.epochs.push_back(er);
    }
    return result;
}

}  // namespace sobnat
