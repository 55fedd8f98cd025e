#pragma once
// Fully-connected network with homogeneous bias columns and hand-written
// backprop. Layer l computes s_l = Wbar_l abar_{l-1}, a_l = psi_l(s_l), where
// Wbar_l = (W_l | b_l) is out x (in + 1) and abar = (a^T, 1)^T.
//
// Parameters flatten layer by layer, each Wbar_l in row-major order.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "errors.hpp"
#include "linalg.hpp"
#include "loss.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace sobnat {

enum class Activation { identity, tanh, relu, sigmoid };

inline const char* to_string(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::tanh: return "tanh";
        case Activation::relu: return "relu";
        case Activation::sigmoid: return "sigmoid";
    }
    return "?";
}

inline Activation parse_activation(const std::string& s) {
    if (s == "identity" || s == "linear") return Activation::identity;
    if (s == "tanh") return Activation::tanh;
    if (s == "relu") return Activation::relu;
    if (s == "sigmoid") return Activation::sigmoid;
    throw InvalidArgument("unknown activation '" + s + "'");
}

inline double activate(Activation a, double s) {
    switch (a) {
        case Activation::identity: return s;
        case Activation::tanh: return std::tanh(s);
        case Activation::relu: return s > 0.0 ? s : 0.0;
        case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-s));
    }
    return s;
}

// Derivative at pre-activation s; relu'(0) = 0.
inline double activate_derivative(Activation a, double s) {
    switch (a) {
        case Activation::identity: return 1.0;
        case Activation::tanh: {
            const double t = std::tanh(s);
            return 1.0 - t * t;
        }
        case Activation::relu: return s > 0.0 ? 1.0 : 0.0;
        case Activation::sigmoid: {
            const double sg = 1.0 / (1.0 + std::exp(-s));
            return sg * (1.0 - sg);
        }
    }
    return 1.0;
}

struct LayerSpec {
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
    Activation activation = Activation::identity;
};

// Hidden layers use `hidden`, the last layer `output`. dims = {n, h1, ..., m}.
inline std::vector<LayerSpec> mlp_layers(const std::vector<std::size_t>& dims, Activation hidden,
                                         Activation output = Activation::identity) {
    if (dims.size() < 2) throw InvalidArgument("mlp_layers: need at least input and output dimensions");
    std::vector<LayerSpec> layers;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        layers.push_back({dims[l], dims[l + 1], l + 2 == dims.size() ? output : hidden});
    }
    return layers;
}

class MlpNetwork {
public:
    MlpNetwork() = default;

    // Weights uniform(-a, a), a = sqrt(6 / (in + out)); biases zero.
    MlpNetwork(std::vector<LayerSpec> layers, std::uint64_t seed) : layers_(std::move(layers)) {
        validate_layers();
        Rng rng = make_rng(seed, "init");
        for (const auto& l : layers_) {
            DenseMatrix w(l.out_dim, l.in_dim + 1);
            const double a = std::sqrt(6.0 / static_cast<double>(l.in_dim + l.out_dim));
            for (std::size_t i = 0; i < l.out_dim; ++i)
                for (std::size_t j = 0; j < l.in_dim; ++j) w(i, j) = uniform(rng, -a, a);
            weights_.push_back(std::move(w));
        }
    }

    MlpNetwork(std::vector<LayerSpec> layers, std::vector<DenseMatrix> weights)
        : layers_(std::move(layers)), weights_(std::move(weights)) {
        validate_layers();
        if (weights_.size() != layers_.size()) throw DimensionMismatch("MlpNetwork: one weight matrix per layer");
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            if (weights_[l].rows() != layers_[l].out_dim || weights_[l].cols() != layers_[l].in_dim + 1) {
                throw DimensionMismatch("MlpNetwork: layer " + std::to_string(l) + " weights are " +
                                        shape_str(weights_[l]));
            }
        }
    }

    [[nodiscard]] const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
    [[nodiscard]] std::size_t depth() const noexcept { return layers_.size(); }
    [[nodiscard]] std::size_t input_dim() const noexcept { return layers_.front().in_dim; }
    [[nodiscard]] std::size_t output_dim() const noexcept { return layers_.back().out_dim; }
    [[nodiscard]] const DenseMatrix& weights(std::size_t l) const { return weights_.at(l); }
    [[nodiscard]] DenseMatrix& weights(std::size_t l) { return weights_.at(l); }
    [[nodiscard]] const std::vector<DenseMatrix>& all_weights() const noexcept { return weights_; }

    [[nodiscard]] std::size_t layer_parameter_count(std::size_t l) const {
        return layers_[l].out_dim * (layers_[l].in_dim + 1);
    }
    [[nodiscard]] std::size_t layer_offset(std::size_t l) const {
        std::size_t off = 0;
        for (std::size_t k = 0; k < l; ++k) off += layer_parameter_count(k);
        return off;
    }
    [[nodiscard]] std::size_t parameter_count() const { return layer_offset(layers_.size()); }

    [[nodiscard]] Vector parameters() const {
        Vector p;
        p.reserve(parameter_count());
        for (const auto& w : weights_) p.insert(p.end(), w.data().begin(), w.data().end());
        return p;
    }

    void set_parameters(std::span<const double> p) {
        if (p.size() != parameter_count()) throw DimensionMismatch("set_parameters: wrong parameter count");
        std::size_t off = 0;
        for (auto& w : weights_) {
            std::copy(p.begin() + static_cast<std::ptrdiff_t>(off),
                      p.begin() + static_cast<std::ptrdiff_t>(off + w.size()), w.data().begin());
            off += w.size();
        }
    }

private:
    void validate_layers() const {
        if (layers_.empty()) throw InvalidArgument("MlpNetwork: no layers");
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            if (layers_[l].in_dim == 0 || layers_[l].out_dim == 0) {
                throw InvalidArgument("MlpNetwork: zero-width layer " + std::to_string(l));
            }
            if (l > 0 && layers_[l].in_dim != layers_[l - 1].out_dim) {
                throw DimensionMismatch("MlpNetwork: layer " + std::to_string(l) + " input " +
                                        std::to_string(layers_[l].in_dim) + " != previous output " +
                                        std::to_string(layers_[l - 1].out_dim));
            }
        }
    }

    std::vector<LayerSpec> layers_;
    std::vector<DenseMatrix> weights_;
};

// Per-layer matrices (shapes of Wbar_l) flattened in parameter order.
inline Vector flatten(const std::vector<DenseMatrix>& per_layer) {
    Vector p;
    for (const auto& m : per_layer) p.insert(p.end(), m.data().begin(), m.data().end());
    return p;
}

inline std::vector<DenseMatrix> unflatten(const MlpNetwork& net, std::span<const double> p) {
    if (p.size() != net.parameter_count()) throw DimensionMismatch("unflatten: wrong parameter count");
    std::vector<DenseMatrix> out;
    std::size_t off = 0;
    for (std::size_t l = 0; l < net.depth(); ++l) {
        const auto& w = net.weights(l);
        out.emplace_back(w.rows(), w.cols(),
                         std::vector<double>(p.begin() + static_cast<std::ptrdiff_t>(off),
                                             p.begin() + static_cast<std::ptrdiff_t>(off + w.size())));
        off += w.size();
    }
    return out;
}

struct BatchCache {
    DenseMatrix inputs;                    // B x n
    std::vector<DenseMatrix> activations;  // activations[l] = abar feeding layer l, B x (in_l + 1)
    std::vector<DenseMatrix> preacts;      // preacts[l] = s_l, B x out_l
    DenseMatrix outputs;                   // B x m

    [[nodiscard]] std::size_t batch_size() const noexcept { return inputs.rows(); }
};

inline BatchCache forward(const MlpNetwork& net, const DenseMatrix& x) {
    if (x.cols() != net.input_dim()) {
        throw DimensionMismatch("forward: input has " + std::to_string(x.cols()) + " columns, network expects " +
                                std::to_string(net.input_dim()));
    }
    const std::size_t b = x.rows();
    BatchCache cache;
    cache.inputs = x;
    DenseMatrix a = x;
    for (std::size_t l = 0; l < net.depth(); ++l) {
        const auto& spec = net.layers()[l];
        DenseMatrix abar(b, spec.in_dim + 1);
        for (std::size_t r = 0; r < b; ++r) {
            for (std::size_t j = 0; j < spec.in_dim; ++j) abar(r, j) = a(r, j);
            abar(r, spec.in_dim) = 1.0;
        }
        DenseMatrix s = matmul_nt(abar, net.weights(l));
        DenseMatrix post(b, spec.out_dim);
        for (std::size_t k = 0; k < s.size(); ++k) post.data()[k] = activate(spec.activation, s.data()[k]);
        cache.activations.push_back(std::move(abar));
        cache.preacts.push_back(std::move(s));
        a = std::move(post);
    }
    cache.outputs = std::move(a);
    return cache;
}

inline DenseMatrix predict(const MlpNetwork& net, const DenseMatrix& x) { return forward(net, x).outputs; }

namespace detail {

// Given dphi/d(output of layer l) rows, returns dphi/ds_l rows.
inline DenseMatrix through_activation(const MlpNetwork& net, const BatchCache& cache, std::size_t l,
                                      DenseMatrix upstream) {
    const auto act = net.layers()[l].activation;
    const auto& s = cache.preacts[l];
    for (std::size_t k = 0; k < upstream.size(); ++k) upstream.data()[k] *= activate_derivative(act, s.data()[k]);
    return upstream;
}

// dphi/ds_l -> dphi/d(output of layer l-1), dropping the bias column.
inline DenseMatrix through_weights(const MlpNetwork& net, std::size_t l, const DenseMatrix& delta) {
    const auto& w = net.weights(l);
    const std::size_t in = net.layers()[l].in_dim;
    DenseMatrix up(delta.rows(), in);
    for (std::size_t r = 0; r < delta.rows(); ++r)
        for (std::size_t i = 0; i < w.rows(); ++i) {
            const double d = delta(r, i);
            if (d == 0.0) continue;
            for (std::size_t j = 0; j < in; ++j) up(r, j) += d * w(i, j);
        }
    return up;
}

// Backpropagates seeds (rows = dphi/d output, B x m) to every dphi/ds_l.
inline std::vector<DenseMatrix> backprop_seeds(const MlpNetwork& net, const BatchCache& cache, DenseMatrix seed) {
    std::vector<DenseMatrix> ds(net.depth());
    DenseMatrix up = std::move(seed);
    for (std::size_t l = net.depth(); l-- > 0;) {
        ds[l] = through_activation(net, cache, l, std::move(up));
        if (l > 0) up = through_weights(net, l, ds[l]);
    }
    return ds;
}

}  // namespace detail

// Gradient of the mean batch loss with respect to each Wbar_l:
// V_l = sum_b dL/ds_l(b) abar_{l-1}(b)^T / B.
inline std::vector<DenseMatrix> backward_loss(const MlpNetwork& net, const BatchCache& cache,
                                              const DenseMatrix& targets, LossKind loss) {
    const DenseMatrix residuals = batch_residuals(loss, cache.outputs, targets);
    const auto deltas = detail::backprop_seeds(net, cache, residuals);
    std::vector<DenseMatrix> grads;
    grads.reserve(net.depth());
    for (std::size_t l = 0; l < net.depth(); ++l) grads.push_back(matmul_tn(deltas[l], cache.activations[l]));
    return grads;
}

// ds[l][c] is B x out_l with row b = dphi^c(x_b)/ds_l. When `sampled` is set
// the single "component" holds sqrt(m) dphi^u/ds_l for one random unit output
// direction u per sample, an unbiased estimator of sum_c Ds^c Ds^c^T.
struct OutputJacobians {
    std::vector<std::vector<DenseMatrix>> ds;
    bool sampled = false;

    [[nodiscard]] std::size_t components() const noexcept { return ds.empty() ? 0 : ds.front().size(); }
};

inline OutputJacobians output_jacobians(const MlpNetwork& net, const BatchCache& cache) {
    const std::size_t b = cache.batch_size();
    const std::size_t m = net.output_dim();
    OutputJacobians out;
    out.ds.assign(net.depth(), std::vector<DenseMatrix>(m));
    std::vector<std::vector<DenseMatrix>> per_component(m);
    parallel_for(
        m,
        [&](std::size_t c) {
            DenseMatrix seed(b, m);
            for (std::size_t r = 0; r < b; ++r) seed(r, c) = 1.0;
            per_component[c] = detail::backprop_seeds(net, cache, std::move(seed));
        },
        1);
    for (std::size_t c = 0; c < m; ++c)
        for (std::size_t l = 0; l < net.depth(); ++l) out.ds[l][c] = std::move(per_component[c][l]);
    return out;
}

inline OutputJacobians output_jacobians_sampled(const MlpNetwork& net, const BatchCache& cache, Rng& rng) {
    const std::size_t b = cache.batch_size();
    const std::size_t m = net.output_dim();
    DenseMatrix seed(b, m);
    const double scale = std::sqrt(static_cast<double>(m));
    for (std::size_t r = 0; r < b; ++r) {
        Vector u(m);
        for (auto& v : u) v = standard_normal(rng);
        const double nrm = norm2(u);
        for (std::size_t c = 0; c < m; ++c) seed(r, c) = scale * u[c] / nrm;
    }
    OutputJacobians out;
    out.sampled = true;
    auto ds = detail::backprop_seeds(net, cache, std::move(seed));
    out.ds.resize(net.depth());
    for (std::size_t l = 0; l < net.depth(); ++l) out.ds[l].push_back(std::move(ds[l]));
    return out;
}

// Dense entries allowed in a parameter Jacobian before TooLarge is raised.
inline constexpr std::size_t kDefaultDenseBudget = 50'000'000;

// J[i][b*m + c] = dphi^c(x_b)/dtheta_i = Ds_l^c(b)_row * abar_{l-1}(b)_col.
inline DenseMatrix param_jacobian(const MlpNetwork& net, const BatchCache& cache, const OutputJacobians& jac,
                                  std::size_t budget = kDefaultDenseBudget) {
    if (jac.sampled) throw InvalidArgument("param_jacobian: needs exact output Jacobians");
    const std::size_t b = cache.batch_size();
    const std::size_t m = net.output_dim();
    const std::size_t p = net.parameter_count();
    if (p * b * m > budget) {
        throw TooLarge("param_jacobian: " + std::to_string(p) + " parameters x " + std::to_string(b * m) +
                       " outputs exceeds the dense budget; use the Kronecker-factored path");
    }
    DenseMatrix j(p, b * m);
    for (std::size_t l = 0; l < net.depth(); ++l) {
        const std::size_t off = net.layer_offset(l);
        const std::size_t cols = net.layers()[l].in_dim + 1;
        const auto& abar = cache.activations[l];
        parallel_for(net.layers()[l].out_dim, [&](std::size_t i) {
            for (std::size_t k = 0; k < cols; ++k) {
                auto row = j.row(off + i * cols + k);
                for (std::size_t r = 0; r < b; ++r)
                    for (std::size_t c = 0; c < m; ++c) row[r * m + c] = jac.ds[l][c](r, i) * abar(r, k);
            }
        });
    }
    return j;
}

inline DenseMatrix param_jacobian(const MlpNetwork& net, const DenseMatrix& x,
                                  std::size_t budget = kDefaultDenseBudget) {
    const BatchCache cache = forward(net, x);
    return param_jacobian(net, cache, output_jacobians(net, cache), budget);
}

}  // namespace sobnat
