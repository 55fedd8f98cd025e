#pragma once
// Volume of the connected band {w : F(w0) < F(w) < F(w0) + eps} around a
// minimum w0, measured with the volume form sqrt(det g(w)) dw of a metric on
// parameter space, and the check that this volume does not depend on coordinates.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "data.hpp"
#include "errors.hpp"
#include "linalg.hpp"
#include "metric.hpp"
#include "network.hpp"
#include "rng.hpp"

namespace sobnat {

using ScalarField = std::function<double(std::span<const double>)>;
using MetricField = std::function<DenseMatrix(std::span<const double>)>;

enum class MetricSource {
    exact_quadrature,  // L2 pullback by quadrature
    rkhs_projected,    // batch estimate with a Sobolev Gram
    euclidean,         // Lebesgue volume, g = I
    supplied,          // any caller-provided field
};

inline const char* to_string(MetricSource s) {
    switch (s) {
        case MetricSource::exact_quadrature: return "exact_quadrature";
        case MetricSource::rkhs_projected: return "rkhs_projected";
        case MetricSource::euclidean: return "euclidean";
        case MetricSource::supplied: return "supplied";
    }
    return "?";
}

inline MetricSource parse_metric_source(const std::string& s) {
    for (auto m : {MetricSource::exact_quadrature, MetricSource::rkhs_projected, MetricSource::euclidean,
                   MetricSource::supplied})
        if (s == to_string(m)) return m;
    throw InvalidArgument("unknown metric source '" + s + "'");
}

struct Sampler {
    enum class Kind { grid, monte_carlo };
    Kind kind = Kind::grid;
    std::size_t resolution = 0;  // cells per dimension; 0 picks 4001 / 401 / 81 for 1 / 2 / 3 dims
    std::size_t refine = 0;      // subcells per dimension on the band's edge; 0 picks 16 / 8 / 4
    std::size_t samples = 200'000;
    std::uint64_t seed = 0;
};

struct FlatnessQuery {
    ScalarField loss;
    Vector minimum;
    double epsilon = 0.0;
    MetricSource source = MetricSource::euclidean;
    MetricField metric;  // ignored for euclidean
    Sampler sampler;
    Vector box_lo;
    Vector box_hi;
};

struct FlatnessResult {
    double volume = 0.0;
    double std_error = 0.0;  // grid: half the measure of the refined edge cells / refine
    std::size_t cells = 0;   // grid cells in the connected band
    std::size_t evaluations = 0;
};

namespace detail {

inline double small_det(const DenseMatrix& g) {
    switch (g.rows()) {
        case 1: return g(0, 0);
        case 2: return g(0, 0) * g(1, 1) - g(0, 1) * g(1, 0);
        case 3:
            return g(0, 0) * (g(1, 1) * g(2, 2) - g(1, 2) * g(2, 1)) - g(0, 1) * (g(1, 0) * g(2, 2) - g(1, 2) * g(2, 0)) +
                   g(0, 2) * (g(1, 0) * g(2, 1) - g(1, 1) * g(2, 0));
        default: throw InvalidArgument("flatness: at most three dimensions");
    }
}

inline double volume_density(const FlatnessQuery& q, std::span<const double> w) {
    if (q.source == MetricSource::euclidean) return 1.0;
    const DenseMatrix g = q.metric(w);
    if (g.rows() != w.size() || g.cols() != w.size()) throw DimensionMismatch("flatness: metric has wrong shape");
    const double det = small_det(g);
    const double scale = std::max(1e-300, std::pow(max_abs(g), static_cast<double>(w.size())));
    if (det < -1e-10 * scale) throw NotPositiveDefinite("flatness: metric determinant " + std::to_string(det) + " < 0");
    return std::sqrt(std::max(0.0, det));
}

struct Grid {
    std::size_t dim = 0;
    std::size_t res = 0;
    Vector lo, h;

    [[nodiscard]] std::size_t count() const {
        std::size_t c = 1;
        for (std::size_t d = 0; d < dim; ++d) c *= res;
        return c;
    }
    [[nodiscard]] std::vector<std::size_t> unravel(std::size_t k) const {
        std::vector<std::size_t> idx(dim);
        for (std::size_t d = 0; d < dim; ++d) {
            idx[d] = k % res;
            k /= res;
        }
        return idx;
    }
    [[nodiscard]] std::size_t ravel(const std::vector<std::size_t>& idx) const {
        std::size_t k = 0;
        for (std::size_t d = dim; d-- > 0;) k = k * res + idx[d];
        return k;
    }
    [[nodiscard]] Vector center(std::size_t k) const {
        const auto idx = unravel(k);
        Vector c(dim);
        for (std::size_t d = 0; d < dim; ++d) c[d] = lo[d] + (static_cast<double>(idx[d]) + 0.5) * h[d];
        return c;
    }
    [[nodiscard]] bool on_boundary(std::size_t k) const {
        for (auto i : unravel(k))
            if (i == 0 || i + 1 == res) return true;
        return false;
    }
    [[nodiscard]] std::vector<std::size_t> neighbors(std::size_t k) const {
        std::vector<std::size_t> out;
        auto idx = unravel(k);
        for (std::size_t d = 0; d < dim; ++d) {
            if (idx[d] > 0) {
                --idx[d];
                out.push_back(ravel(idx));
                ++idx[d];
            }
            if (idx[d] + 1 < res) {
                ++idx[d];
                out.push_back(ravel(idx));
                --idx[d];
            }
        }
        return out;
    }
    [[nodiscard]] double cell_volume() const {
        double v = 1.0;
        for (double x : h) v *= x;
        return v;
    }
};

enum class CellState : unsigned char { unknown, inside, outside };

struct Component {
    Grid grid;
    std::vector<CellState> state;
    std::vector<std::size_t> inside;
    double f0 = 0.0;
    double threshold = 0.0;
    std::size_t evaluations = 0;
};

inline void validate_query(const FlatnessQuery& q) {
    const std::size_t d = q.minimum.size();
    if (d == 0 || d > 3) throw InvalidArgument("flatness: dimension must be 1, 2 or 3");
    if (q.box_lo.size() != d || q.box_hi.size() != d) throw DimensionMismatch("flatness: bounding box dimension");
    if (!(q.epsilon > 0.0)) throw InvalidArgument("flatness: epsilon must be positive");
    if (!q.loss) throw InvalidArgument("flatness: no loss function");
    if (q.source != MetricSource::euclidean && !q.metric) throw InvalidArgument("flatness: no metric field");
    for (std::size_t k = 0; k < d; ++k) {
        if (!(q.box_hi[k] > q.box_lo[k])) throw InvalidArgument("flatness: empty bounding box");
        if (!(q.minimum[k] > q.box_lo[k] && q.minimum[k] < q.box_hi[k])) {
            throw InvalidArgument("flatness: minimum lies outside the bounding box");
        }
    }
}

// Flood fill over grid cells whose centers satisfy F < F(w0) + eps, starting
// from the cell holding w0.
inline Component connected_band(const FlatnessQuery& q) {
    validate_query(q);
    const std::size_t d = q.minimum.size();
    Component c;
    c.grid.dim = d;
    c.grid.res = q.sampler.resolution ? q.sampler.resolution : (d == 1 ? 4001 : d == 2 ? 401 : 81);
    if (c.grid.res < 3) throw InvalidArgument("flatness: resolution must be at least 3");
    c.grid.lo = q.box_lo;
    c.grid.h.resize(d);
    for (std::size_t k = 0; k < d; ++k) c.grid.h[k] = (q.box_hi[k] - q.box_lo[k]) / static_cast<double>(c.grid.res);
    c.state.assign(c.grid.count(), CellState::unknown);
    c.f0 = q.loss(q.minimum);
    c.threshold = c.f0 + q.epsilon;

    std::vector<std::size_t> start_idx(d);
    for (std::size_t k = 0; k < d; ++k) {
        const auto i = static_cast<std::size_t>(std::floor((q.minimum[k] - q.box_lo[k]) / c.grid.h[k]));
        start_idx[k] = std::min(i, c.grid.res - 1);
    }
    const std::size_t start = c.grid.ravel(start_idx);
    std::deque<std::size_t> queue{start};
    c.state[start] = CellState::inside;
    while (!queue.empty()) {
        const std::size_t k = queue.front();
        queue.pop_front();
        c.inside.push_back(k);
        if (c.grid.on_boundary(k)) {
            throw UnboundedRegion("flatness: the eps-band reaches the bounding box; shrink eps or enlarge the box");
        }
        for (auto nb : c.grid.neighbors(k)) {
            if (c.state[nb] != CellState::unknown) continue;
            const double f = q.loss(c.grid.center(nb));
            ++c.evaluations;
            if (f < c.f0 - 1e-9) {
                throw NotLocalMinimum("flatness: loss " + std::to_string(f) + " below F(w0) = " + std::to_string(c.f0) +
                                      " inside the band");
            }
            if (f < c.threshold) {
                c.state[nb] = CellState::inside;
                queue.push_back(nb);
            } else {
                c.state[nb] = CellState::outside;
            }
        }
    }
    return c;
}

}  // namespace detail

inline FlatnessResult epsilon_flatness(const FlatnessQuery& q) {
    detail::Component comp = detail::connected_band(q);
    const auto& grid = comp.grid;
    const std::size_t d = grid.dim;
    FlatnessResult r;
    r.cells = comp.inside.size();
    r.evaluations = comp.evaluations;

    // Edge cells: inside cells touching an outside cell, and those outside cells.
    std::vector<char> edge(grid.count(), 0);
    for (auto k : comp.inside)
        for (auto nb : grid.neighbors(k))
            if (comp.state[nb] != detail::CellState::inside) {
                edge[k] = 1;
                edge[nb] = 1;
            }

    if (q.sampler.kind == Sampler::Kind::grid) {
        const std::size_t refine = q.sampler.refine ? q.sampler.refine : (d == 1 ? 16 : d == 2 ? 8 : 4);
        std::size_t sub_count = 1;
        for (std::size_t k = 0; k < d; ++k) sub_count *= refine;
        const double cell_vol = grid.cell_volume();
        const double sub_vol = cell_vol / static_cast<double>(sub_count);
        double volume = 0.0;
        double edge_measure = 0.0;
        for (auto k : comp.inside)
            if (!edge[k]) volume += detail::volume_density(q, grid.center(k)) * cell_vol;
        for (std::size_t k = 0; k < grid.count(); ++k) {
            if (!edge[k]) continue;
            const auto idx = grid.unravel(k);
            Vector p(d);
            for (std::size_t s = 0; s < sub_count; ++s) {
                std::size_t rem = s;
                for (std::size_t a = 0; a < d; ++a) {
                    const std::size_t j = rem % refine;
                    rem /= refine;
                    p[a] = grid.lo[a] + (static_cast<double>(idx[a]) +
                                         (static_cast<double>(j) + 0.5) / static_cast<double>(refine)) *
                                            grid.h[a];
                }
                ++r.evaluations;
                if (q.loss(p) < comp.threshold) volume += detail::volume_density(q, p) * sub_vol;
            }
            edge_measure += cell_vol;
        }
        r.volume = volume;
        r.std_error = 0.5 * edge_measure / static_cast<double>(refine);
        return r;
    }

    // Monte Carlo over the box, restricted to the band's cells and their edge.
    Rng rng = make_rng(q.sampler.seed, "mc");
    double box_vol = 1.0;
    for (std::size_t k = 0; k < d; ++k) box_vol *= q.box_hi[k] - q.box_lo[k];
    const std::size_t n = q.sampler.samples;
    if (n < 2) throw InvalidArgument("flatness: need at least two Monte Carlo samples");
    double sum = 0.0;
    double sum_sq = 0.0;
    Vector p(d);
    std::vector<std::size_t> idx(d);
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t k = 0; k < d; ++k) {
            p[k] = uniform(rng, q.box_lo[k], q.box_hi[k]);
            idx[k] = std::min(grid.res - 1, static_cast<std::size_t>((p[k] - grid.lo[k]) / grid.h[k]));
        }
        const std::size_t cell = grid.ravel(idx);
        if (comp.state[cell] != detail::CellState::inside && !edge[cell]) continue;
        ++r.evaluations;
        if (!(q.loss(p) < comp.threshold)) continue;
        const double v = detail::volume_density(q, p);
        sum += v;
        sum_sq += v * v;
    }
    const double nd = static_cast<double>(n);
    const double mean = sum / nd;
    const double var = std::max(0.0, sum_sq / nd - mean * mean);
    r.volume = box_vol * mean;
    r.std_error = box_vol * std::sqrt(var / (nd - 1.0));
    return r;
}

// Coordinate change w = to_original(u) with inverse u = to_new(w) and
// Jacobian dw/du. The provided maps act coordinate by coordinate and are
// increasing, so boxes map to boxes.
struct Reparam {
    std::string name;
    std::function<Vector(std::span<const double>)> to_original;
    std::function<Vector(std::span<const double>)> to_new;
    std::function<DenseMatrix(std::span<const double>)> jacobian;
};

inline Reparam identity_reparam() {
    return {"identity", [](std::span<const double> u) { return Vector(u.begin(), u.end()); },
            [](std::span<const double> w) { return Vector(w.begin(), w.end()); },
            [](std::span<const double> u) { return DenseMatrix::identity(u.size()); }};
}

// w = factor * u.
inline Reparam scale_reparam(double factor) {
    if (!(factor > 0.0)) throw InvalidArgument("scale reparameterization: factor must be positive");
    return {"scale:" + format_real(factor),
            [factor](std::span<const double> u) {
                Vector w(u.begin(), u.end());
                for (auto& v : w) v *= factor;
                return w;
            },
            [factor](std::span<const double> w) {
                Vector u(w.begin(), w.end());
                for (auto& v : u) v /= factor;
                return u;
            },
            [factor](std::span<const double> u) { return DenseMatrix::identity(u.size()) * factor; }};
}

// w_i = u_i + alpha tanh(u_i), alpha > -1; inverted by safeguarded Newton.
inline Reparam tanh_warp(double alpha) {
    if (!(alpha > -1.0)) throw InvalidArgument("tanh warp: alpha must exceed -1");
    auto inverse_1d = [alpha](double w) {
        // h(u) = u + alpha tanh(u) - w is increasing; bracket then Newton with bisection fallback.
        double lo = w - std::abs(alpha) - 1.0;
        double hi = w + std::abs(alpha) + 1.0;
        double u = w / (1.0 + alpha);
        for (int it = 0; it < 200; ++it) {
            const double t = std::tanh(u);
            const double h = u + alpha * t - w;
            if (h > 0.0) hi = u; else lo = u;
            if (std::abs(h) <= 1e-15 * std::max(1.0, std::abs(w))) break;
            const double dh = 1.0 + alpha * (1.0 - t * t);
            double next = u - h / dh;
            if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
            if (next == u) break;
            u = next;
        }
        return u;
    };
    return {"tanh:" + format_real(alpha),
            [alpha](std::span<const double> u) {
                Vector w(u.size());
                for (std::size_t i = 0; i < u.size(); ++i) w[i] = u[i] + alpha * std::tanh(u[i]);
                return w;
            },
            [inverse_1d](std::span<const double> w) {
                Vector u(w.size());
                for (std::size_t i = 0; i < w.size(); ++i) u[i] = inverse_1d(w[i]);
                return u;
            },
            [alpha](std::span<const double> u) {
                DenseMatrix j(u.size(), u.size());
                for (std::size_t i = 0; i < u.size(); ++i) {
                    const double t = std::tanh(u[i]);
                    j(i, i) = 1.0 + alpha * (1.0 - t * t);
                }
                return j;
            }};
}

// "identity", "scale:<factor>" or "tanh:<alpha>".
inline Reparam parse_reparam(const std::string& s) {
    if (s == "identity") return identity_reparam();
    const auto colon = s.find(':');
    if (colon != std::string::npos) {
        const std::string kind = s.substr(0, colon);
        double value = 0.0;
        try {
            std::size_t used = 0;
            value = std::stod(s.substr(colon + 1), &used);
            if (used != s.size() - colon - 1) throw InvalidArgument("");
        } catch (const std::exception&) {
            throw InvalidArgument("reparameterization '" + s + "': bad number");
        }
        if (kind == "scale") return scale_reparam(value);
        if (kind == "tanh") return tanh_warp(value);
    }
    throw InvalidArgument("unknown reparameterization '" + s + "' (expected identity, scale:<f> or tanh:<a>)");
}

// The same query written in u-coordinates. The metric is pulled back,
// g_u = J^T g J; a euclidean query stays euclidean in the new coordinates.
inline FlatnessQuery reparameterize(const FlatnessQuery& q, const Reparam& rp) {
    FlatnessQuery out = q;
    const ScalarField loss = q.loss;
    const auto to_original = rp.to_original;
    out.loss = [loss, to_original](std::span<const double> u) { return loss(to_original(u)); };
    out.minimum = rp.to_new(q.minimum);
    const Vector a = rp.to_new(q.box_lo);
    const Vector b = rp.to_new(q.box_hi);
    out.box_lo.resize(a.size());
    out.box_hi.resize(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
        out.box_lo[k] = std::min(a[k], b[k]);
        out.box_hi[k] = std::max(a[k], b[k]);
    }
    if (q.source != MetricSource::euclidean) {
        const MetricField g = q.metric;
        const auto jac = rp.jacobian;
        out.metric = [g, jac, to_original](std::span<const double> u) {
            const DenseMatrix j = jac(u);
            return matmul_tn(j, matmul(g(to_original(u)), j));
        };
    }
    return out;
}

struct InvarianceReport {
    FlatnessResult original;
    FlatnessResult transformed;
    double discrepancy = 0.0;  // |transformed - original| / original
};

inline InvarianceReport invariance_check(const FlatnessQuery& q, const Reparam& rp) {
    InvarianceReport rep;
    rep.original = epsilon_flatness(q);
    rep.transformed = epsilon_flatness(reparameterize(q, rp));
    rep.discrepancy = rep.original.volume > 0.0
                          ? std::abs(rep.transformed.volume - rep.original.volume) / rep.original.volume
                          : std::abs(rep.transformed.volume);
    return rep;
}

// L2 pullback metric of `net` over `measure` as a field of the parameters in
// `subset` (other parameters stay at their current values).
inline MetricField quadrature_metric_field(const MlpNetwork& net, const InputMeasure& measure,
                                           std::size_t nodes_per_dim, std::vector<std::size_t> subset) {
    return [net, measure, nodes_per_dim, subset](std::span<const double> w) {
        if (w.size() != subset.size()) throw DimensionMismatch("metric field: coordinate count");
        MlpNetwork local = net;
        Vector p = local.parameters();
        for (std::size_t i = 0; i < subset.size(); ++i) p.at(subset[i]) = w[i];
        local.set_parameters(p);
        return exact_pullback_quadrature(local, measure, nodes_per_dim, subset).values;
    };
}

// Batch estimate J K^{-1} J^T / B restricted to `subset`.
inline MetricField projected_metric_field(const MlpNetwork& net, const DenseMatrix& batch, const GramMatrix& gram,
                                          std::vector<std::size_t> subset) {
    return [net, batch, gram, subset](std::span<const double> w) {
        if (w.size() != subset.size()) throw DimensionMismatch("metric field: coordinate count");
        MlpNetwork local = net;
        Vector p = local.parameters();
        for (std::size_t i = 0; i < subset.size(); ++i) p.at(subset[i]) = w[i];
        local.set_parameters(p);
        const DenseMatrix j = param_jacobian(local, batch);
        DenseMatrix rows(subset.size(), j.cols());
        for (std::size_t i = 0; i < subset.size(); ++i) {
            auto src = j.row(subset[i]);
            std::copy(src.begin(), src.end(), rows.row(i).begin());
        }
        PullbackMetric g = estimate_metric(rows, gram);
        return g.values * (1.0 / static_cast<double>(batch.rows()));
    };
}

// Toy losses used by the CLI and the verification suite.
struct FlatnessToy {
    std::string name;
    FlatnessQuery query;  // euclidean source, default box
    MetricField pullback;  // the metric the toy treats as the pullback one
};

inline FlatnessToy flatness_toy(const std::string& name) {
    FlatnessToy t;
    t.name = name;
    if (name == "quadratic1d") {
        t.query.loss = [](std::span<const double> w) { return w[0] * w[0]; };
        t.query.minimum = {0.0};
        t.query.box_lo = {-1.0};
        t.query.box_hi = {1.0};
        t.pullback = [](std::span<const double>) { return DenseMatrix::identity(1); };
    } else if (name == "quadratic2d") {
        t.query.loss = [](std::span<const double> w) { return (w[0] - 0.2) * (w[0] - 0.2) + 3.0 * w[1] * w[1] + 0.5 * w[0] * w[1]; };
        // minimum of the quadratic: grad = (2(w0 - 0.2) + 0.5 w1, 6 w1 + 0.5 w0) = 0
        const double det = 2.0 * 6.0 - 0.25;
        t.query.minimum = {(6.0 * 0.4) / det, (-0.5 * 0.4) / det};
        t.query.box_lo = {-1.5, -1.5};
        t.query.box_hi = {1.5, 1.5};
        t.pullback = [](std::span<const double> w) {
            DenseMatrix g(2, 2);
            g(0, 0) = 1.0 + w[0] * w[0];
            g(1, 1) = 2.0 + std::sin(w[1]);
            g(0, 1) = g(1, 0) = 0.3 * std::tanh(w[0]);
            return g;
        };
    } else {
        throw InvalidArgument("unknown flatness toy '" + name + "' (expected quadratic1d or quadratic2d)");
    }
    return t;
}

}  // namespace sobnat
