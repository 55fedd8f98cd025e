#pragma once
// Command-line front end: train, verify, flatness, funcgd, riemann.
// Exit codes: 0 success, 1 numerical failure or failed properties, 2 configuration errors.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

#include "config.hpp"
#include "data.hpp"
#include "errors.hpp"
#include "experiment_log.hpp"
#include "flatness.hpp"
#include "optimizers.hpp"
#include "riemann_descent.hpp"
#include "rkhs.hpp"
#include "verify.hpp"

namespace sobnat {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;

struct TrainSummary {
    std::size_t steps = 0;
    double final_train_loss = 0.0;  // mean loss over the whole training split
    double last_batch_loss = 0.0;
    double train_acc = 0.0;
    double test_acc = 0.0;
};

inline TrainSummary summarize(const TrainResult& r, const Dataset& ds, LossKind loss) {
    TrainSummary s;
    s.steps = r.log.steps.size();
    if (!r.log.steps.empty()) s.last_batch_loss = r.log.steps.back().train_loss;
    const DenseMatrix xt = select_rows(ds.features, ds.train);
    s.final_train_loss = batch_loss(loss, predict(r.net, xt), select_rows(ds.targets, ds.train));
    if (!r.log.epochs.empty()) {
        s.train_acc = r.log.epochs.back().train_acc;
        s.test_acc = r.log.epochs.back().test_acc;
    }
    return s;
}

// Trains per `rc` and writes the logs and config snapshot into rc.out.
inline TrainSummary run_training(const RunConfig& rc, ExperimentLog* log_out = nullptr) {
    Dataset ds;
    try {
        ds = build_dataset(rc);
    } catch (const InvalidArgument& e) {
        throw ConfigError(std::string("--data: ") + e.what());
    }
    const auto layers = build_layers(rc, ds);
    TrainResult r = train(rc.optim, ds, layers);
    r.log.config = to_config_entries(rc);
    write_logs(rc.out, r.log);
    const TrainSummary s = summarize(r, ds, rc.optim.loss);
    if (log_out) *log_out = std::move(r.log);
    return s;
}

namespace cli_detail {

inline std::string flag_name(const std::string& key) {
    std::string f = "--" + key;
    std::replace(f.begin(), f.end(), '_', '-');
    return f;
}

inline std::string fixed(double v, int digits = 6) {
    std::ostringstream os;
    os << std::setprecision(digits) << v;
    return os.str();
}

struct FuncGdArgs {
    std::size_t points = 8;
    std::size_t steps = 400;
    double lr = 0.5;
    double scale = 0.25;
    std::string mode = "single_sample";
    std::size_t grid = 101;
    std::uint64_t seed = 0;
    std::string out = "funcgd.csv";
};

struct FlatnessArgs {
    std::string toy = "quadratic1d";
    double epsilon = 0.04;
    std::string metric = "supplied";
    std::string reparam = "identity";
    std::string sampler = "grid";
    std::size_t resolution = 0;
    std::size_t samples = 200'000;
    std::uint64_t seed = 0;
};

struct RiemannArgs {
    std::string problem = "quadratic";
    std::size_t dim = 3;
    std::size_t steps = 200;
    std::size_t starts = 5;
    std::uint64_t seed = 0;
    std::string out;
};

inline int do_verify(const std::vector<std::string>& suites, double perturbation, std::uint64_t seed,
                     std::ostream& out) {
    VerifyOptions opt;
    opt.kernel_constant_factor = 1.0 + perturbation;
    opt.seed = seed;
    std::vector<std::string> names = suites.empty() ? suite_names() : suites;
    std::vector<PropertyResult> failed;
    std::size_t total = 0;
    for (const auto& s : names) {
        for (const auto& r : run_suite(s, opt)) {
            ++total;
            out << (r.passed ? "PASS " : "FAIL ") << r.suite << ": " << r.name << " -- " << r.detail << '\n';
            if (!r.passed) failed.push_back(r);
        }
    }
    out << total << " properties, " << failed.size() << " failed\n";
    for (const auto& r : failed) out << "failed: " << r.suite << ": " << r.name << '\n';
    return failed.empty() ? kExitOk : kExitFailure;
}

inline int do_flatness(const FlatnessArgs& a, std::ostream& out) {
    FlatnessToy toy;
    Reparam rp;
    MetricSource source;
    try {
        toy = flatness_toy(a.toy);
        rp = parse_reparam(a.reparam);
        source = parse_metric_source(a.metric);
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
    if (source != MetricSource::supplied && source != MetricSource::euclidean) {
        throw ConfigError("--metric: toy losses carry a supplied pullback field; use supplied or euclidean");
    }
    if (a.sampler != "grid" && a.sampler != "monte_carlo") throw ConfigError("--sampler: expected grid or monte_carlo");
    if (!(a.epsilon > 0.0)) throw ConfigError("--epsilon must be positive");

    FlatnessQuery base = toy.query;
    base.epsilon = a.epsilon;
    base.sampler.kind = a.sampler == "grid" ? Sampler::Kind::grid : Sampler::Kind::monte_carlo;
    base.sampler.resolution = a.resolution;
    base.sampler.samples = a.samples;
    base.sampler.seed = a.seed;

    FlatnessQuery pull = base;
    pull.source = source;
    if (source == MetricSource::supplied) pull.metric = toy.pullback;
    FlatnessQuery eucl = base;
    eucl.source = MetricSource::euclidean;

    const FlatnessResult rp_pull = epsilon_flatness(reparameterize(pull, rp));
    const FlatnessResult rp_eucl = epsilon_flatness(reparameterize(eucl, rp));
    out << "toy " << toy.name << "  epsilon " << a.epsilon << "  reparam " << rp.name << "  sampler " << a.sampler
        << '\n';
    out << std::left << std::setw(22) << "source" << std::setw(24) << "volume" << "std_error\n";
    out << std::setw(22) << (std::string("pullback (") + to_string(source) + ")") << std::setw(24)
        << format_real(rp_pull.volume) << format_real(rp_pull.std_error) << '\n';
    out << std::setw(22) << "euclidean" << std::setw(24) << format_real(rp_eucl.volume) << format_real(rp_eucl.std_error)
        << '\n';
    return kExitOk;
}

inline int do_funcgd(const FuncGdArgs& a, std::ostream& out) {
    FunctionalGdMode mode;
    if (a.mode == "single_sample") mode = FunctionalGdMode::single_sample;
    else if (a.mode == "full_batch") mode = FunctionalGdMode::full_batch;
    else throw ConfigError("--mode: expected single_sample or full_batch");
    if (a.points == 0) throw ConfigError("--points must be positive");
    if (!(a.lr > 0.0) || !(a.scale > 0.0)) throw ConfigError("--lr and --scale must be positive");
    if (a.grid < 2) throw ConfigError("--grid must be at least 2");

    // Target sin(2 pi x) on random points in [0, 1].
    auto target = [](double x) { return std::sin(2.0 * std::numbers::pi * x); };
    Rng rng = make_rng(a.seed, "data");
    std::vector<double> xs(a.points);
    for (auto& v : xs) v = uniform01(rng);
    std::sort(xs.begin(), xs.end());
    KernelSpec spec = KernelSpec::for_dim(1);
    spec.input_scale = a.scale;
    DenseMatrix x(a.points, 1);
    DenseMatrix y(a.points, 1);
    for (std::size_t i = 0; i < a.points; ++i) {
        x(i, 0) = xs[i] / a.scale;
        y(i, 0) = target(xs[i]);
    }
    const double lr = a.lr;
    const KernelExpansion f = functional_gd(x, y, LossKind::squared, a.steps, [lr](std::size_t) { return lr; }, spec, mode);

    double residual = 0.0;
    for (std::size_t i = 0; i < a.points; ++i) {
        const double d = eval(f, x.row(i))[0] - y(i, 0);
        residual += d * d;
    }
    std::ofstream csv(a.out, std::ios::binary);
    if (!csv) throw ConfigError("--out: cannot write '" + a.out + "'");
    csv << "x,predicted,true\n";
    for (std::size_t k = 0; k < a.grid; ++k) {
        const double xv = static_cast<double>(k) / static_cast<double>(a.grid - 1);
        const Vector p{xv / a.scale};
        csv << format_real(xv) << ',' << format_real(eval(f, p)[0]) << ',' << format_real(target(xv)) << '\n';
    }
    out << "functional GD (" << a.mode << "): " << a.steps << " steps on " << a.points << " points\n";
    out << "training residual " << format_real(residual) << "  rkhs norm " << format_real(rkhs_norm(f)) << '\n';
    out << "wrote " << a.out << '\n';
    return kExitOk;
}

inline int do_riemann(const RiemannArgs& a, std::ostream& out) {
    if (a.problem != "quadratic" && a.problem != "field") throw ConfigError("--problem: expected quadratic or field");
    if (a.dim == 0 || a.steps == 0 || a.starts == 0) throw ConfigError("--dim, --steps and --starts must be positive");
    Rng rng = make_rng(a.seed, "riemann");
    std::ofstream csv;
    if (!a.out.empty()) {
        csv.open(a.out, std::ios::binary);
        if (!csv) throw ConfigError("--out: cannot write '" + a.out + "'");
        csv << "start,T,gap,bound\n";
    }
    double mirror_gap = 0.0;
    for (std::size_t s = 0; s < a.starts; ++s) {
        const DenseMatrix h = random_spd(a.dim, 0.05, 5.0, rng);
        const RiemannProblem p = a.problem == "quadratic"
                                     ? quadratic_problem(h, random_spd(a.dim, 0.2, 3.0, rng))
                                     : quadratic_problem_diagonal_field(h, Vector(a.dim, 0.5), Vector(a.dim, 2.0));
        Vector x0(a.dim);
        for (auto& v : x0) v = 3.0 * standard_normal(rng);
        mirror_gap = std::max(mirror_gap, max_abs_diff(mirror_step(p, x0, p.compat_C * p.lipschitz_L), grad_step(p, x0)));
        const RateReport rep = verify_rate(p, x0, a.steps);
        out << "start " << s << ": L " << fixed(p.lipschitz_L) << "  C " << fixed(p.compat_C) << "  R^2 "
            << fixed(rep.radius_sq) << "  gap(T) " << format_real(rep.gaps.back()) << "  bound(T) "
            << format_real(rep.bounds.back()) << "  min decrease margin " << format_real(rep.min_decrease_margin)
            << '\n';
        if (csv)
            for (std::size_t t = 0; t < rep.gaps.size(); ++t)
                csv << s << ',' << t + 1 << ',' << format_real(rep.gaps[t]) << ',' << format_real(rep.bounds[t]) << '\n';
    }
    out << "rate bound holds for all T <= " << a.steps << " from " << a.starts << " starts\n";
    out << "mirror_step(x, C L) - grad_step(x): max difference " << format_real(mirror_gap) << '\n';
    return mirror_gap == 0.0 ? kExitOk : kExitFailure;
}

}  // namespace cli_detail

inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    using namespace cli_detail;
    CLI::App app{"Sobolev natural gradient experiments"};
    app.require_subcommand(1);

    // train: every configuration key is also a flag.
    auto* train_cmd = app.add_subcommand("train", "train a network and write CSV logs");
    std::string config_path;
    train_cmd->add_option("--config", config_path, "key=value configuration file");
    std::map<std::string, std::string> flag_values;
    std::vector<std::pair<std::string, CLI::Option*>> flag_opts;
    for (const auto& [key, value] : to_config_entries(RunConfig{})) {
        auto* o = train_cmd->add_option(flag_name(key), flag_values[key], key + " (default " + value + ")");
        flag_opts.emplace_back(key, o);
    }

    auto* verify_cmd = app.add_subcommand("verify", "run the property suites");
    std::vector<std::string> suites;
    double perturbation = 0.0;
    std::uint64_t verify_seed = 0;
    verify_cmd->add_option("--suite", suites, "suite to run (repeatable); default all")
        ->check(CLI::IsMember(suite_names()));
    verify_cmd->add_flag("--inject-kernel-perturbation{0.01}", perturbation,
                         "relative change of the kernel constant inside the kernel suite (bare flag: 0.01)");
    verify_cmd->add_option("--seed", verify_seed, "seed of the randomized suites");

    auto* flat_cmd = app.add_subcommand("flatness", "epsilon-flatness of a toy loss, pullback and euclidean");
    FlatnessArgs fa;
    flat_cmd->add_option("--toy", fa.toy, "quadratic1d or quadratic2d")->capture_default_str();
    flat_cmd->add_option("--epsilon", fa.epsilon, "band height above the minimum")->capture_default_str();
    flat_cmd->add_option("--metric", fa.metric, "pullback metric source: supplied or euclidean")->capture_default_str();
    flat_cmd->add_option("--reparam", fa.reparam, "identity, scale:<f> or tanh:<a>")->capture_default_str();
    flat_cmd->add_option("--sampler", fa.sampler, "grid or monte_carlo")->capture_default_str();
    flat_cmd->add_option("--resolution", fa.resolution, "grid cells per dimension (0: automatic)");
    flat_cmd->add_option("--samples", fa.samples, "Monte Carlo samples")->capture_default_str();
    flat_cmd->add_option("--seed", fa.seed, "Monte Carlo seed");

    auto* fgd_cmd = app.add_subcommand("funcgd", "functional gradient descent in the Sobolev RKHS");
    FuncGdArgs ga;
    fgd_cmd->add_option("--points", ga.points, "training points")->capture_default_str();
    fgd_cmd->add_option("--steps", ga.steps, "descent steps")->capture_default_str();
    fgd_cmd->add_option("--lr", ga.lr, "step size")->capture_default_str();
    fgd_cmd->add_option("--scale", ga.scale, "input scale of the kernel")->capture_default_str();
    fgd_cmd->add_option("--mode", ga.mode, "single_sample or full_batch")->capture_default_str();
    fgd_cmd->add_option("--grid", ga.grid, "rows of the output CSV")->capture_default_str();
    fgd_cmd->add_option("--seed", ga.seed, "data seed");
    fgd_cmd->add_option("--out", ga.out, "predicted-vs-true CSV")->capture_default_str();

    auto* rie_cmd = app.add_subcommand("riemann", "Riemannian descent rate checks on convex quadratics");
    RiemannArgs ra;
    rie_cmd->add_option("--problem", ra.problem, "quadratic (constant metric) or field (diagonal metric field)")
        ->capture_default_str();
    rie_cmd->add_option("--dim", ra.dim, "dimension")->capture_default_str();
    rie_cmd->add_option("--steps", ra.steps, "steps T")->capture_default_str();
    rie_cmd->add_option("--starts", ra.starts, "random instances")->capture_default_str();
    rie_cmd->add_option("--seed", ra.seed, "seed");
    rie_cmd->add_option("--out", ra.out, "optional CSV of gap and bound per step");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*train_cmd) {
            ConfigMap file;
            if (!config_path.empty()) file = load_config(config_path);
            ConfigMap flags;
            for (const auto& [key, opt] : flag_opts)
                if (opt->count() > 0) flags[key] = flag_values[key];
            const RunConfig rc = resolve_config(file, flags);
            const TrainSummary s = run_training(rc);
            out << "variant " << to_string(rc.optim.variant) << "  steps " << s.steps << "  final train_loss "
                << format_real(s.final_train_loss) << "  last batch loss " << format_real(s.last_batch_loss)
                << "  train_acc " << format_real(s.train_acc) << "  test_acc " << format_real(s.test_acc) << '\n';
            const std::filesystem::path dir(rc.out);
            out << "wrote " << (dir / std::string(kStepLogFile)).string() << ", "
                << (dir / std::string(kEpochLogFile)).string() << ", " << (dir / std::string(kConfigSnapshotFile)).string()
                << '\n';
            return kExitOk;
        }
        if (*verify_cmd) {
            return do_verify(suites, perturbation, verify_seed, out);
        }
        if (*flat_cmd) return do_flatness(fa, out);
        if (*fgd_cmd) return do_funcgd(ga, out);
        if (*rie_cmd) return do_riemann(ra, out);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const Error& e) {
        err << "error: " << e.kind() << ": " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitConfig;
}

}  // namespace sobnat
