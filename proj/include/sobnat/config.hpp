#pragma once
// Run configuration: flat key=value files, command-line overrides and the
// snapshot written next to the logs. Keys use underscores; flags use the same
// names with dashes.

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "data.hpp"
#include "errors.hpp"
#include "network.hpp"
#include "optimizers.hpp"

namespace sobnat {

struct RunConfig {
    OptimConfig optim;

    std::string dataset = "two-moons";  // two-moons | csv
    std::string data;                   // CSV path
    CsvSchema schema = CsvSchema::label_first;
    std::size_t target_count = 1;
    bool skip_header = false;
    std::size_t count = 1000;  // two-moons points
    double noise = 0.1;
    double test_fraction = 0.2;
    bool normalize = true;

    std::vector<std::size_t> hidden{16, 16};
    Activation activation = Activation::tanh;

    std::string out = ".";
};

using ConfigMap = std::map<std::string, std::string>;

inline std::string config_key(std::string_view key) {
    std::string k(key);
    for (auto& ch : k)
        if (ch == '-') ch = '_';
    return k;
}

namespace detail {

inline std::string_view strip(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
    T out{};
    const char* first = value.data();
    const char* last = first + value.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    if (ec != std::errc{} || ptr != last) throw ConfigError("bad value for " + key + ": '" + value + "'");
    return out;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
    if (value == "false" || value == "0" || value == "no" || value == "off") return false;
    throw ConfigError("bad value for " + key + ": '" + value + "' (expected true or false)");
}

inline std::vector<std::size_t> parse_sizes(const std::string& key, const std::string& value) {
    std::vector<std::size_t> out;
    if (value.empty() || value == "none") return out;
    std::string_view rest(value);
    while (true) {
        const auto pos = rest.find(',');
        const std::string item(strip(rest.substr(0, pos)));
        const auto n = parse_number<std::size_t>(key, item);
        if (n == 0) throw ConfigError(key + ": layer widths must be positive");
        out.push_back(n);
        if (pos == std::string_view::npos) break;
        rest.remove_prefix(pos + 1);
    }
    return out;
}

// Enum parsers throw InvalidArgument; configuration errors surface as ConfigError.
template <class F>
auto parse_enum(const std::string& key, const std::string& value, F&& f) {
    try {
        return f(value);
    } catch (const InvalidArgument& e) {
        throw ConfigError("bad value for " + key + ": " + e.what());
    }
}

inline std::string join_sizes(const std::vector<std::size_t>& v) {
    if (v.empty()) return "none";
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ',';
        s += std::to_string(v[i]);
    }
    return s;
}

}  // namespace detail

// Lines are key=value; '#' starts a comment; blank lines are ignored.
inline ConfigMap parse_config(std::istream& in, const std::string& source = "config") {
    ConfigMap out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view v(line);
        if (auto hash = v.find('#'); hash != std::string_view::npos) v = v.substr(0, hash);
        v = detail::strip(v);
        if (v.empty()) continue;
        const auto eq = v.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError(source + ":" + std::to_string(line_no) + ": expected key=value");
        }
        const std::string key = config_key(detail::strip(v.substr(0, eq)));
        if (key.empty()) throw ConfigError(source + ":" + std::to_string(line_no) + ": empty key");
        out[key] = std::string(detail::strip(v.substr(eq + 1)));
    }
    return out;
}

inline ConfigMap load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    return parse_config(in, path);
}

inline void apply_entry(RunConfig& rc, const std::string& raw_key, const std::string& value) {
    using detail::parse_bool;
    using detail::parse_enum;
    using detail::parse_number;
    const std::string key = config_key(raw_key);
    OptimConfig& o = rc.optim;
    if (key == "variant") o.variant = parse_enum(key, value, parse_variant);
    else if (key == "lr") o.lr = parse_number<double>(key, value);
    else if (key == "weight_decay") o.weight_decay = parse_number<double>(key, value);
    else if (key == "damping") o.damping = parse_number<double>(key, value);
    else if (key == "input_scale") o.input_scale = parse_number<double>(key, value);
    else if (key == "schedule") {
        if (value == "auto") o.schedule.reset();
        else o.schedule = parse_enum(key, value, parse_schedule);
    } else if (key == "batch_size") o.batch_size = parse_number<std::size_t>(key, value);
    else if (key == "epochs") o.epochs = parse_number<std::size_t>(key, value);
    else if (key == "seed") o.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "loss") o.loss = parse_enum(key, value, parse_loss_kind);
    else if (key == "constant_mode") o.constant_mode = parse_enum(key, value, parse_constant_mode);
    else if (key == "jitter") o.jitter = parse_number<double>(key, value);
    else if (key == "force_identity_kernel") o.force_identity_kernel = parse_bool(key, value);
    else if (key == "kfac_decay") o.kfac_decay = parse_number<double>(key, value);
    else if (key == "kfac_update_period") o.kfac_update_period = parse_number<std::size_t>(key, value);
    else if (key == "kfac_damping_mode") o.kfac_damping_mode = parse_enum(key, value, parse_kfac_damping);
    else if (key == "kfac_exact_output_limit") o.kfac_exact_output_limit = parse_number<std::size_t>(key, value);
    else if (key == "dense_block_diagonal") o.dense_block_diagonal = parse_bool(key, value);
    else if (key == "dense_budget") o.dense_budget = parse_number<std::size_t>(key, value);
    else if (key == "max_steps") o.max_steps = parse_number<std::size_t>(key, value);
    else if (key == "record_timing") o.record_timing = parse_bool(key, value);
    else if (key == "dataset") {
        if (value != "two-moons" && value != "csv") {
            throw ConfigError("bad value for dataset: '" + value + "' (expected two-moons or csv)");
        }
        rc.dataset = value;
    } else if (key == "data") rc.data = value;
    else if (key == "schema") rc.schema = parse_enum(key, value, parse_csv_schema);
    else if (key == "target_count") rc.target_count = parse_number<std::size_t>(key, value);
    else if (key == "skip_header") rc.skip_header = parse_bool(key, value);
    else if (key == "count") rc.count = parse_number<std::size_t>(key, value);
    else if (key == "noise") rc.noise = parse_number<double>(key, value);
    else if (key == "test_fraction") rc.test_fraction = parse_number<double>(key, value);
    else if (key == "normalize") rc.normalize = parse_bool(key, value);
    else if (key == "hidden") rc.hidden = detail::parse_sizes(key, value);
    else if (key == "activation") rc.activation = parse_enum(key, value, parse_activation);
    else if (key == "out") rc.out = value;
    else throw ConfigError("unknown config key '" + raw_key + "'");
}

inline void validate(const RunConfig& rc) {
    try {
        rc.optim.validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
    if (rc.dataset == "csv" && rc.data.empty()) throw ConfigError("--data is required with --dataset csv");
    if (!(rc.test_fraction >= 0.0 && rc.test_fraction < 1.0)) throw ConfigError("test_fraction must be in [0, 1)");
    if (!(rc.noise >= 0.0)) throw ConfigError("noise must be non-negative");
    if (rc.dataset == "two-moons" && rc.count < 2) throw ConfigError("count must be at least 2");
    if (rc.target_count == 0) throw ConfigError("target_count must be positive");
}

// defaults < file < flags
inline RunConfig resolve_config(const ConfigMap& file, const ConfigMap& flags) {
    RunConfig rc;
    for (const auto& [k, v] : file) apply_entry(rc, k, v);
    for (const auto& [k, v] : flags) apply_entry(rc, k, v);
    validate(rc);
    return rc;
}

// Every key in a fixed order; feeding the result back through apply_entry
// reproduces the configuration.
inline std::vector<std::pair<std::string, std::string>> to_config_entries(const RunConfig& rc) {
    const OptimConfig& o = rc.optim;
    auto b = [](bool v) { return std::string(v ? "true" : "false"); };
    return {
        {"variant", to_string(o.variant)},
        {"lr", format_real(o.lr)},
        {"weight_decay", format_real(o.weight_decay)},
        {"damping", format_real(o.damping)},
        {"input_scale", format_real(o.input_scale)},
        {"schedule", o.schedule ? to_string(*o.schedule) : "auto"},
        {"batch_size", std::to_string(o.batch_size)},
        {"epochs", std::to_string(o.epochs)},
        {"seed", std::to_string(o.seed)},
        {"loss", to_string(o.loss)},
        {"constant_mode", to_string(o.constant_mode)},
        {"jitter", format_real(o.jitter)},
        {"force_identity_kernel", b(o.force_identity_kernel)},
        {"kfac_decay", format_real(o.kfac_decay)},
        {"kfac_update_period", std::to_string(o.kfac_update_period)},
        {"kfac_damping_mode", to_string(o.kfac_damping_mode)},
        {"kfac_exact_output_limit", std::to_string(o.kfac_exact_output_limit)},
        {"dense_block_diagonal", b(o.dense_block_diagonal)},
        {"dense_budget", std::to_string(o.dense_budget)},
        {"max_steps", std::to_string(o.max_steps)},
        {"record_timing", b(o.record_timing)},
        {"dataset", rc.dataset},
        {"data", rc.data},
        {"schema", rc.schema == CsvSchema::label_first ? "label_first" : "targets_last_m"},
        {"target_count", std::to_string(rc.target_count)},
        {"skip_header", b(rc.skip_header)},
        {"count", std::to_string(rc.count)},
        {"noise", format_real(rc.noise)},
        {"test_fraction", format_real(rc.test_fraction)},
        {"normalize", b(rc.normalize)},
        {"hidden", detail::join_sizes(rc.hidden)},
        {"activation", to_string(rc.activation)},
        {"out", rc.out},
    };
}

inline std::string format_config(const RunConfig& rc) {
    std::ostringstream os;
    for (const auto& [k, v] : to_config_entries(rc)) os << k << '=' << v << '\n';
    return os.str();
}

// Dataset described by the configuration: generated or loaded, split,
// normalized on the training rows.
inline Dataset build_dataset(const RunConfig& rc) {
    Dataset ds;
    if (rc.dataset == "csv") {
        if (rc.data.empty()) throw ConfigError("--data is required with --dataset csv");
        ds = load_csv(rc.data, CsvOptions{rc.schema, rc.target_count, rc.skip_header});
    } else {
        ds = gen_two_moons(rc.count, rc.noise, rc.optim.seed);
    }
    ds = train_test_split(std::move(ds), rc.test_fraction, rc.optim.seed);
    if (rc.normalize) ds = normalize(std::move(ds));
    return ds;
}

inline std::vector<LayerSpec> build_layers(const RunConfig& rc, const Dataset& ds) {
    std::vector<std::size_t> dims{ds.input_dim()};
    dims.insert(dims.end(), rc.hidden.begin(), rc.hidden.end());
    dims.push_back(ds.output_dim());
    return mlp_layers(dims, rc.activation);
}

}  // namespace sobnat
