#pragma once
// CSV experiment logs.
//   log_steps.csv:  step,epoch,lr,train_loss,wall_ms
//   log_epochs.csv: epoch,train_acc,test_acc
// Reals are written with 17 significant digits so they parse back exactly.

#include <charconv>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "data.hpp"
#include "errors.hpp"
#include "optimizers.hpp"

namespace sobnat {

inline constexpr std::string_view kStepLogHeader = "step,epoch,lr,train_loss,wall_ms";
inline constexpr std::string_view kEpochLogHeader = "epoch,train_acc,test_acc";
inline constexpr std::string_view kStepLogFile = "log_steps.csv";
inline constexpr std::string_view kEpochLogFile = "log_epochs.csv";
inline constexpr std::string_view kConfigSnapshotFile = "config.txt";

inline void write_step_log(std::ostream& out, const std::vector<StepRecord>& steps) {
    out << kStepLogHeader << '\n';
    for (const auto& r : steps) {
        out << r.step << ',' << r.epoch << ',' << format_real(r.lr) << ',' << format_real(r.train_loss) << ','
            << format_real(r.wall_ms) << '\n';
    }
}

inline void write_epoch_log(std::ostream& out, const std::vector<EpochRecord>& epochs) {
    out << kEpochLogHeader << '\n';
    for (const auto& r : epochs) {
        out << r.epoch << ',' << format_real(r.train_acc) << ',' << format_real(r.test_acc) << '\n';
    }
}

inline void write_config_snapshot(std::ostream& out, const ExperimentLog& log) {
    for (const auto& [k, v] : log.config) out << k << '=' << v << '\n';
}

// Writes log_steps.csv, log_epochs.csv and config.txt into `dir`, creating it if needed.
inline void write_logs(const std::filesystem::path& dir, const ExperimentLog& log) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw InvalidArgument("cannot create output directory '" + dir.string() + "': " + ec.message());
    auto open = [&](std::string_view name) {
        std::ofstream f(dir / std::string(name), std::ios::binary);
        if (!f) throw InvalidArgument("cannot write '" + (dir / std::string(name)).string() + "'");
        return f;
    };
    {
        auto f = open(kStepLogFile);
        write_step_log(f, log.steps);
    }
    {
        auto f = open(kEpochLogFile);
        write_epoch_log(f, log.epochs);
    }
    {
        auto f = open(kConfigSnapshotFile);
        write_config_snapshot(f, log);
    }
}

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    while (true) {
        const auto pos = line.find(',');
        out.push_back(line.substr(0, pos));
        if (pos == std::string_view::npos) break;
        line.remove_prefix(pos + 1);
    }
    return out;
}

template <class T>
T log_field(std::string_view s, std::size_t line, std::size_t column) {
    T v{};
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        throw ParseError(line, column, "bad log field '" + std::string(s) + "'");
    }
    return v;
}

inline std::vector<std::vector<std::string_view>> read_rows(std::istream& in, std::string_view header,
                                                            std::vector<std::string>& storage) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError(1, 1, "empty log");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != header) throw ParseError(1, 1, "unexpected log header '" + line + "'");
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        storage.push_back(line);
    }
    const std::size_t width = split_commas(header).size();
    std::vector<std::vector<std::string_view>> rows;
    for (std::size_t i = 0; i < storage.size(); ++i) {
        auto fields = split_commas(storage[i]);
        if (fields.size() != width) throw InconsistentWidth(i + 2, width, fields.size());
        rows.push_back(std::move(fields));
    }
    return rows;
}

}  // namespace detail

inline std::vector<StepRecord> read_step_log(std::istream& in) {
    std::vector<std::string> storage;
    const auto rows = detail::read_rows(in, kStepLogHeader, storage);
    std::vector<StepRecord> out;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& f = rows[i];
        const std::size_t line = i + 2;
        out.push_back({detail::log_field<std::size_t>(f[0], line, 1), detail::log_field<std::size_t>(f[1], line, 2),
                       detail::log_field<double>(f[2], line, 3), detail::log_field<double>(f[3], line, 4),
                       detail::log_field<double>(f[4], line, 5)});
    }
    return out;
}

inline std::vector<EpochRecord> read_epoch_log(std::istream& in) {
    std::vector<std::string> storage;
    const auto rows = detail::read_rows(in, kEpochLogHeader, storage);
    std::vector<EpochRecord> out;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& f = rows[i];
        const std::size_t line = i + 2;
        out.push_back({detail::log_field<std::size_t>(f[0], line, 1), detail::log_field<double>(f[1], line, 2),
                       detail::log_field<double>(f[2], line, 3)});
    }
    return out;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidArgument("cannot open '" + path.string() + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

}  // namespace sobnat
