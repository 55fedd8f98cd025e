#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sobnat {

// Root of every error the library raises. kind() is the stable module error
// name printed by the CLI.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    [[nodiscard]] virtual const char* kind() const noexcept { return "Error"; }
};

#define SOBNAT_DEFINE_ERROR(Name)                                             \
    class Name : public Error {                                               \
    public:                                                                   \
        using Error::Error;                                                   \
        [[nodiscard]] const char* kind() const noexcept override { return #Name; } \
    }

SOBNAT_DEFINE_ERROR(DimensionMismatch);
SOBNAT_DEFINE_ERROR(NotPositiveDefinite);
SOBNAT_DEFINE_ERROR(UnsupportedOrder);
SOBNAT_DEFINE_ERROR(InvalidArgument);
SOBNAT_DEFINE_ERROR(DegenerateGram);
SOBNAT_DEFINE_ERROR(SingularProbeSet);
SOBNAT_DEFINE_ERROR(TooLarge);
SOBNAT_DEFINE_ERROR(BudgetExceeded);
SOBNAT_DEFINE_ERROR(UnboundedRegion);
SOBNAT_DEFINE_ERROR(NotLocalMinimum);
SOBNAT_DEFINE_ERROR(ConfigError);

#undef SOBNAT_DEFINE_ERROR

class ParseError : public Error {
public:
    ParseError(std::size_t line, std::size_t column, const std::string& what)
        : Error("line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + what),
          line_(line), column_(column) {}
    [[nodiscard]] const char* kind() const noexcept override { return "ParseError"; }
    [[nodiscard]] std::size_t line() const noexcept { return line_; }
    [[nodiscard]] std::size_t column() const noexcept { return column_; }

private:
    std::size_t line_;
    std::size_t column_;
};

class InconsistentWidth : public Error {
public:
    InconsistentWidth(std::size_t line, std::size_t expected, std::size_t got)
        : Error("line " + std::to_string(line) + ": expected " + std::to_string(expected) +
                " fields, got " + std::to_string(got)),
          line_(line) {}
    [[nodiscard]] const char* kind() const noexcept override { return "InconsistentWidth"; }
    [[nodiscard]] std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class RateViolation : public Error {
public:
    RateViolation(std::size_t step, double gap, double bound)
        : Error("rate bound violated at T=" + std::to_string(step) + ": gap " + std::to_string(gap) +
                " > bound " + std::to_string(bound)),
          step_(step) {}
    [[nodiscard]] const char* kind() const noexcept override { return "RateViolation"; }
    [[nodiscard]] std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

}  // namespace sobnat
