#pragma once

#include <stdexcept>
#include <string>

namespace chromo {

// Error taxonomy shared by all modules. Every user-facing failure maps to
// one of these; the CLI translates them to exit codes.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error("config error: " + msg) {}
};

struct DataError : Error {
    explicit DataError(const std::string& msg) : Error("data error: " + msg) {}
};

struct NumericError : Error {
    explicit NumericError(const std::string& msg) : Error("numeric error: " + msg) {}
};

// A bend whose Jacobian is non-positive somewhere on the chromosome mask
// (the mapping would self-overlap).
struct DegenerateBendError : Error {
    explicit DegenerateBendError(const std::string& msg)
        : Error("degenerate bend: " + msg) {}
};

struct SelectionError : Error {
    explicit SelectionError(const std::string& msg) : Error("selection error: " + msg) {}
};

struct MetricError : Error {
    explicit MetricError(const std::string& msg) : Error("metric error: " + msg) {}
};

struct EvalError : Error {
    explicit EvalError(const std::string& msg) : Error("evaluation error: " + msg) {}
};

}  // namespace chromo
