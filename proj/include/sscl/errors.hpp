#pragma once

#include <stdexcept>
#include <string>

namespace sscl {

// Every error carries a stable machine-readable category token; the CLI
// prints "<category>: <message>" on stderr and exits non-zero.
class Error : public std::runtime_error {
public:
    Error(std::string category, const std::string& message)
        : std::runtime_error(category + ": " + message), category_(std::move(category)) {}

    const std::string& category() const noexcept { return category_; }

private:
    std::string category_;
};

struct IoError : Error {
    explicit IoError(const std::string& msg) : Error("io-error", msg) {}
};

struct FormatError : Error {
    explicit FormatError(const std::string& msg) : Error("format-error", msg) {}
};

struct ParameterError : Error {
    explicit ParameterError(const std::string& msg) : Error("parameter-error", msg) {}
};

struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error("shape-error", msg) {}
};

struct DegenerateInputError : Error {
    explicit DegenerateInputError(const std::string& msg) : Error("degenerate-input", msg) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error("config-error", msg) {}
};

struct AlignmentError : Error {
    explicit AlignmentError(const std::string& msg) : Error("alignment-error", msg) {}
};

struct NumericalError : Error {
    explicit NumericalError(const std::string& msg) : Error("numerical-error", msg) {}
};

struct ContractError : Error {
    explicit ContractError(const std::string& msg) : Error("contract-error", msg) {}
};

struct EmptyDatasetError : Error {
    explicit EmptyDatasetError(const std::string& msg) : Error("empty-dataset", msg) {}
};

} // namespace sscl
