#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace nbf {

// All library errors carry a short machine-parsable category ("parse",
// "argument", ...) so the CLI can emit one-line error reports.
class Error : public std::runtime_error {
public:
    Error(std::string category, const std::string& message)
        : std::runtime_error(category + ": " + message), category_(std::move(category)) {}

    const std::string& category() const noexcept { return category_; }

private:
    std::string category_;
};

struct ParseError : Error {
    explicit ParseError(const std::string& m) : Error("parse", m) {}
};

struct ArgumentError : Error {
    explicit ArgumentError(const std::string& m) : Error("argument", m) {}
};

struct ShapeError : Error {
    explicit ShapeError(const std::string& m) : Error("shape", m) {}
};

struct LookupError : Error {
    explicit LookupError(const std::string& m) : Error("lookup", m) {}
};

struct BuildError : Error {
    explicit BuildError(const std::string& m) : Error("build", m) {}
};

struct SamplingError : Error {
    explicit SamplingError(const std::string& m) : Error("sampling", m) {}
};

struct NumericError : Error {
    explicit NumericError(const std::string& m) : Error("numeric", m) {}
};

struct FormatError : Error {
    explicit FormatError(const std::string& m) : Error("format", m) {}
};

struct CorruptionError : Error {
    explicit CorruptionError(const std::string& m) : Error("corruption", m) {}
};

struct RefusalError : Error {
    explicit RefusalError(const std::string& m) : Error("refusal", m) {}
};

struct IoError : Error {
    explicit IoError(const std::string& m) : Error("io", m) {}
};

struct InternalError : Error {
    explicit InternalError(const std::string& m) : Error("internal", m) {}
};

inline void require(bool cond, const std::string& message) {
    if (!cond) throw ArgumentError(message);
}

}  // namespace nbf
