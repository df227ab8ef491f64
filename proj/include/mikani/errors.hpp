#pragma once

#include <stdexcept>
#include <string>

namespace mikani {

/// Root of every error the library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file; carries the 1-based line number (0 when not line-oriented).
class IngestError : public Error {
public:
    IngestError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Semantically invalid value (span out of bounds, wrong dimension, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Prompt rendering failure, e.g. a missing template slot.
class TemplateError : public Error {
public:
    using Error::Error;
};

/// Replay mode was asked for a transcript or cached page that is not on disk.
class FixtureMissing : public Error {
public:
    explicit FixtureMissing(std::string key)
        : Error("fixture missing: " + key), key_(std::move(key)) {}
    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

/// Network failure. `retryable()` is false for HTTP 4xx responses.
class TransportError : public Error {
public:
    TransportError(const std::string& what, int status, bool retryable)
        : Error(what), status_(status), retryable_(retryable) {}
    int status() const noexcept { return status_; }
    bool retryable() const noexcept { return retryable_; }

private:
    int status_;
    bool retryable_;
};

/// LLM output that cannot be turned into JSON even after bounded repairs.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::string raw)
        : Error(what), raw_(std::move(raw)) {}
    const std::string& raw() const noexcept { return raw_; }

private:
    std::string raw_;
};

/// A pipeline stage failed; `stage()` names it for operator output.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& what)
        : Error(stage + ": " + what), stage_(std::move(stage)) {}
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double residual)
        : Error(what), residual_(residual) {}
    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

}  // namespace mikani
