#pragma once

#include <stdexcept>
#include <string>

namespace afsp {

/// Base class for all pipeline errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid or missing configuration / input files. CLI maps this to exit code 2.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed input data. Carries the 1-based line number when known.
class ParseError : public Error {
public:
    ParseError(const std::string& msg, long line = 0) : Error(msg), line_number(line) {}
    long line_number;
};

/// Storage failure on the checkpoint store or output files. Retryable.
class StorageError : public Error {
public:
    using Error::Error;
};

/// A backend call failed after exhausting retries.
class BackendError : public Error {
public:
    BackendError(const std::string& msg, int attempts_made = 1)
        : Error(msg), attempts(attempts_made) {}
    int attempts;
};

/// Model output could not be parsed into the five-class taxonomy, even after
/// one repair attempt. Carries the raw model output for the compliance report.
class TaxonomyViolation : public Error {
public:
    TaxonomyViolation(const std::string& msg, std::string raw)
        : Error(msg), raw_output(std::move(raw)) {}
    std::string raw_output;
};

/// Statistic is undefined on this input (zero variance, empty marginal, ...).
class DegenerateInput : public Error {
public:
    using Error::Error;
};

} // namespace afsp
