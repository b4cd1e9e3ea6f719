#pragma once

#include <stdexcept>
#include <string>

namespace fsdr {

/// Broad failure class, used by the CLI to pick an exit code.
enum class ErrorKind {
    usage,     ///< bad configuration or arguments
    data,      ///< malformed or incompatible input data
    numeric,   ///< a numerical precondition or computation failed
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct GridMismatchError : Error {
    explicit GridMismatchError(const std::string& what) : Error(ErrorKind::data, "grid mismatch: " + what) {}
};

struct PreconditionError : Error {
    explicit PreconditionError(const std::string& what) : Error(ErrorKind::numeric, what) {}
};

struct DegenerateBasisError : Error {
    explicit DegenerateBasisError(const std::string& what) : Error(ErrorKind::numeric, "degenerate basis: " + what) {}
};

/// Smoothing window contains too few observations; the bandwidth must grow.
struct BandwidthError : Error {
    explicit BandwidthError(const std::string& what) : Error(ErrorKind::numeric, "widen bandwidth: " + what) {}
};

struct DataError : Error {
    explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

struct NumericError : Error {
    explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, what) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error(ErrorKind::usage, what) {}
};

}  // namespace fsdr
