#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace glma {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Error taxonomy shared by the C++ core, the C API status codes and the CLI
// exit paths. `kind` is stable; `what()` carries the human-readable detail.
enum class ErrorKind {
    parse,       // malformed config / manifest / input text
    validation,  // structurally valid input with an illegal value
    input,       // bad runtime argument (shape, range, missing file content)
    numeric,     // non-finite value where a finite one is required
    io,          // filesystem or OS-level failure
    format,      // binary container violation (magic, version, truncation)
    config_hash, // checkpoint was produced under a different config
    freeze,      // frozen-weight checksum mismatch
    sequence,    // operation called out of order (e.g. no completed round)
    internal,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg)
        : std::runtime_error(msg), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) {
    throw Error(kind, msg);
}

inline const char* error_kind_name(ErrorKind k) {
    switch (k) {
    case ErrorKind::parse: return "parse";
    case ErrorKind::validation: return "validation";
    case ErrorKind::input: return "input";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::io: return "io";
    case ErrorKind::format: return "format";
    case ErrorKind::config_hash: return "config_hash";
    case ErrorKind::freeze: return "freeze";
    case ErrorKind::sequence: return "sequence";
    case ErrorKind::internal: return "internal";
    }
    return "unknown";
}

// FNV-1a, used for rng stream labels, config hashes and weight checksums.
inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline uint64_t fnv1a64(const std::string& s, uint64_t h = 0xcbf29ce484222325ull) {
    return fnv1a64(s.data(), s.size(), h);
}

inline uint64_t matrix_checksum(const Matrix& m, uint64_t h = 0xcbf29ce484222325ull) {
    return fnv1a64(m.data(), sizeof(double) * static_cast<size_t>(m.size()), h);
}

inline void require_finite(const Matrix& m, const std::string& what) {
    if (!m.allFinite()) fail(ErrorKind::numeric, what + ": non-finite values");
}

inline void require_finite(double v, const std::string& what) {
    if (!std::isfinite(v)) fail(ErrorKind::numeric, what + ": non-finite value");
}

} // namespace glma
