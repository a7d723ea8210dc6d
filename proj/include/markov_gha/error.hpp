#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace markov_gha {

enum class ErrorKind {
    validation,
    not_irreducible,
    size_limit,
    unvisited_state,
    convergence,
    degenerate,
    io,
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::validation: return "validation";
        case ErrorKind::not_irreducible: return "not_irreducible";
        case ErrorKind::size_limit: return "size_limit";
        case ErrorKind::unvisited_state: return "unvisited_state";
        case ErrorKind::convergence: return "convergence";
        case ErrorKind::degenerate: return "degenerate";
        case ErrorKind::io: return "io";
    }
    return "unknown";
}

/// Library error. `kind()` is stable and machine-readable; `what()` is the
/// human-readable message (single line).
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline void require(bool condition, const std::string& message) {
    if (!condition) throw Error(ErrorKind::validation, message);
}

} // namespace markov_gha
