#pragma once
// Error types shared across the library.

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cbs {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Structural problems found while building or loading objects.
struct ValidationError : Error {
    explicit ValidationError(const std::string& msg, std::string loc = {})
        : Error(loc.empty() ? msg : loc + ": " + msg), location(std::move(loc)) {}
    std::string location;
};

struct ParseError : Error {
    using Error::Error;
};

struct VersionMismatch : Error {
    using Error::Error;
};

// A dependency cycle among endogenous variables. `witness` lists variable
// names forming the cycle.
struct CycleError : Error {
    CycleError(const std::string& msg, std::vector<std::string> w)
        : Error(msg), witness(std::move(w)) {}
    std::vector<std::string> witness;
};

struct EnumerationTooLarge : Error {
    using Error::Error;
};

// The realized observation has zero likelihood under every model in the
// belief's domain; the conditional system has no level left to fall back on.
struct TotalSurprise : Error {
    using Error::Error;
};

struct NotDeterministic : Error {
    using Error::Error;
};

struct Uncertified : Error {
    using Error::Error;
};

struct UnknownRule : Error {
    using Error::Error;
};

struct EmptyEvent : Error {
    using Error::Error;
};

}  // namespace cbs
