#pragma once

#include <stdexcept>
#include <string>

namespace ndeq {

// Configuration problems (bad boundary spec, malformed files, invalid CLI
// input). CLI maps these to exit code 3.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// State left the range the lattice can represent (T outside (0,1),
// non-positive equilibrium factor, exponent overflow, rho/T <= 0).
class InvalidStateError : public std::runtime_error {
public:
    InvalidStateError(const std::string& what, int x, int y)
        : std::runtime_error(what + " at cell (" + std::to_string(x) + "," +
                             std::to_string(y) + ")"),
          x(x), y(y) {}
    explicit InvalidStateError(const std::string& what)
        : std::runtime_error(what), x(-1), y(-1) {}
    int x, y;
};

// A running simulation produced NaN/Inf or an invalid state. Carries the
// last valid time step. CLI maps these to exit code 2.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& what, long t)
        : std::runtime_error("divergence at t=" + std::to_string(t) + ": " + what),
          t(t) {}
    long t;
};

} // namespace ndeq
