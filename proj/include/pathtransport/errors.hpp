#pragma once

#include <stdexcept>
#include <string>

namespace pt {

// Base of every error the engine raises. kind() is the stable machine-readable
// tag written into error records by the scenario runner.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
    virtual const char* kind() const noexcept { return "error"; }
};

// A parameter or point lies outside the domain an object was built on.
class DomainError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "domain"; }
};

// A user callable produced a non-finite value, or an expression hit a
// singularity (division by zero, log of a non-positive number, ...).
class EvaluationError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "evaluation"; }
};

class ShapeError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "shape"; }
};

class InvertibilityError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "invertibility"; }
};

// Adaptive step size underflowed; tau is where the integration stalled.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double tau) : Error(what), tau_(tau) {}
    const char* kind() const noexcept override { return "convergence"; }
    double tau() const noexcept { return tau_; }

private:
    double tau_;
};

class NotALoopError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "not-a-loop"; }
};

// Torsion and holonomicity need the fiber to be the tangent space (m == n).
class TangentBundleError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "tangent-bundle"; }
};

class FlatnessError : public Error {
public:
    FlatnessError(const std::string& what, double max_curvature)
        : Error(what), max_curvature_(max_curvature) {}
    const char* kind() const noexcept override { return "flatness"; }
    double max_curvature() const noexcept { return max_curvature_; }

private:
    double max_curvature_;
};

// Expression text that does not parse. position is 1-based.
class SyntaxError : public Error {
public:
    SyntaxError(const std::string& what, std::size_t position, std::string expected)
        : Error(what), position_(position), expected_(std::move(expected)) {}
    const char* kind() const noexcept override { return "syntax"; }
    std::size_t position() const noexcept { return position_; }
    const std::string& expected() const noexcept { return expected_; }

private:
    std::size_t position_;
    std::string expected_;
};

class ConfigError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "config"; }
};

}  // namespace pt
