#pragma once

#include <stdexcept>
#include <string>

namespace conc {

/// Base class for all failures raised by this library. Every error carries a
/// short machine-readable tag (the class name) plus a human-readable message.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Root search could not bracket a sign change.
struct NoBracket : Error {
    using Error::Error;
};

/// A sign change was required (e.g. shooting dichotomy) but never observed.
struct NoSignChange : Error {
    using Error::Error;
};

/// An iteration finished without meeting its tolerance.
struct ToleranceNotMet : Error {
    using Error::Error;
};

/// Two fields or vectors were combined on incompatible grids.
struct GridMismatch : Error {
    using Error::Error;
};

/// A solvability (orthogonality) condition failed beyond tolerance.
struct FredholmViolation : Error {
    using Error::Error;
};

/// Computed spectrum violates a required ordering or sign structure.
struct SpectrumOrderViolation : Error {
    using Error::Error;
};

/// A quadratic form that must be positive definite came out otherwise.
struct NonPositiveCoercivity : Error {
    using Error::Error;
};

/// A point left the validity region of a tubular coordinate chart.
struct OutsideChart : Error {
    using Error::Error;
};

/// Cutoff or tube radii exceed the chart radius of the base manifold.
struct ChartRadiusExceeded : Error {
    using Error::Error;
};

/// Requested base manifold / ambient combination is not implemented.
struct UnsupportedManifold : Error {
    using Error::Error;
};

/// A quantity escaped its a-priori bound.
struct BoundViolation : Error {
    using Error::Error;
};

/// Operator to invert is singular or nearly singular without a known kernel.
struct DegenerateOperator : Error {
    using Error::Error;
};

/// A projection that should vanish after a correction step did not.
struct ProjectionDefect : Error {
    using Error::Error;
};

/// An iterative solver diverged or exceeded its iteration budget.
struct SolverDivergence : Error {
    using Error::Error;
};

/// Fixed point map failed its contraction estimate.
struct NotContracting : Error {
    using Error::Error;
};

/// The small parameter sits too close to a spectral resonance.
struct ResonantEpsilon : Error {
    using Error::Error;
};

/// Malformed scenario file or CLI input.
struct ParseError : Error {
    using Error::Error;
};

} // namespace conc
