#pragma once

#include <stdexcept>
#include <string>

namespace sideband {

// Bad inputs or configuration. The CLI maps these to exit code 2.
struct ValidationError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Numerical failure during an otherwise valid computation. Exit code 3.
struct ComputationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NoPhysicalRoot : ComputationError {
    using ComputationError::ComputationError;
};

struct SingularDenominator : ComputationError {
    using ComputationError::ComputationError;
};

struct CouplingZero : ValidationError {
    using ValidationError::ValidationError;
};

struct JacobianSingular : ComputationError {
    using ComputationError::ComputationError;
};

struct Instability : ComputationError {
    using ComputationError::ComputationError;
};

struct SegmentTooLong : ValidationError {
    using ValidationError::ValidationError;
};

struct NoPeaksFound : ComputationError {
    using ComputationError::ComputationError;
};

struct FitDiverged : ComputationError {
    using ComputationError::ComputationError;
};

struct OrderingViolation : ValidationError {
    using ValidationError::ValidationError;
};

struct InvalidConfig : ValidationError {
    using ValidationError::ValidationError;
};

} // namespace sideband
