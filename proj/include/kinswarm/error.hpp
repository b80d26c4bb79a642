// Error reporting shared by every kinswarm module.

#ifndef KINSWARM_ERROR_HPP
#define KINSWARM_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace kinswarm {

enum class ErrorKind {
    SingularEvaluation,
    DimensionMismatch,
    NotRegularizable,
    SingularEntry,
    InvalidKernel,
    InvalidState,
    SchemeMismatch,
    MissingVelocities,
    SizeCap,
    SpeciesCountMismatch,
    InvalidMeasure,
    GridTooSmall,
    GridMismatch,
    FieldEvaluationFailure,
    NoConvergence,
    DegenerateInitialDistance,
    QuadratureDivergence,
    CFLViolation,
    InsufficientValues,
    ConfigInvalid,
    IoFailure,
};

std::string_view to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error
{
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind)
    {
    }

    ErrorKind kind() const noexcept { return kind_; }

    // Numerical failures map to CLI exit status 3, configuration errors to 2.
    bool is_numerical() const noexcept
    {
        return kind_ != ErrorKind::ConfigInvalid && kind_ != ErrorKind::IoFailure;
    }

private:
    ErrorKind kind_;
};

/// Raised by the Picard solver; keeps the distance history for diagnosis.
class NoConvergenceError : public Error
{
public:
    NoConvergenceError(const std::string& what, std::vector<double> distances)
        : Error(ErrorKind::NoConvergence, what), distances_(std::move(distances))
    {
    }

    const std::vector<double>& distances() const noexcept { return distances_; }

private:
    std::vector<double> distances_;
};

} // namespace kinswarm

#endif
