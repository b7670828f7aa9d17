#pragma once

#include <stdexcept>
#include <string>

namespace vvc {

/// Broad failure class, used by the CLI to pick an exit code.
enum class ErrorClass {
    Input,       // malformed or invalid inputs
    Numerical,   // solver failed to converge or lost accuracy
    Infeasible,  // design problem has no admissible point
};

class Error : public std::runtime_error {
public:
    Error(ErrorClass cls, const std::string& what) : std::runtime_error(what), cls_(cls) {}
    [[nodiscard]] ErrorClass error_class() const noexcept { return cls_; }

private:
    ErrorClass cls_;
};

#define VVC_DEFINE_ERROR(Name, Class)                                                   \
    class Name : public Error {                                                         \
    public:                                                                             \
        explicit Name(const std::string& what) : Error(ErrorClass::Class, #Name ": " + what) {} \
    }

VVC_DEFINE_ERROR(ParseError, Input);
VVC_DEFINE_ERROR(SchemaError, Input);
VVC_DEFINE_ERROR(TopologyError, Input);
VVC_DEFINE_ERROR(UnitError, Input);
VVC_DEFINE_ERROR(AlignmentError, Input);
VVC_DEFINE_ERROR(ConfigError, Input);
VVC_DEFINE_ERROR(DomainError, Input);
VVC_DEFINE_ERROR(NotPositiveDefinite, Input);

VVC_DEFINE_ERROR(SingularityError, Numerical);
VVC_DEFINE_ERROR(NoConvergence, Numerical);
VVC_DEFINE_ERROR(NumericalError, Numerical);
VVC_DEFINE_ERROR(SingularSystem, Numerical);
VVC_DEFINE_ERROR(MaxNewtonIterations, Numerical);
VVC_DEFINE_ERROR(TooManyDropped, Numerical);
VVC_DEFINE_ERROR(PowerFlowFailure, Numerical);

VVC_DEFINE_ERROR(SubproblemInfeasible, Infeasible);
VVC_DEFINE_ERROR(NoFeasibleStart, Infeasible);

#undef VVC_DEFINE_ERROR

}  // namespace vvc
