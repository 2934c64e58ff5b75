#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gridloop {

enum class ErrorCode {
    MalformedTable,
    UnknownBusReference,
    MultipleSlack,
    DisconnectedGraph,
    InvalidField,
    UnassignedBus,
    DisconnectedArea,
    NonConvergence,
    SingularJacobian,
    Infeasible,
    IterationLimit,
    NoInformativePairs,
    InvalidConfig,
    Io,
    Usage,
};

std::string_view to_string(ErrorCode code);

/// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

    /// NonConvergence and SingularJacobian are numerical failures; the rest are input errors.
    bool is_numerical() const noexcept {
        return code_ == ErrorCode::NonConvergence || code_ == ErrorCode::SingularJacobian ||
               code_ == ErrorCode::IterationLimit || code_ == ErrorCode::Infeasible ||
               code_ == ErrorCode::NoInformativePairs;
    }

private:
    ErrorCode code_;
};

}  // namespace gridloop
