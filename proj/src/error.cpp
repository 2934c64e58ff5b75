#include "gridloop/error.hpp"

namespace gridloop {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::MalformedTable: return "MalformedTable";
        case ErrorCode::UnknownBusReference: return "UnknownBusReference";
        case ErrorCode::MultipleSlack: return "MultipleSlack";
        case ErrorCode::DisconnectedGraph: return "DisconnectedGraph";
        case ErrorCode::InvalidField: return "InvalidField";
        case ErrorCode::UnassignedBus: return "UnassignedBus";
        case ErrorCode::DisconnectedArea: return "DisconnectedArea";
        case ErrorCode::NonConvergence: return "NonConvergence";
        case ErrorCode::SingularJacobian: return "SingularJacobian";
        case ErrorCode::Infeasible: return "Infeasible";
        case ErrorCode::IterationLimit: return "IterationLimit";
        case ErrorCode::NoInformativePairs: return "NoInformativePairs";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
        case ErrorCode::Io: return "Io";
        case ErrorCode::Usage: return "UsageError";
    }
    return "Unknown";
}

}  // namespace gridloop
