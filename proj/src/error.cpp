#include "mmsb/error.hpp"

namespace mmsb {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::InvalidArgument: return "InvalidArgument";
        case ErrorKind::SampleOutOfRange: return "SampleOutOfRange";
        case ErrorKind::NonPositiveDuration: return "NonPositiveDuration";
        case ErrorKind::GridTooLarge: return "GridTooLarge";
        case ErrorKind::TauOutOfRange: return "TauOutOfRange";
        case ErrorKind::SupportMismatch: return "SupportMismatch";
        case ErrorKind::StarvedConstraint: return "StarvedConstraint";
        case ErrorKind::TimeOutOfRange: return "TimeOutOfRange";
        case ErrorKind::DegenerateKnots: return "DegenerateKnots";
        case ErrorKind::InstanceTooLarge: return "InstanceTooLarge";
        case ErrorKind::OracleNotConverged: return "OracleNotConverged";
        case ErrorKind::ParseError: return "ParseError";
        case ErrorKind::ValidationError: return "ValidationError";
        case ErrorKind::Io: return "Io";
    }
    return "Unknown";
}

}  // namespace mmsb
