#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace galmem {

enum class ErrorCode {
    UnverifiedGenerator,
    DegreeTooLarge,
    OrbitTooLong,
    LengthMismatch,
    ConfigInvalid,
    ScheduleViolation,
    NotFound,
    DimensionMismatch,
    EmptyBundle,
    DegenerateFit,
    AbductionFailed,
    RoleAbsent,
    DegenerateFactual,
    ParseError,
    SnapshotCorrupt,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::UnverifiedGenerator: return "UnverifiedGenerator";
    case ErrorCode::DegreeTooLarge: return "DegreeTooLarge";
    case ErrorCode::OrbitTooLong: return "OrbitTooLong";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::ScheduleViolation: return "ScheduleViolation";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptyBundle: return "EmptyBundle";
    case ErrorCode::DegenerateFit: return "DegenerateFit";
    case ErrorCode::AbductionFailed: return "AbductionFailed";
    case ErrorCode::RoleAbsent: return "RoleAbsent";
    case ErrorCode::DegenerateFactual: return "DegenerateFactual";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::SnapshotCorrupt: return "SnapshotCorrupt";
    }
    return "Unknown";
}

/// Every library failure carries one of the codes above.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace galmem
