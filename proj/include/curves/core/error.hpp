#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace curves {

enum class ErrorCode {
    MissingColumn,
    CrossedBook,
    NonPositiveInput,
    DuplicateStrike,
    DegenerateX,
    TooFewPoints,
    NoConsensus,
    MissingFuturesRatio,
    DegenerateSystem,
    NonPositiveDiscount,
    NonPositiveTenor,
    EmptyDay,
    DuplicateExpiry,
    InfeasibleSkeleton,
    BoxTooSmall,
    InvalidArgument,
    ParseError,
    ConfigError,
    IoError,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::CrossedBook: return "CrossedBook";
    case ErrorCode::NonPositiveInput: return "NonPositiveInput";
    case ErrorCode::DuplicateStrike: return "DuplicateStrike";
    case ErrorCode::DegenerateX: return "DegenerateX";
    case ErrorCode::TooFewPoints: return "TooFewPoints";
    case ErrorCode::NoConsensus: return "NoConsensus";
    case ErrorCode::MissingFuturesRatio: return "MissingFuturesRatio";
    case ErrorCode::DegenerateSystem: return "DegenerateSystem";
    case ErrorCode::NonPositiveDiscount: return "NonPositiveDiscount";
    case ErrorCode::NonPositiveTenor: return "NonPositiveTenor";
    case ErrorCode::EmptyDay: return "EmptyDay";
    case ErrorCode::DuplicateExpiry: return "DuplicateExpiry";
    case ErrorCode::InfeasibleSkeleton: return "InfeasibleSkeleton";
    case ErrorCode::BoxTooSmall: return "BoxTooSmall";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

/// Exception carrying a machine-readable code. Every fallible operation in
/// the library throws this type.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

inline void require(bool condition, ErrorCode code, const std::string& message) {
    if (!condition) {
        throw Error(code, message);
    }
}

} // namespace curves
