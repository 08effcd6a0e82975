#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mocap {

enum class ErrorCode {
    MalformedHeader,
    UnsupportedEncoding,
    TruncatedData,
    InvalidFile,
    MissingMarker,
    UnknownActor,
    DegenerateHips,
    UpsampleRequested,
    ShapeMismatch,
    NonScalarLoss,
    EmptySequence,
    NoEnabledLoss,
    NonFiniteGradient,
    AllWeightsZero,
    KTooLarge,
    EmptyInput,
    ConfigInvalid,
    ChecksumMismatch,
    IoFailure,
};

constexpr std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::UnsupportedEncoding: return "UnsupportedEncoding";
    case ErrorCode::TruncatedData: return "TruncatedData";
    case ErrorCode::InvalidFile: return "InvalidFile";
    case ErrorCode::MissingMarker: return "MissingMarker";
    case ErrorCode::UnknownActor: return "UnknownActor";
    case ErrorCode::DegenerateHips: return "DegenerateHips";
    case ErrorCode::UpsampleRequested: return "UpsampleRequested";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonScalarLoss: return "NonScalarLoss";
    case ErrorCode::EmptySequence: return "EmptySequence";
    case ErrorCode::NoEnabledLoss: return "NoEnabledLossWithRltOne";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::AllWeightsZero: return "AllWeightsZero";
    case ErrorCode::KTooLarge: return "KTooLarge";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::IoFailure: return "IoFailure";
    }
    return "Unknown";
}

// Every failure raised by the library carries a machine-checkable code.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace mocap
