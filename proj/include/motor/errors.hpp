// Copyright (C) 2026 MOTOR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace motor {

enum class ErrorKind {
    kDimensionMismatch,
    kEmptyQuestion,
    kEmptyDescription,
    kEmptyReport,
    kMalformedBox,
    kNonFiniteInput,
    kInvalidConfig,
    kParseError,
    kMissingEmbedding,
    kDuplicateId,
    kIoError,
    kInvalidMarginals,
    kNumericalUnderflow,
    kOracleScopeExceeded,
    kUnknownRecordId,
    kUnknownPlaceholder,
    kServiceUnavailable,
    kServiceError,
    kMisalignedSamples,
    kNotAPermutation,
    kMissingQuery,
    kInvalidSpec,
};

constexpr std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::kDimensionMismatch: return "DimensionMismatch";
        case ErrorKind::kEmptyQuestion: return "EmptyQuestion";
        case ErrorKind::kEmptyDescription: return "EmptyDescription";
        case ErrorKind::kEmptyReport: return "EmptyReport";
        case ErrorKind::kMalformedBox: return "MalformedBox";
        case ErrorKind::kNonFiniteInput: return "NonFiniteInput";
        case ErrorKind::kInvalidConfig: return "InvalidConfig";
        case ErrorKind::kParseError: return "ParseError";
        case ErrorKind::kMissingEmbedding: return "MissingEmbedding";
        case ErrorKind::kDuplicateId: return "DuplicateId";
        case ErrorKind::kIoError: return "IoError";
        case ErrorKind::kInvalidMarginals: return "InvalidMarginals";
        case ErrorKind::kNumericalUnderflow: return "NumericalUnderflow";
        case ErrorKind::kOracleScopeExceeded: return "OracleScopeExceeded";
        case ErrorKind::kUnknownRecordId: return "UnknownRecordId";
        case ErrorKind::kUnknownPlaceholder: return "UnknownPlaceholder";
        case ErrorKind::kServiceUnavailable: return "ServiceUnavailable";
        case ErrorKind::kServiceError: return "ServiceError";
        case ErrorKind::kMisalignedSamples: return "MisalignedSamples";
        case ErrorKind::kNotAPermutation: return "NotAPermutation";
        case ErrorKind::kMissingQuery: return "MissingQuery";
        case ErrorKind::kInvalidSpec: return "InvalidSpec";
    }
    return "Unknown";
}

/// Numerical failures map to a distinct CLI exit code.
constexpr bool is_numerical(ErrorKind kind) {
    return kind == ErrorKind::kNumericalUnderflow || kind == ErrorKind::kNonFiniteInput ||
           kind == ErrorKind::kInvalidMarginals;
}

constexpr bool is_service(ErrorKind kind) {
    return kind == ErrorKind::kServiceUnavailable || kind == ErrorKind::kServiceError;
}

/// Every failure raised by the library carries one ErrorKind. The message is
/// prefixed with the kind name, e.g. "DuplicateId: r1".
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& detail)
        : std::runtime_error(std::string(to_string(kind)) + ": " + detail), kind_(kind), detail_(detail) {}

    ErrorKind kind() const noexcept { return kind_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    ErrorKind kind_;
    std::string detail_;
};

}  // namespace motor
