#pragma once

#include <stdexcept>
#include <string>

namespace readmit {

enum class ErrorCode {
    // knowledge base
    EmptyKB,
    InvalidCutoffs,
    NonPositiveParam,
    DuplicateConcept,
    UnknownConcept,
    // ingestion / file formats
    SchemaError,
    IoError,
    // abstraction
    DegenerateSpan,
    OutOfSpan,
    // encoding
    AgeBelowAdult,
    // cohort
    TooFewPatients,
    // evaluation
    SingleClass,
    NoPositives,
    EmptyChunks,
    // training
    SingleClassValidation,
    DimensionMismatch,
    // generic
    BadArgument,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
          code_(code) {}

    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

}  // namespace readmit
