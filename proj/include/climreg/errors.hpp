#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace climreg {

enum class Errc {
    // ingestion / input validation
    EmptyInput,
    MalformedRow,
    DuplicateRecord,
    OffGrid,
    RaggedPanel,
    NonFiniteValue,
    UnknownVariable,
    MissingField,
    InvalidSpec,
    KeyMismatch,
    UnassignedCell,
    // computation
    EmptyYearSet,
    YearOutOfRange,
    InvalidHorizon,
    EmptyRegion,
    TooFewPoints,
    DegenerateComponent,
    TooFewSamples,
    NonFiniteInput,
    DimensionMismatch,
    SingularSystem,
    EmptyGrid,
    RegionTooSmall,
    MissingTestRecord,
    EmptyPredictions,
    InvalidArgument,
};

std::string_view errc_name(Errc code) noexcept;

// True for errors caused by malformed or inconsistent input files.
bool is_input_error(Errc code) noexcept;

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& message) {
    throw Error(code, message);
}

}  // namespace climreg
