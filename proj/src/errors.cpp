#include "climreg/errors.hpp"

namespace climreg {

std::string_view errc_name(Errc code) noexcept {
    switch (code) {
        case Errc::EmptyInput: return "EmptyInput";
        case Errc::MalformedRow: return "MalformedRow";
        case Errc::DuplicateRecord: return "DuplicateRecord";
        case Errc::OffGrid: return "OffGrid";
        case Errc::RaggedPanel: return "RaggedPanel";
        case Errc::NonFiniteValue: return "NonFiniteValue";
        case Errc::UnknownVariable: return "UnknownVariable";
        case Errc::MissingField: return "MissingField";
        case Errc::InvalidSpec: return "InvalidSpec";
        case Errc::KeyMismatch: return "KeyMismatch";
        case Errc::UnassignedCell: return "UnassignedCell";
        case Errc::EmptyYearSet: return "EmptyYearSet";
        case Errc::YearOutOfRange: return "YearOutOfRange";
        case Errc::InvalidHorizon: return "InvalidHorizon";
        case Errc::EmptyRegion: return "EmptyRegion";
        case Errc::TooFewPoints: return "TooFewPoints";
        case Errc::DegenerateComponent: return "DegenerateComponent";
        case Errc::TooFewSamples: return "TooFewSamples";
        case Errc::NonFiniteInput: return "NonFiniteInput";
        case Errc::DimensionMismatch: return "DimensionMismatch";
        case Errc::SingularSystem: return "SingularSystem";
        case Errc::EmptyGrid: return "EmptyGrid";
        case Errc::RegionTooSmall: return "RegionTooSmall";
        case Errc::MissingTestRecord: return "MissingTestRecord";
        case Errc::EmptyPredictions: return "EmptyPredictions";
        case Errc::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

bool is_input_error(Errc code) noexcept {
    switch (code) {
        case Errc::EmptyInput:
        case Errc::MalformedRow:
        case Errc::DuplicateRecord:
        case Errc::OffGrid:
        case Errc::RaggedPanel:
        case Errc::NonFiniteValue:
        case Errc::UnknownVariable:
        case Errc::MissingField:
        case Errc::InvalidSpec:
        case Errc::KeyMismatch:
        case Errc::UnassignedCell:
            return true;
        default:
            return false;
    }
}

}  // namespace climreg
