#include "ncl/error.hpp"

namespace ncl {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::NonStochastic: return "NonStochastic";
    case Errc::ZeroMarginal: return "ZeroMarginal";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::InvalidPermutation: return "InvalidPermutation";
    case Errc::InvalidPreset: return "InvalidPreset";
    case Errc::LabelMapMismatch: return "LabelMapMismatch";
    case Errc::RequiresAtLeastTwoClasses: return "RequiresAtLeastTwoClasses";
    case Errc::EmptyBatch: return "EmptyBatch";
    case Errc::ZeroNormFeature: return "ZeroNormFeature";
    case Errc::EmptyNegatives: return "EmptyNegatives";
    case Errc::NegativeEntry: return "NegativeEntry";
    case Errc::LabelOutOfRange: return "LabelOutOfRange";
    case Errc::NonFiniteInput: return "NonFiniteInput";
    case Errc::IndexOutOfRange: return "IndexOutOfRange";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::StaleForwardState: return "StaleForwardState";
    case Errc::DivergenceDetected: return "DivergenceDetected";
    case Errc::ConfigInvalid: return "ConfigInvalid";
    case Errc::NonSymmetricInput: return "NonSymmetricInput";
    case Errc::AllDimensionsDead: return "AllDimensionsDead";
    case Errc::AllRowsZero: return "AllRowsZero";
    case Errc::InsufficientDraws: return "InsufficientDraws";
    case Errc::ZeroColumn: return "ZeroColumn";
    case Errc::DegenerateLabels: return "DegenerateLabels";
    case Errc::UnknownMetric: return "UnknownMetric";
    case Errc::ParseError: return "ParseError";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace ncl
