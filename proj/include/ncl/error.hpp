#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ncl {

enum class Errc {
  NonStochastic,
  ZeroMarginal,
  DimensionMismatch,
  InvalidPermutation,
  InvalidPreset,
  LabelMapMismatch,
  RequiresAtLeastTwoClasses,
  EmptyBatch,
  ZeroNormFeature,
  EmptyNegatives,
  NegativeEntry,
  LabelOutOfRange,
  NonFiniteInput,
  IndexOutOfRange,
  ShapeMismatch,
  StaleForwardState,
  DivergenceDetected,
  ConfigInvalid,
  NonSymmetricInput,
  AllDimensionsDead,
  AllRowsZero,
  InsufficientDraws,
  ZeroColumn,
  DegenerateLabels,
  UnknownMetric,
  ParseError,
  IoError,
};

std::string_view errc_name(Errc code) noexcept;

// Every failure raised by the library carries one of the codes above so that
// callers (and tests) can dispatch on the kind rather than on message text.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool ok, Errc code, const std::string& what) {
  if (!ok) fail(code, what);
}

}  // namespace ncl
