#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cpr {

enum class Errc {
  kDuplicateInPack,
  kPickedOutOfRange,
  kUnknownCard,
  kPackTooSmall,
  kPoolTooLarge,
  kEmptyDataset,
  kMalformed,
  kDuplicateName,
  kNonFiniteValue,
  kPickNotInPack,
  kMalformedRecord,
  kEmptyInput,
  kTooFewDrafts,
  kInvalidSpec,
  kShapeMismatch,
  kEmptySet,
  kZeroVector,
  kNonFiniteGradient,
  kNonFiniteLoss,
  kNoPositiveInRow,
  kEmptyValidSet,
  kEmptyPack,
  kCatalogTooSmall,
  kInvalidConfig,
  kIllegalPick,
  kFinished,
  kIo,
  kBadCheckpoint,
};

std::string_view to_string(Errc code);

// Every failure in the library surfaces as a cpr::Error carrying a code from
// the list above; the message adds context (line numbers, names, shapes).
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message);

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace cpr
