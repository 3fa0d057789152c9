#include "cpr/error.hpp"

namespace cpr {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::kDuplicateInPack: return "DuplicateInPack";
    case Errc::kPickedOutOfRange: return "PickedOutOfRange";
    case Errc::kUnknownCard: return "UnknownCard";
    case Errc::kPackTooSmall: return "PackTooSmall";
    case Errc::kPoolTooLarge: return "PoolTooLarge";
    case Errc::kEmptyDataset: return "EmptyDataset";
    case Errc::kMalformed: return "Malformed";
    case Errc::kDuplicateName: return "DuplicateName";
    case Errc::kNonFiniteValue: return "NonFiniteValue";
    case Errc::kPickNotInPack: return "PickNotInPack";
    case Errc::kMalformedRecord: return "MalformedRecord";
    case Errc::kEmptyInput: return "EmptyInput";
    case Errc::kTooFewDrafts: return "TooFewDrafts";
    case Errc::kInvalidSpec: return "InvalidSpec";
    case Errc::kShapeMismatch: return "ShapeMismatch";
    case Errc::kEmptySet: return "EmptySet";
    case Errc::kZeroVector: return "ZeroVector";
    case Errc::kNonFiniteGradient: return "NonFiniteGradient";
    case Errc::kNonFiniteLoss: return "NonFiniteLoss";
    case Errc::kNoPositiveInRow: return "NoPositiveInRow";
    case Errc::kEmptyValidSet: return "EmptyValidSet";
    case Errc::kEmptyPack: return "EmptyPack";
    case Errc::kCatalogTooSmall: return "CatalogTooSmall";
    case Errc::kInvalidConfig: return "InvalidConfig";
    case Errc::kIllegalPick: return "IllegalPick";
    case Errc::kFinished: return "Finished";
    case Errc::kIo: return "Io";
    case Errc::kBadCheckpoint: return "BadCheckpoint";
  }
  return "Unknown";
}

Error::Error(Errc code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace cpr
