#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cpr/error.hpp"
#include "cpr/tensor.hpp"

namespace cpr {

// Index of a card in the catalog.
enum class CardId : std::uint32_t {};

constexpr std::size_t index_of(CardId c) noexcept { return static_cast<std::size_t>(c); }
constexpr CardId card_at(std::size_t i) noexcept { return static_cast<CardId>(i); }

inline constexpr std::size_t kPackSize = 15;       // cards in a freshly opened pack
inline constexpr std::size_t kRounds = 3;          // packs opened per player
inline constexpr std::size_t kPoolRows = 45;       // final pool size / pool matrix height
inline constexpr std::size_t kMaxPoolAtPick = 44;  // largest pool a real decision can see
inline constexpr std::size_t kMinPackForDecision = 2;
inline constexpr std::size_t kDecisionsPerDraft = 42;

// Card-id <-> feature-row table. Immutable after construction.
class CardCatalog {
 public:
  CardCatalog() = default;
  // Throws kInvalidSpec on M < 2 or F < 1, kNonFiniteValue, kDuplicateName.
  CardCatalog(Tensor features, std::vector<std::string> names);

  std::size_t size() const noexcept { return names_.size(); }
  std::size_t feature_dim() const noexcept { return features_.cols(); }
  const Tensor& features() const noexcept { return features_; }
  std::span<const double> row(CardId c) const { return features_.row(index_of(c)); }
  const std::string& name(CardId c) const { return names_[index_of(c)]; }
  const std::vector<std::string>& names() const noexcept { return names_; }
  bool contains(CardId c) const noexcept { return index_of(c) < size(); }

  std::optional<CardId> find(const std::string& name) const;
  // Throws kUnknownCard.
  CardId id_of(const std::string& name) const;

  bool operator==(const CardCatalog& other) const {
    return features_ == other.features_ && names_ == other.names_;
  }

 private:
  Tensor features_;
  std::vector<std::string> names_;
  std::unordered_map<std::string, CardId> by_name_;
};

// One human pick: the pool held so far (context), the pack on offer and
// which pack entry was taken. draft_id/pick_number locate it in its draft.
struct Decision {
  std::vector<CardId> pool;
  std::vector<CardId> pack;
  std::size_t picked = 0;
  std::uint64_t draft_id = 0;
  std::uint32_t pick_number = 1;

  CardId picked_card() const { return pack.at(picked); }
  bool operator==(const Decision&) const = default;
};

enum class Partition : std::uint8_t { kTrain, kTest };

struct Dataset {
  CardCatalog catalog;
  std::vector<Decision> decisions;
  std::vector<Partition> split;  // one entry per decision

  std::vector<Decision> partition(Partition which) const;
  bool operator==(const Dataset&) const = default;
};

// nullopt when the decision is well formed against the catalog; otherwise the
// first violated rule in the order: PackTooSmall, UnknownCard,
// DuplicateInPack, PickedOutOfRange, PoolTooLarge.
std::optional<Errc> validate_decision(const Decision& d, const CardCatalog& catalog);
// Throws cpr::Error with the code validate_decision reports.
void require_valid(const Decision& d, const CardCatalog& catalog);

// 45 x F matrix: row k holds pool[k]'s features, rows past the pool are zero.
Tensor pool_matrix(std::span<const CardId> pool, const CardCatalog& catalog);

// Expected top-1 accuracy of uniform guessing: mean of 1/|pack|.
double chance_baseline(std::span<const Decision> decisions);
double chance_baseline(const Dataset& dataset);

}  // namespace cpr
