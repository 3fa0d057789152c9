#include "cpr/domain.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "cpr/error.hpp"

namespace cpr {

CardCatalog::CardCatalog(Tensor features, std::vector<std::string> names)
    : features_(std::move(features)), names_(std::move(names)) {
  if (features_.rank() != 2 || features_.rows() != names_.size()) {
    throw Error(Errc::kInvalidSpec, "catalog needs one feature row per name");
  }
  if (names_.size() < 2) throw Error(Errc::kInvalidSpec, "catalog needs at least 2 cards");
  if (features_.cols() < 1) throw Error(Errc::kInvalidSpec, "catalog needs at least 1 feature");
  if (!features_.all_finite()) throw Error(Errc::kNonFiniteValue, "catalog feature values");
  by_name_.reserve(names_.size());
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (!by_name_.emplace(names_[i], card_at(i)).second) {
      throw Error(Errc::kDuplicateName, names_[i]);
    }
  }
}

std::optional<CardId> CardCatalog::find(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) return std::nullopt;
  return it->second;
}

CardId CardCatalog::id_of(const std::string& name) const {
  if (auto id = find(name)) return *id;
  throw Error(Errc::kUnknownCard, name);
}

std::vector<Decision> Dataset::partition(Partition which) const {
  std::vector<Decision> out;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    if (split.at(i) == which) out.push_back(decisions[i]);
  }
  return out;
}

std::optional<Errc> validate_decision(const Decision& d, const CardCatalog& catalog) {
  if (d.pack.size() < kMinPackForDecision) return Errc::kPackTooSmall;
  if (d.pack.size() > kPackSize) return Errc::kInvalidSpec;
  auto known = [&](CardId c) { return catalog.contains(c); };
  if (!std::all_of(d.pack.begin(), d.pack.end(), known) ||
      !std::all_of(d.pool.begin(), d.pool.end(), known)) {
    return Errc::kUnknownCard;
  }
  std::unordered_set<CardId> seen(d.pack.begin(), d.pack.end());
  if (seen.size() != d.pack.size()) return Errc::kDuplicateInPack;
  if (d.picked >= d.pack.size()) return Errc::kPickedOutOfRange;
  if (d.pool.size() > kMaxPoolAtPick) return Errc::kPoolTooLarge;
  return std::nullopt;
}

void require_valid(const Decision& d, const CardCatalog& catalog) {
  if (auto err = validate_decision(d, catalog)) {
    throw Error(*err, "decision in draft " + std::to_string(d.draft_id) + " pick " +
                          std::to_string(d.pick_number));
  }
}

Tensor pool_matrix(std::span<const CardId> pool, const CardCatalog& catalog) {
  if (pool.size() > kPoolRows) {
    throw Error(Errc::kPoolTooLarge, std::to_string(pool.size()) + " cards");
  }
  const std::size_t f = catalog.feature_dim();
  Tensor m = Tensor::matrix(kPoolRows, f);
  for (std::size_t k = 0; k < pool.size(); ++k) {
    if (!catalog.contains(pool[k])) throw Error(Errc::kUnknownCard, "pool entry");
    const auto src = catalog.row(pool[k]);
    std::copy(src.begin(), src.end(), m.row(k).begin());
  }
  return m;
}

double chance_baseline(std::span<const Decision> decisions) {
  if (decisions.empty()) throw Error(Errc::kEmptyDataset, "chance baseline of no decisions");
  double sum = 0.0;
  for (const auto& d : decisions) {
    if (d.pack.empty()) throw Error(Errc::kEmptyPack, "decision with empty pack");
    sum += 1.0 / static_cast<double>(d.pack.size());
  }
  return sum / static_cast<double>(decisions.size());
}

double chance_baseline(const Dataset& dataset) { return chance_baseline(dataset.decisions); }

}  // namespace cpr
