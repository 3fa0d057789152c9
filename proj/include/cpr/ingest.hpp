#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "cpr/domain.hpp"
#include "cpr/planted.hpp"

namespace cpr {

// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);

// Feature file: CSV with header `name,f0,f1,...`, one card per row.
// Throws kMalformed (with line/column), kDuplicateName, kNonFiniteValue.
CardCatalog parse_features(std::istream& in, const std::string& source = "<stream>");
CardCatalog parse_feature_file(const std::string& path);
void write_features(std::ostream& out, const CardCatalog& catalog);

struct DraftLog {
  std::vector<Decision> decisions;
  std::size_t dropped_single = 0;  // records whose pack held one card
};

// Draft log: CSV with header `draft_id,pick_number,pack,pool,picked`; pack and
// pool are `;`-separated card names. Without a pool column the pool is rebuilt
// from earlier picks of the same draft. Throws kUnknownCard, kPickNotInPack,
// kMalformedRecord.
DraftLog parse_draft_log(std::istream& in, const CardCatalog& catalog,
                         const std::string& source = "<stream>");
DraftLog parse_draft_log_file(const std::string& path, const CardCatalog& catalog);
void write_draft_log(std::ostream& out, const CardCatalog& catalog, std::span<const Decision> decisions);

// Assigns whole drafts to train/test. round(ratio * drafts) drafts train,
// clamped so both sides get at least one. Throws kEmptyInput, kTooFewDrafts,
// kInvalidConfig (ratio outside (0, 1)).
Dataset split_dataset(CardCatalog catalog, std::vector<Decision> decisions, double ratio, std::uint64_t seed);

// Directory with catalog.csv, decisions.csv and split.csv (`draft_id,partition`).
void save_dataset(const std::string& dir, const Dataset& dataset);
Dataset load_dataset(const std::string& dir);

// Noise at which the planted argmax matches about 85% of the synthetic picks
// at the default sizes.
inline constexpr double kDefaultSyntheticNoise = 0.25;

struct SyntheticSpec {
  std::size_t cards = 200;
  std::size_t feature_dim = 32;
  std::size_t players = 8;
  std::size_t drafts = 50;
  std::size_t rank = 8;
  double noise = kDefaultSyntheticNoise;
  std::uint64_t seed = 0;

  // Throws kInvalidSpec.
  void validate() const;
};

struct SyntheticData {
  CardCatalog catalog;
  std::vector<Decision> decisions;
  PlantedUtility utility;
};

// Cards get N(0,1) latents; features are a fixed random linear map of the
// latents. Every seat of every draft picks with PlantedUtilityPolicy. Seat s of
// draft d records its decisions under draft id d * players + s.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

}  // namespace cpr
