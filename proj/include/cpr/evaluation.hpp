#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <span>
#include <vector>

#include "cpr/domain.hpp"
#include "cpr/encoders.hpp"
#include "cpr/planted.hpp"

namespace cpr {

// Anything that can score the cards of a pack given a pool.
class PickScorer {
 public:
  virtual ~PickScorer() = default;
  virtual std::vector<double> score(PoolView pool, std::span<const CardId> pack) const = 0;
  // One score vector per decision; overridden where batching pays off.
  virtual std::vector<std::vector<double>> score_all(std::span<const Decision> decisions) const;
};

// Cosine similarity between the pool embedding and each card embedding of a
// frozen model. Card embeddings are computed once at construction.
class ModelScorer final : public PickScorer {
 public:
  ModelScorer(const EmbeddingModel& model, const CardCatalog& catalog);
  std::vector<double> score(PoolView pool, std::span<const CardId> pack) const override;
  std::vector<std::vector<double>> score_all(std::span<const Decision> decisions) const override;

 private:
  const EmbeddingModel& model_;
  const CardCatalog& catalog_;
  Tensor cards_;
};

class PlantedScorer final : public PickScorer {
 public:
  explicit PlantedScorer(const PlantedUtility& utility) : utility_(utility) {}
  std::vector<double> score(PoolView pool, std::span<const CardId> pack) const override;

 private:
  const PlantedUtility& utility_;
};

struct Prediction {
  CardId card;
  std::vector<double> scores;  // aligned with the pack
};

// Highest score wins; ties go to the lowest CardId. Throws kEmptyPack.
CardId argmax_pick(std::span<const CardId> pack, std::span<const double> scores);
Prediction predict_pick(const PickScorer& scorer, PoolView pool, std::span<const CardId> pack);
Prediction predict_pick(const EmbeddingModel& model, const CardCatalog& catalog, PoolView pool,
                        std::span<const CardId> pack);

// 1-based position of pack[index] when the pack is ordered by descending
// score, ties broken by ascending CardId. Rank 1 is exactly the argmax pick.
std::size_t pick_rank(std::span<const CardId> pack, std::span<const double> scores,
                      std::size_t index);

struct PackSizeStats {
  std::size_t decisions = 0;
  std::size_t correct = 0;
  std::size_t rank_sum = 0;
  double accuracy() const { return decisions ? static_cast<double>(correct) / decisions : 0.0; }
  double mean_rank() const { return decisions ? static_cast<double>(rank_sum) / decisions : 0.0; }
};

struct EvalReport {
  double top1 = 0.0;
  double mean_rank = 0.0;
  std::map<std::size_t, PackSizeStats> by_pack_size;
  std::size_t n_decisions = 0;
};

// Throws kEmptyInput on an empty decision list.
EvalReport top1_accuracy(const PickScorer& scorer, std::span<const Decision> decisions);
EvalReport top1_accuracy(const EmbeddingModel& model, const CardCatalog& catalog,
                         std::span<const Decision> decisions);

// counts[r-1] = decisions whose pick landed at rank r, r = 1..15.
std::vector<std::size_t> rank_distribution(const PickScorer& scorer,
                                           std::span<const Decision> decisions);

}  // namespace cpr
