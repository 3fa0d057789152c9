#include "cpr/evaluation.hpp"

#include <algorithm>

#include "cpr/error.hpp"
#include "cpr/ops.hpp"

namespace cpr {
namespace {

constexpr std::size_t kScoreChunk = 512;

}  // namespace

std::vector<std::vector<double>> PickScorer::score_all(std::span<const Decision> decisions) const {
  std::vector<std::vector<double>> out;
  out.reserve(decisions.size());
  for (const auto& d : decisions) out.push_back(score(d.pool, d.pack));
  return out;
}

ModelScorer::ModelScorer(const EmbeddingModel& model, const CardCatalog& catalog)
    : model_(model), catalog_(catalog), cards_(model.embed_all_cards(catalog)) {}

std::vector<double> ModelScorer::score(PoolView pool, std::span<const CardId> pack) const {
  const Tensor p = model_.encode_pool(pool, catalog_);
  std::vector<double> out;
  out.reserve(pack.size());
  for (CardId c : pack) {
    if (!catalog_.contains(c)) throw Error(Errc::kUnknownCard, std::to_string(index_of(c)));
    out.push_back(nn::cosine_sim(p.values(), cards_.row(index_of(c))));
  }
  return out;
}

std::vector<std::vector<double>> ModelScorer::score_all(std::span<const Decision> decisions) const {
  std::vector<std::vector<double>> out;
  out.reserve(decisions.size());
  for (std::size_t start = 0; start < decisions.size(); start += kScoreChunk) {
    const std::size_t end = std::min(decisions.size(), start + kScoreChunk);
    std::vector<PoolView> pools;
    for (std::size_t i = start; i < end; ++i) pools.emplace_back(decisions[i].pool);
    const Tensor emb = model_.encode_pools(pools, catalog_);
    for (std::size_t i = start; i < end; ++i) {
      std::vector<double> s;
      s.reserve(decisions[i].pack.size());
      for (CardId c : decisions[i].pack) {
        s.push_back(nn::cosine_sim(emb.row(i - start), cards_.row(index_of(c))));
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

std::vector<double> PlantedScorer::score(PoolView pool, std::span<const CardId> pack) const {
  std::vector<double> out;
  out.reserve(pack.size());
  for (CardId c : pack) out.push_back(utility_.score(pool, c));
  return out;
}

CardId argmax_pick(std::span<const CardId> pack, std::span<const double> scores) {
  if (pack.empty()) throw Error(Errc::kEmptyPack, "cannot pick from an empty pack");
  std::size_t best = 0;
  for (std::size_t k = 1; k < pack.size(); ++k) {
    if (scores[k] > scores[best] || (scores[k] == scores[best] && pack[k] < pack[best])) best = k;
  }
  return pack[best];
}

Prediction predict_pick(const PickScorer& scorer, PoolView pool, std::span<const CardId> pack) {
  if (pack.empty()) throw Error(Errc::kEmptyPack, "cannot pick from an empty pack");
  Prediction p{pack.front(), scorer.score(pool, pack)};
  p.card = argmax_pick(pack, p.scores);
  return p;
}

Prediction predict_pick(const EmbeddingModel& model, const CardCatalog& catalog, PoolView pool,
                        std::span<const CardId> pack) {
  return predict_pick(ModelScorer(model, catalog), pool, pack);
}

std::size_t pick_rank(std::span<const CardId> pack, std::span<const double> scores,
                      std::size_t index) {
  std::size_t rank = 1;
  for (std::size_t k = 0; k < pack.size(); ++k) {
    if (k == index) continue;
    if (scores[k] > scores[index] || (scores[k] == scores[index] && pack[k] < pack[index])) ++rank;
  }
  return rank;
}

EvalReport top1_accuracy(const PickScorer& scorer, std::span<const Decision> decisions) {
  if (decisions.empty()) throw Error(Errc::kEmptyInput, "no decisions to evaluate");
  const auto scores = scorer.score_all(decisions);
  EvalReport r;
  r.n_decisions = decisions.size();
  std::size_t correct = 0;
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    const Decision& d = decisions[i];
    const std::size_t rank = pick_rank(d.pack, scores[i], d.picked);
    const bool hit = rank == 1;
    correct += hit;
    rank_sum += static_cast<double>(rank);
    auto& bucket = r.by_pack_size[d.pack.size()];
    ++bucket.decisions;
    bucket.correct += hit;
    bucket.rank_sum += rank;
  }
  r.top1 = static_cast<double>(correct) / static_cast<double>(decisions.size());
  r.mean_rank = rank_sum / static_cast<double>(decisions.size());
  return r;
}

EvalReport top1_accuracy(const EmbeddingModel& model, const CardCatalog& catalog,
                         std::span<const Decision> decisions) {
  return top1_accuracy(ModelScorer(model, catalog), decisions);
}

std::vector<std::size_t> rank_distribution(const PickScorer& scorer,
                                           std::span<const Decision> decisions) {
  if (decisions.empty()) throw Error(Errc::kEmptyInput, "no decisions to evaluate");
  const auto scores = scorer.score_all(decisions);
  std::vector<std::size_t> counts(kPackSize, 0);
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    const std::size_t rank = pick_rank(decisions[i].pack, scores[i], decisions[i].picked);
    if (rank > counts.size()) counts.resize(rank, 0);
    ++counts[rank - 1];
  }
  return counts;
}

}  // namespace cpr
