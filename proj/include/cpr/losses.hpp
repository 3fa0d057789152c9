#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "cpr/domain.hpp"
#include "cpr/encoders.hpp"
#include "cpr/rng.hpp"
#include "cpr/tensor.hpp"

namespace cpr {

enum class LossKind {
  kStandardInfoNce,
  kSigmoidInfoNce,
  kContextualInfoNce,
  kTripletRandom,
  kTripletHard,
  kTripletAll,
};

inline constexpr std::array<LossKind, 6> kAllLosses = {
    LossKind::kStandardInfoNce, LossKind::kSigmoidInfoNce, LossKind::kContextualInfoNce,
    LossKind::kTripletRandom,   LossKind::kTripletHard,    LossKind::kTripletAll,
};

// CLI names: standard-infonce | sigmoid-infonce | contextual-infonce |
// triplet-random | triplet-hard | triplet-all.
std::string_view to_string(LossKind kind);
std::optional<LossKind> parse_loss(std::string_view name);
bool is_triplet(LossKind kind);
// Triplet losses train the Siamese (shared main block) wiring, the InfoNCE
// family the separate-output wiring.
Wiring default_wiring(LossKind kind);

struct LossConfig {
  double temperature = 0.07;  // softmax losses
  double margin = 0.2;        // triplet losses
  double sigmoid_t = std::log(10.0);
  double sigmoid_b = -10.0;
};

// N x M pool-vs-card cosine similarities with a {1,0,-1} mask:
// 1 = picked card, 0 = other card in the pack, -1 = not on offer.
struct MaskedSimilarityBatch {
  Tensor sims;                     // [N,M]
  std::vector<std::int8_t> mask;   // row-major N*M

  std::size_t rows() const { return sims.rows(); }
  std::size_t cols() const { return sims.cols(); }
  std::int8_t at(std::size_t i, std::size_t j) const { return mask[i * cols() + j]; }
};

std::vector<std::int8_t> contextual_mask(std::span<const Decision> decisions, std::size_t num_cards);
MaskedSimilarityBatch build_contextual_batch(const Tensor& pool_emb, const Tensor& card_emb,
                                             std::span<const Decision> decisions);
MaskedSimilarityBatch build_contextual_batch(std::span<const Decision> decisions,
                                             const EmbeddingModel& model, const CardCatalog& catalog);

struct SimLoss {
  double loss = 0.0;
  Tensor d_sims;  // same shape as the similarity matrix
  double d_t = 0.0;
  double d_b = 0.0;
};

// Row-wise softmax cross-entropy restricted to each row's valid (mask >= 0)
// entries, averaged over rows. Masked entries get exactly zero gradient.
// Throws kNoPositiveInRow (row without exactly one 1) and kEmptyValidSet
// (row without any 0).
SimLoss contextual_infonce_loss(const MaskedSimilarityBatch& batch, double temperature);

// Pool embeddings paired row-by-row with the embedding of the card picked.
struct PairBatch {
  Tensor pool_emb;    // [N,E]
  Tensor chosen_emb;  // [N,E]
};

struct PairLoss {
  double loss = 0.0;
  Tensor d_pool;
  Tensor d_chosen;
  double d_t = 0.0;
  double d_b = 0.0;
};

// Symmetric CLIP objective on the N x N cosine matrix: mean row-wise CE plus
// mean column-wise CE, targets on the diagonal. N >= 2.
SimLoss standard_infonce_from_sims(const Tensor& sims, double temperature);
PairLoss standard_infonce_loss(const PairBatch& pairs, double temperature);

// Pairwise sigmoid objective: (1/N) sum_ij log(1 + exp(-z_ij (t s_ij + b))),
// z = +1 on the diagonal and -1 elsewhere.
SimLoss sigmoid_from_sims(const Tensor& sims, double t, double b);
PairLoss sigmoid_pair_loss(const PairBatch& pairs, double t, double b);

struct TripletGrad {
  double loss = 0.0;
  std::vector<double> d_anchor, d_positive, d_negative;
};

// max(|a-p| - |a-n| + margin, 0), Euclidean distance; zero subgradient at
// the hinge and at coincident points.
TripletGrad triplet_loss(std::span<const double> a, std::span<const double> p,
                         std::span<const double> n, double margin);

enum class Mining { kRandom, kHardest, kAll };

struct Triplet {
  std::size_t row;  // anchor = pool embedding row
  CardId positive;
  CardId negative;
  bool operator==(const Triplet&) const = default;
};

// Random: one negative drawn uniformly from the unchosen pack cards.
// Hardest: the unchosen card closest to the pool (ties -> lowest CardId).
// All: every unchosen card, in pack order.
std::vector<Triplet> mine(const Decision& d, std::size_t row, std::span<const double> pool_emb,
                          const Tensor& card_emb, Mining strategy, Rng& rng);
std::vector<Triplet> mine(const Decision& d, const EmbeddingModel& model,
                          const CardCatalog& catalog, Mining strategy, Rng& rng);

// Fraction of rows whose picked card is also picked by another row of the
// batch, i.e. rows with a correct pairing off the diagonal. N >= 2.
double collision_rate(std::span<const Decision> decisions);

// Batch objective in terms of encoder outputs.
struct BatchLoss {
  double loss = 0.0;
  Tensor d_cards;  // [M,E]
  Tensor d_pools;  // [N,E]
  double d_t = 0.0;
  double d_b = 0.0;
  std::size_t terms = 0;  // rows, pairs or triplets averaged over
};

Mining mining_for(LossKind kind);
std::vector<Triplet> mine_batch(std::span<const Decision> decisions, const Tensor& pools,
                                const Tensor& cards, Mining strategy, Rng& rng);
BatchLoss triplet_batch_loss(std::span<const Triplet> triplets, const Tensor& cards,
                             const Tensor& pools, double margin);
// `sigmoid_t` / `sigmoid_b` are the current learnable values (sigmoid loss only).
BatchLoss batch_loss(LossKind kind, const LossConfig& cfg, const Tensor& cards, const Tensor& pools,
                     std::span<const Decision> decisions, Rng& mining_rng, double sigmoid_t,
                     double sigmoid_b);

}  // namespace cpr
