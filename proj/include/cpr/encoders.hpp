#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cpr/domain.hpp"
#include "cpr/params.hpp"
#include "cpr/tensor.hpp"

namespace cpr {

// How the card and pool towers meet.
//   kSharedMainBlock: card input stack and pool input stack both feed one
//     shared main block and one shared output layer (Siamese, triplet losses).
//   kSeparateOutputs: the card trunk is reused on every pool row; pool and
//     card each get their own output layer (InfoNCE losses).
enum class Wiring { kSharedMainBlock, kSeparateOutputs };
enum class PoolAggregation { kMaskedMean, kConv1D };

struct EncoderConfig {
  std::size_t feature_dim = 0;  // F
  std::size_t embed_dim = 32;   // E
  std::size_t card_layers = 3;
  std::size_t card_width = 64;
  std::size_t pool_layers = 2;
  std::size_t shared_layers = 2;  // main block depth, kSharedMainBlock only
  Wiring wiring = Wiring::kSeparateOutputs;
  PoolAggregation pool_aggregation = PoolAggregation::kMaskedMean;
  bool normalize_output = true;

  // Throws kInvalidConfig.
  void validate() const;
  std::string to_json() const;
  static EncoderConfig from_json(const std::string& text);
  bool operator==(const EncoderConfig&) const = default;
};

std::string_view to_string(Wiring w);
std::string_view to_string(PoolAggregation a);

using PoolView = std::span<const CardId>;

struct EncoderTape;

// Output of one batched forward pass, kept alive for the backward pass.
struct BatchEmbeddings {
  Tensor cards;  // [M,E], one row per catalog card
  Tensor pools;  // [N,E], one row per requested pool
  std::shared_ptr<const EncoderTape> tape;
};

class EmbeddingModel {
 public:
  // Fresh parameters, uniform(+-1/sqrt(fan_in)) from `seed`.
  EmbeddingModel(const EncoderConfig& config, std::uint64_t seed);
  // Adopts existing parameters; throws kBadCheckpoint on any missing or
  // misshapen tensor. Extra tensors (e.g. loss parameters) are kept.
  EmbeddingModel(const EncoderConfig& config, ParamStore params);

  const EncoderConfig& config() const noexcept { return config_; }
  ParamStore& params() noexcept { return params_; }
  const ParamStore& params() const noexcept { return params_; }

  // Embeds every row of `card_features` ([M,F]) and every pool. Pool entries
  // index rows of `card_features`.
  BatchEmbeddings forward(const Tensor& card_features, std::span<const PoolView> pools) const;
  // Accumulates parameter gradients for d(loss)/d(cards) and d(loss)/d(pools).
  void backward(const BatchEmbeddings& fwd, const Tensor& d_cards, const Tensor& d_pools);

  Tensor encode_card(std::span<const double> features) const;
  Tensor encode_card(CardId card, const CardCatalog& catalog) const;
  // Empty pool -> the learned empty-pool vector. Throws kPoolTooLarge past 45.
  Tensor encode_pool(PoolView pool, const CardCatalog& catalog) const;
  Tensor encode_pools(std::span<const PoolView> pools, const CardCatalog& catalog) const;
  Tensor embed_all_cards(const CardCatalog& catalog) const;
  Tensor embed_all_cards(const Tensor& card_features) const;

  // Names of the output-layer tensors used by the card path and pool path.
  std::vector<std::string> card_output_params() const;
  std::vector<std::string> pool_output_params() const;

 private:
  void init_params(std::uint64_t seed);

  EncoderConfig config_;
  ParamStore params_;
};

}  // namespace cpr
