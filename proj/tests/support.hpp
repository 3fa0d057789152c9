#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "cpr/domain.hpp"
#include "cpr/encoders.hpp"
#include "cpr/losses.hpp"
#include "cpr/rng.hpp"
#include "cpr/tensor.hpp"

namespace cpr::testing {

inline Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.normal() * scale;
  return t;
}

inline CardCatalog random_catalog(std::size_t m, std::size_t f, Rng& rng) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < m; ++i) names.push_back("c" + std::to_string(i));
  return CardCatalog(random_tensor({m, f}, rng), names);
}

// k distinct cards out of [0, m).
inline std::vector<CardId> distinct_cards(std::size_t m, std::size_t k, Rng& rng) {
  std::vector<CardId> all(m);
  for (std::size_t i = 0; i < m; ++i) all[i] = card_at(i);
  rng.shuffle(all);
  all.resize(k);
  return all;
}

inline Decision random_decision(std::size_t m, Rng& rng, std::size_t max_pack = kPackSize,
                                std::size_t max_pool = 6) {
  Decision d;
  const std::size_t top = std::min(max_pack, m);
  d.pack = distinct_cards(m, 2 + rng.below(top - 1), rng);
  d.picked = rng.below(d.pack.size());
  const std::size_t pool = rng.below(max_pool + 1);
  for (std::size_t i = 0; i < pool; ++i) d.pool.push_back(card_at(rng.below(m)));
  return d;
}

inline std::vector<Decision> random_decisions(std::size_t n, std::size_t m, Rng& rng,
                                              std::size_t max_pack = kPackSize, std::size_t max_pool = 6) {
  std::vector<Decision> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(random_decision(m, rng, max_pack, max_pool));
    out.back().draft_id = i;
  }
  return out;
}

inline std::vector<PoolView> pool_views(const std::vector<Decision>& decisions) {
  std::vector<PoolView> out;
  for (const auto& d : decisions) out.emplace_back(d.pool);
  return out;
}

inline constexpr const char* kT = "loss.sigmoid.t";
inline constexpr const char* kB = "loss.sigmoid.b";

// Loss of the whole model on a batch; mining draws from a fresh stream each
// call so repeated evaluations mine identically.
inline double model_loss(const EmbeddingModel& model, const CardCatalog& catalog,
                         const std::vector<Decision>& decisions, LossKind kind, const LossConfig& cfg,
                         std::uint64_t mining_seed) {
  const auto pools = pool_views(decisions);
  const auto fwd = model.forward(catalog.features(), pools);
  Rng rng(mining_seed);
  const bool sig = kind == LossKind::kSigmoidInfoNce;
  return batch_loss(kind, cfg, fwd.cards, fwd.pools, decisions, rng,
                    sig ? model.params().at(kT).value[0] : 0.0, sig ? model.params().at(kB).value[0] : 0.0)
      .loss;
}

// Fills every parameter's .grad with the analytic gradient; returns the loss.
inline double model_grad(EmbeddingModel& model, const CardCatalog& catalog, const std::vector<Decision>& decisions,
                         LossKind kind, const LossConfig& cfg, std::uint64_t mining_seed) {
  model.params().zero_grad();
  const auto pools = pool_views(decisions);
  const auto fwd = model.forward(catalog.features(), pools);
  Rng rng(mining_seed);
  const bool sig = kind == LossKind::kSigmoidInfoNce;
  const auto out = batch_loss(kind, cfg, fwd.cards, fwd.pools, decisions, rng,
                              sig ? model.params().at(kT).value[0] : 0.0, sig ? model.params().at(kB).value[0] : 0.0);
  model.backward(fwd, out.d_cards, out.d_pools);
  if (sig) {
    model.params().at(kT).grad[0] += out.d_t;
    model.params().at(kB).grad[0] += out.d_b;
  }
  return out.loss;
}

inline double distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

// True when a triplet objective sits within `slack` of a non-differentiable
// point: a hinge at zero, a coincident pair, or a near tie for the hardest
// negative.
inline bool near_triplet_kink(const EmbeddingModel& model, const CardCatalog& catalog,
                              const std::vector<Decision>& decisions, LossKind kind, double margin,
                              double slack) {
  const auto pools = pool_views(decisions);
  const auto fwd = model.forward(catalog.features(), pools);
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    const Decision& d = decisions[i];
    const auto a = fwd.pools.row(i);
    const double dp = distance(a, fwd.cards.row(index_of(d.picked_card())));
    std::vector<double> dn;
    for (std::size_t k = 0; k < d.pack.size(); ++k) {
      if (k != d.picked) dn.push_back(distance(a, fwd.cards.row(index_of(d.pack[k]))));
    }
    if (dp < slack) return true;
    for (double x : dn) {
      if (x < slack || std::abs(dp - x + margin) < slack) return true;
    }
    if (kind == LossKind::kTripletHard && dn.size() > 1) {
      std::sort(dn.begin(), dn.end());
      if (dn[1] - dn[0] < slack) return true;
    }
  }
  return false;
}

}  // namespace cpr::testing
