#include "cpr/losses.hpp"

#include <algorithm>
#include <limits>
#include <unordered_map>

#include "cpr/error.hpp"
#include "cpr/ops.hpp"

namespace cpr {
namespace {

// log(1 + exp(x)) without overflow.
double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

// 1 / (1 + exp(-x)).
double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

Tensor gather_chosen(const Tensor& cards, std::span<const Decision> decisions) {
  Tensor out = Tensor::matrix(decisions.size(), cards.cols());
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    const auto src = cards.row(index_of(decisions[i].picked_card()));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

void scatter_chosen(const Tensor& d_chosen, std::span<const Decision> decisions, Tensor& d_cards) {
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    auto dst = d_cards.row(index_of(decisions[i].picked_card()));
    const auto src = d_chosen.row(i);
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
  }
}

PairLoss pair_loss_from_sims(const PairBatch& pairs, const SimLoss& sim_loss, const Tensor& sims) {
  PairLoss out;
  out.loss = sim_loss.loss;
  out.d_t = sim_loss.d_t;
  out.d_b = sim_loss.d_b;
  out.d_pool = Tensor(pairs.pool_emb.shape());
  out.d_chosen = Tensor(pairs.chosen_emb.shape());
  nn::cosine_matrix_backward(pairs.pool_emb, pairs.chosen_emb, sims, sim_loss.d_sims, out.d_pool,
                             out.d_chosen);
  return out;
}

}  // namespace

std::string_view to_string(LossKind kind) {
  switch (kind) {
    case LossKind::kStandardInfoNce: return "standard-infonce";
    case LossKind::kSigmoidInfoNce: return "sigmoid-infonce";
    case LossKind::kContextualInfoNce: return "contextual-infonce";
    case LossKind::kTripletRandom: return "triplet-random";
    case LossKind::kTripletHard: return "triplet-hard";
    case LossKind::kTripletAll: return "triplet-all";
  }
  return "unknown";
}

std::optional<LossKind> parse_loss(std::string_view name) {
  for (LossKind k : kAllLosses) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

bool is_triplet(LossKind kind) {
  return kind == LossKind::kTripletRandom || kind == LossKind::kTripletHard ||
         kind == LossKind::kTripletAll;
}

Wiring default_wiring(LossKind kind) {
  return is_triplet(kind) ? Wiring::kSharedMainBlock : Wiring::kSeparateOutputs;
}

std::vector<std::int8_t> contextual_mask(std::span<const Decision> decisions, std::size_t num_cards) {
  std::vector<std::int8_t> mask(decisions.size() * num_cards, -1);
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    const Decision& d = decisions[i];
    for (std::size_t k = 0; k < d.pack.size(); ++k) {
      const std::size_t j = index_of(d.pack[k]);
      if (j >= num_cards) throw Error(Errc::kUnknownCard, "pack card " + std::to_string(j));
      mask[i * num_cards + j] = k == d.picked ? 1 : 0;
    }
  }
  return mask;
}

MaskedSimilarityBatch build_contextual_batch(const Tensor& pool_emb, const Tensor& card_emb,
                                             std::span<const Decision> decisions) {
  if (pool_emb.rows() != decisions.size()) {
    throw Error(Errc::kShapeMismatch, "one pool embedding per decision required");
  }
  return {nn::cosine_matrix(pool_emb, card_emb), contextual_mask(decisions, card_emb.rows())};
}

MaskedSimilarityBatch build_contextual_batch(std::span<const Decision> decisions,
                                             const EmbeddingModel& model, const CardCatalog& catalog) {
  std::vector<PoolView> pools;
  pools.reserve(decisions.size());
  for (const auto& d : decisions) pools.emplace_back(d.pool);
  const BatchEmbeddings emb = model.forward(catalog.features(), pools);
  return build_contextual_batch(emb.pools, emb.cards, decisions);
}

SimLoss contextual_infonce_loss(const MaskedSimilarityBatch& batch, double temperature) {
  if (!(temperature > 0.0)) throw Error(Errc::kInvalidConfig, "temperature must be positive");
  const std::size_t n = batch.rows(), m = batch.cols();
  if (n == 0) throw Error(Errc::kEmptyInput, "contextual loss over zero rows");
  SimLoss out;
  out.d_sims = Tensor::matrix(n, m);
  const double inv_tau = 1.0 / temperature;
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<std::size_t> valid;
  for (std::size_t i = 0; i < n; ++i) {
    valid.clear();
    std::size_t positive = m;
    std::size_t positives = 0;
    for (std::size_t j = 0; j < m; ++j) {
      const std::int8_t k = batch.at(i, j);
      if (k < 0) continue;
      valid.push_back(j);
      if (k == 1) {
        positive = j;
        ++positives;
      }
    }
    if (positives != 1) {
      throw Error(Errc::kNoPositiveInRow, "row " + std::to_string(i) + " has " +
                                              std::to_string(positives) + " positives");
    }
    if (valid.size() < 2) throw Error(Errc::kEmptyValidSet, "row " + std::to_string(i));
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t j : valid) hi = std::max(hi, batch.sims(i, j) * inv_tau);
    double z = 0.0;
    for (std::size_t j : valid) z += std::exp(batch.sims(i, j) * inv_tau - hi);
    const double log_z = std::log(z);
    out.loss += (log_z - (batch.sims(i, positive) * inv_tau - hi)) * inv_n;
    for (std::size_t j : valid) {
      const double p = std::exp(batch.sims(i, j) * inv_tau - hi - log_z);
      out.d_sims(i, j) = (p - (j == positive ? 1.0 : 0.0)) * inv_tau * inv_n;
    }
  }
  if (!std::isfinite(out.loss)) throw Error(Errc::kNonFiniteLoss, "contextual InfoNCE");
  return out;
}

SimLoss standard_infonce_from_sims(const Tensor& sims, double temperature) {
  const std::size_t n = sims.rows();
  if (n < 2 || sims.cols() != n) throw Error(Errc::kShapeMismatch, "standard InfoNCE needs a square N>=2 matrix");
  if (!(temperature > 0.0)) throw Error(Errc::kInvalidConfig, "temperature must be positive");
  const double inv_tau = 1.0 / temperature;
  const double inv_n = 1.0 / static_cast<double>(n);
  SimLoss out;
  out.d_sims = Tensor::matrix(n, n);
  // Row direction then column direction; `at(a,b)` reads along the direction.
  for (int dir = 0; dir < 2; ++dir) {
    auto at = [&](std::size_t a, std::size_t b) { return dir == 0 ? sims(a, b) : sims(b, a); };
    for (std::size_t a = 0; a < n; ++a) {
      double hi = -std::numeric_limits<double>::infinity();
      for (std::size_t b = 0; b < n; ++b) hi = std::max(hi, at(a, b) * inv_tau);
      double z = 0.0;
      for (std::size_t b = 0; b < n; ++b) z += std::exp(at(a, b) * inv_tau - hi);
      const double log_z = std::log(z);
      out.loss += (log_z - (at(a, a) * inv_tau - hi)) * inv_n;
      for (std::size_t b = 0; b < n; ++b) {
        const double p = std::exp(at(a, b) * inv_tau - hi - log_z);
        const double g = (p - (a == b ? 1.0 : 0.0)) * inv_tau * inv_n;
        if (dir == 0) {
          out.d_sims(a, b) += g;
        } else {
          out.d_sims(b, a) += g;
        }
      }
    }
  }
  if (!std::isfinite(out.loss)) throw Error(Errc::kNonFiniteLoss, "standard InfoNCE");
  return out;
}

PairLoss standard_infonce_loss(const PairBatch& pairs, double temperature) {
  const Tensor sims = nn::cosine_matrix(pairs.pool_emb, pairs.chosen_emb);
  return pair_loss_from_sims(pairs, standard_infonce_from_sims(sims, temperature), sims);
}

SimLoss sigmoid_from_sims(const Tensor& sims, double t, double b) {
  const std::size_t n = sims.rows();
  if (n < 1 || sims.cols() != n) throw Error(Errc::kShapeMismatch, "sigmoid loss needs a square matrix");
  const double inv_n = 1.0 / static_cast<double>(n);
  SimLoss out;
  out.d_sims = Tensor::matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double z = i == j ? 1.0 : -1.0;
      const double logit = t * sims(i, j) + b;
      out.loss += softplus(-z * logit) * inv_n;
      // d/dlogit softplus(-z*logit) = -z * sigmoid(-z*logit)
      const double g = -z * sigmoid(-z * logit) * inv_n;
      out.d_sims(i, j) = g * t;
      out.d_t += g * sims(i, j);
      out.d_b += g;
    }
  }
  if (!std::isfinite(out.loss)) throw Error(Errc::kNonFiniteLoss, "sigmoid loss");
  return out;
}

PairLoss sigmoid_pair_loss(const PairBatch& pairs, double t, double b) {
  const Tensor sims = nn::cosine_matrix(pairs.pool_emb, pairs.chosen_emb);
  return pair_loss_from_sims(pairs, sigmoid_from_sims(sims, t, b), sims);
}

TripletGrad triplet_loss(std::span<const double> a, std::span<const double> p,
                         std::span<const double> n, double margin) {
  if (a.size() != p.size() || a.size() != n.size()) {
    throw Error(Errc::kShapeMismatch, "triplet embeddings differ in length");
  }
  const std::size_t e = a.size();
  TripletGrad out;
  out.d_anchor.assign(e, 0.0);
  out.d_positive.assign(e, 0.0);
  out.d_negative.assign(e, 0.0);
  const double dap = distance(a, p);
  const double dan = distance(a, n);
  const double arg = dap - dan + margin;
  if (arg <= 0.0) return out;
  out.loss = arg;
  for (std::size_t k = 0; k < e; ++k) {
    const double gp = dap > 0.0 ? (a[k] - p[k]) / dap : 0.0;
    const double gn = dan > 0.0 ? (a[k] - n[k]) / dan : 0.0;
    out.d_anchor[k] = gp - gn;
    out.d_positive[k] = -gp;
    out.d_negative[k] = gn;
  }
  return out;
}

std::vector<Triplet> mine(const Decision& d, std::size_t row, std::span<const double> pool_emb,
                          const Tensor& card_emb, Mining strategy, Rng& rng) {
  if (d.pack.size() < kMinPackForDecision) throw Error(Errc::kPackTooSmall, "mining needs |pack| >= 2");
  const CardId positive = d.picked_card();
  std::vector<CardId> unchosen;
  unchosen.reserve(d.pack.size() - 1);
  for (std::size_t k = 0; k < d.pack.size(); ++k) {
    if (k != d.picked) unchosen.push_back(d.pack[k]);
  }
  std::vector<Triplet> out;
  switch (strategy) {
    case Mining::kRandom:
      out.push_back({row, positive, unchosen[rng.below(unchosen.size())]});
      break;
    case Mining::kHardest: {
      CardId best = unchosen.front();
      double best_d = std::numeric_limits<double>::infinity();
      for (CardId c : unchosen) {
        const double dist = distance(pool_emb, card_emb.row(index_of(c)));
        if (dist < best_d || (dist == best_d && c < best)) {
          best = c;
          best_d = dist;
        }
      }
      out.push_back({row, positive, best});
      break;
    }
    case Mining::kAll:
      for (CardId c : unchosen) out.push_back({row, positive, c});
      break;
  }
  return out;
}

std::vector<Triplet> mine(const Decision& d, const EmbeddingModel& model,
                          const CardCatalog& catalog, Mining strategy, Rng& rng) {
  const PoolView pool(d.pool);
  const BatchEmbeddings emb = model.forward(catalog.features(), std::span<const PoolView>(&pool, 1));
  return mine(d, 0, emb.pools.row(0), emb.cards, strategy, rng);
}

double collision_rate(std::span<const Decision> decisions) {
  if (decisions.size() < 2) throw Error(Errc::kEmptyInput, "collision rate needs N >= 2");
  std::unordered_map<CardId, std::size_t> counts;
  for (const auto& d : decisions) ++counts[d.picked_card()];
  std::size_t colliding = 0;
  for (const auto& d : decisions) {
    if (counts[d.picked_card()] > 1) ++colliding;
  }
  return static_cast<double>(colliding) / static_cast<double>(decisions.size());
}

Mining mining_for(LossKind kind) {
  switch (kind) {
    case LossKind::kTripletRandom: return Mining::kRandom;
    case LossKind::kTripletHard: return Mining::kHardest;
    case LossKind::kTripletAll: return Mining::kAll;
    default: throw Error(Errc::kInvalidConfig, "not a triplet loss");
  }
}

std::vector<Triplet> mine_batch(std::span<const Decision> decisions, const Tensor& pools,
                                const Tensor& cards, Mining strategy, Rng& rng) {
  std::vector<Triplet> out;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    auto t = mine(decisions[i], i, pools.row(i), cards, strategy, rng);
    out.insert(out.end(), t.begin(), t.end());
  }
  return out;
}

BatchLoss triplet_batch_loss(std::span<const Triplet> triplets, const Tensor& cards,
                             const Tensor& pools, double margin) {
  if (triplets.empty()) throw Error(Errc::kEmptyInput, "no triplets");
  BatchLoss out;
  out.d_cards = Tensor(cards.shape());
  out.d_pools = Tensor(pools.shape());
  out.terms = triplets.size();
  const double inv = 1.0 / static_cast<double>(triplets.size());
  for (const Triplet& t : triplets) {
    const TripletGrad g = triplet_loss(pools.row(t.row), cards.row(index_of(t.positive)),
                                       cards.row(index_of(t.negative)), margin);
    out.loss += g.loss * inv;
    if (g.loss == 0.0) continue;
    auto da = out.d_pools.row(t.row);
    auto dp = out.d_cards.row(index_of(t.positive));
    auto dn = out.d_cards.row(index_of(t.negative));
    for (std::size_t k = 0; k < da.size(); ++k) {
      da[k] += g.d_anchor[k] * inv;
      dp[k] += g.d_positive[k] * inv;
      dn[k] += g.d_negative[k] * inv;
    }
  }
  return out;
}

BatchLoss batch_loss(LossKind kind, const LossConfig& cfg, const Tensor& cards, const Tensor& pools,
                     std::span<const Decision> decisions, Rng& mining_rng, double sigmoid_t,
                     double sigmoid_b) {
  BatchLoss out;
  switch (kind) {
    case LossKind::kContextualInfoNce: {
      const MaskedSimilarityBatch batch = build_contextual_batch(pools, cards, decisions);
      const SimLoss l = contextual_infonce_loss(batch, cfg.temperature);
      out.loss = l.loss;
      out.d_cards = Tensor(cards.shape());
      out.d_pools = Tensor(pools.shape());
      nn::cosine_matrix_backward(pools, cards, batch.sims, l.d_sims, out.d_pools, out.d_cards);
      out.terms = decisions.size();
      return out;
    }
    case LossKind::kStandardInfoNce:
    case LossKind::kSigmoidInfoNce: {
      const PairBatch pairs{pools, gather_chosen(cards, decisions)};
      const PairLoss l = kind == LossKind::kStandardInfoNce
                             ? standard_infonce_loss(pairs, cfg.temperature)
                             : sigmoid_pair_loss(pairs, sigmoid_t, sigmoid_b);
      out.loss = l.loss;
      out.d_pools = l.d_pool;
      out.d_cards = Tensor(cards.shape());
      scatter_chosen(l.d_chosen, decisions, out.d_cards);
      out.d_t = l.d_t;
      out.d_b = l.d_b;
      out.terms = decisions.size();
      return out;
    }
    case LossKind::kTripletRandom:
    case LossKind::kTripletHard:
    case LossKind::kTripletAll: {
      const auto triplets = mine_batch(decisions, pools, cards, mining_for(kind), mining_rng);
      return triplet_batch_loss(triplets, cards, pools, cfg.margin);
    }
  }
  throw Error(Errc::kInvalidConfig, "unknown loss");
}

}  // namespace cpr
