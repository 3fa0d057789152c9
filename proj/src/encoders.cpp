#include "cpr/encoders.hpp"

#include <algorithm>
#include <string>

#include "cpr/error.hpp"
#include "cpr/ops.hpp"
#include "json.hpp"

namespace cpr {

struct DenseLayerTape {
  Tensor input;
  nn::LayerNormCache ln;
  Tensor normed;
};

struct ConvLayerTape {
  Tensor input;  // [45, Cin]
  nn::LayerNormCache ln;
  Tensor normed;
};

struct HeadTape {
  Tensor input;
  Tensor output;
  std::vector<double> norms;
};

struct EncoderTape {
  std::size_t num_cards = 0;
  std::size_t num_pools = 0;
  std::vector<std::size_t> nonempty;            // pool indices with >= 1 card
  std::vector<std::vector<CardId>> pool_cards;  // contents of those pools
  std::vector<DenseLayerTape> card_stack;
  std::vector<DenseLayerTape> pool_stack;           // masked-mean aggregation
  std::vector<std::vector<ConvLayerTape>> pool_conv;  // conv aggregation, per pool
  HeadTape card_head;                               // separate outputs
  HeadTape pool_head;                               // separate outputs
  std::vector<DenseLayerTape> main_stack;           // shared main block
  HeadTape shared_head;                             // shared main block
  Tensor empty_output;                              // [1,E]
  std::vector<double> empty_norm;
};

namespace {

std::string pname(std::string_view prefix, std::size_t layer, std::string_view what) {
  return std::string(prefix) + "." + std::to_string(layer) + "." + std::string(what);
}

std::string pname(std::string_view prefix, std::string_view what) {
  return std::string(prefix) + "." + std::string(what);
}

Tensor dense_stack_forward(const ParamStore& ps, std::string_view prefix, std::size_t layers,
                           Tensor x, std::vector<DenseLayerTape>* tape) {
  for (std::size_t l = 0; l < layers; ++l) {
    Tensor pre = nn::linear_forward(x, ps.at(pname(prefix, l, "w")).value,
                                    ps.at(pname(prefix, l, "b")).value);
    nn::LayerNormCache ln;
    Tensor normed = nn::layernorm_forward(pre, ps.at(pname(prefix, l, "gain")).value,
                                          ps.at(pname(prefix, l, "shift")).value, &ln);
    Tensor out = nn::elu_forward(normed);
    if (tape) tape->push_back({std::move(x), std::move(ln), std::move(normed)});
    x = std::move(out);
  }
  return x;
}

Tensor dense_stack_backward(ParamStore& ps, std::string_view prefix,
                            const std::vector<DenseLayerTape>& tape, Tensor dy) {
  for (std::size_t l = tape.size(); l-- > 0;) {
    const DenseLayerTape& t = tape[l];
    Tensor dn = nn::elu_backward(t.normed, dy);
    Parameter& gain = ps.at(pname(prefix, l, "gain"));
    Parameter& shift = ps.at(pname(prefix, l, "shift"));
    Tensor dpre = nn::layernorm_backward(t.ln, gain.value, dn, gain.grad, shift.grad);
    Parameter& w = ps.at(pname(prefix, l, "w"));
    Parameter& b = ps.at(pname(prefix, l, "b"));
    dy = nn::linear_backward(t.input, w.value, dpre, w.grad, b.grad);
  }
  return dy;
}

void zero_rows_from(Tensor& x, std::size_t first) {
  for (std::size_t r = first; r < x.rows(); ++r) std::fill(x.row(r).begin(), x.row(r).end(), 0.0);
}

Tensor head_forward(const ParamStore& ps, std::string_view prefix, Tensor x, bool normalize,
                    HeadTape* tape) {
  Tensor y = nn::linear_forward(x, ps.at(pname(prefix, "w")).value, ps.at(pname(prefix, "b")).value);
  std::vector<double> norms;
  if (normalize) y = nn::l2_normalize_rows(y, &norms);
  if (tape) *tape = {std::move(x), y, std::move(norms)};
  return y;
}

Tensor head_backward(ParamStore& ps, std::string_view prefix, const HeadTape& tape,
                     bool normalize, Tensor dy) {
  if (normalize) dy = nn::l2_normalize_rows_backward(tape.output, tape.norms, dy);
  Parameter& w = ps.at(pname(prefix, "w"));
  Parameter& b = ps.at(pname(prefix, "b"));
  return nn::linear_backward(tape.input, w.value, dy, w.grad, b.grad);
}

Tensor gather_rows(const Tensor& src, std::span<const CardId> ids, std::size_t height) {
  Tensor x = Tensor::matrix(height, src.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const auto s = src.row(index_of(ids[r]));
    std::copy(s.begin(), s.end(), x.row(r).begin());
  }
  return x;
}

// Pool rows -> one vector per pool. `src` rows are per-card inputs.
Tensor aggregate_forward(const ParamStore& ps, const EncoderConfig& cfg, const Tensor& src,
                         EncoderTape& tape) {
  const std::size_t n = tape.pool_cards.size();
  if (cfg.pool_aggregation == PoolAggregation::kMaskedMean) {
    const std::size_t d = src.cols();
    Tensor mean = Tensor::matrix(n, d);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& ids = tape.pool_cards[i];
      auto out = mean.row(i);
      for (CardId c : ids) {
        const auto s = src.row(index_of(c));
        for (std::size_t j = 0; j < d; ++j) out[j] += s[j];
      }
      const double inv = 1.0 / static_cast<double>(ids.size());
      for (double& v : out) v *= inv;
    }
    return dense_stack_forward(ps, "pool", cfg.pool_layers, std::move(mean), &tape.pool_stack);
  }
  Tensor out = Tensor::matrix(n, cfg.card_width);
  tape.pool_conv.assign(n, {});
  for (std::size_t i = 0; i < n; ++i) {
    const auto& ids = tape.pool_cards[i];
    Tensor x = gather_rows(src, ids, kPoolRows);
    for (std::size_t l = 0; l < cfg.pool_layers; ++l) {
      Tensor pre = nn::conv1d_forward(x, ps.at(pname("pool", l, "w")).value,
                                      ps.at(pname("pool", l, "b")).value);
      nn::LayerNormCache ln;
      Tensor normed = nn::layernorm_forward(pre, ps.at(pname("pool", l, "gain")).value,
                                            ps.at(pname("pool", l, "shift")).value, &ln);
      Tensor y = nn::elu_forward(normed);
      zero_rows_from(y, ids.size());
      tape.pool_conv[i].push_back({std::move(x), std::move(ln), std::move(normed)});
      x = std::move(y);
    }
    const Tensor pooled = nn::masked_mean_forward(x, ids.size());
    std::copy(pooled.values().begin(), pooled.values().end(), out.row(i).begin());
  }
  return out;
}

// Accumulates d(loss)/d(src) into dsrc.
void aggregate_backward(ParamStore& ps, const EncoderConfig& cfg, const EncoderTape& tape,
                        const Tensor& dagg, Tensor& dsrc) {
  const std::size_t n = tape.pool_cards.size();
  const std::size_t d = dsrc.cols();
  if (cfg.pool_aggregation == PoolAggregation::kMaskedMean) {
    const Tensor dmean = dense_stack_backward(ps, "pool", tape.pool_stack, dagg);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& ids = tape.pool_cards[i];
      const double inv = 1.0 / static_cast<double>(ids.size());
      const auto g = dmean.row(i);
      for (CardId c : ids) {
        auto out = dsrc.row(index_of(c));
        for (std::size_t j = 0; j < d; ++j) out[j] += g[j] * inv;
      }
    }
    return;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto& ids = tape.pool_cards[i];
    Tensor dy_row = Tensor::vector(dagg.cols());
    std::copy(dagg.row(i).begin(), dagg.row(i).end(), dy_row.values().begin());
    Tensor dx = nn::masked_mean_backward(dy_row, kPoolRows, ids.size());
    for (std::size_t l = tape.pool_conv[i].size(); l-- > 0;) {
      const ConvLayerTape& t = tape.pool_conv[i][l];
      zero_rows_from(dx, ids.size());
      Tensor dn = nn::elu_backward(t.normed, dx);
      Parameter& gain = ps.at(pname("pool", l, "gain"));
      Parameter& shift = ps.at(pname("pool", l, "shift"));
      Tensor dpre = nn::layernorm_backward(t.ln, gain.value, dn, gain.grad, shift.grad);
      Parameter& w = ps.at(pname("pool", l, "w"));
      Parameter& b = ps.at(pname("pool", l, "b"));
      dx = nn::conv1d_backward(t.input, w.value, dpre, w.grad, b.grad);
    }
    for (std::size_t r = 0; r < ids.size(); ++r) {
      auto out = dsrc.row(index_of(ids[r]));
      const auto g = dx.row(r);
      for (std::size_t j = 0; j < d; ++j) out[j] += g[j];
    }
  }
}

Tensor take_rows(const Tensor& x, std::size_t first, std::size_t count) {
  Tensor out = Tensor::matrix(count, x.cols());
  std::copy(x.data() + first * x.cols(), x.data() + (first + count) * x.cols(), out.data());
  return out;
}

Tensor stack_rows(const Tensor& a, const Tensor& b) {
  const std::size_t cols = a.rows() ? a.cols() : b.cols();
  Tensor out = Tensor::matrix(a.rows() + b.rows(), cols);
  std::copy(a.values().begin(), a.values().end(), out.data());
  std::copy(b.values().begin(), b.values().end(), out.data() + a.size());
  return out;
}

void add_dense_stack(ParamStore& ps, Rng& rng, std::string_view prefix, std::size_t layers,
                     std::size_t in, std::size_t width) {
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t fan_in = l == 0 ? in : width;
    ps.add_uniform(pname(prefix, l, "w"), {fan_in, width}, fan_in, rng);
    ps.add_uniform(pname(prefix, l, "b"), {width}, fan_in, rng);
    ps.add(pname(prefix, l, "gain"), Tensor::vector(width, 1.0));
    ps.add(pname(prefix, l, "shift"), Tensor::vector(width, 0.0));
  }
}

void add_conv_stack(ParamStore& ps, Rng& rng, std::size_t layers, std::size_t in,
                    std::size_t width) {
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t cin = l == 0 ? in : width;
    ps.add_uniform(pname("pool", l, "w"), {3, cin, width}, 3 * cin, rng);
    ps.add_uniform(pname("pool", l, "b"), {width}, 3 * cin, rng);
    ps.add(pname("pool", l, "gain"), Tensor::vector(width, 1.0));
    ps.add(pname("pool", l, "shift"), Tensor::vector(width, 0.0));
  }
}

void add_head(ParamStore& ps, Rng& rng, std::string_view prefix, std::size_t in, std::size_t out) {
  ps.add_uniform(pname(prefix, "w"), {in, out}, in, rng);
  ps.add_uniform(pname(prefix, "b"), {out}, in, rng);
}

}  // namespace

std::string_view to_string(Wiring w) {
  return w == Wiring::kSharedMainBlock ? "shared-main-block" : "separate-outputs";
}

std::string_view to_string(PoolAggregation a) {
  return a == PoolAggregation::kMaskedMean ? "masked-mean" : "conv1d";
}

void EncoderConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(Errc::kInvalidConfig, what); };
  if (feature_dim < 1) fail("feature_dim must be >= 1");
  if (embed_dim < 2) fail("embed_dim must be >= 2");
  if (card_layers < 1 || pool_layers < 1) fail("layer counts must be >= 1");
  if (wiring == Wiring::kSharedMainBlock && shared_layers < 1) fail("shared_layers must be >= 1");
  if (card_width < 1) fail("card_width must be >= 1");
}

std::string EncoderConfig::to_json() const {
  nlohmann::ordered_json j;
  j["feature_dim"] = feature_dim;
  j["embed_dim"] = embed_dim;
  j["card_layers"] = card_layers;
  j["card_width"] = card_width;
  j["pool_layers"] = pool_layers;
  j["shared_layers"] = shared_layers;
  j["wiring"] = std::string(to_string(wiring));
  j["pool_aggregation"] = std::string(to_string(pool_aggregation));
  j["normalize_output"] = normalize_output;
  return j.dump();
}

EncoderConfig EncoderConfig::from_json(const std::string& text) {
  EncoderConfig c;
  try {
    const auto j = nlohmann::json::parse(text);
    c.feature_dim = j.at("feature_dim").get<std::size_t>();
    c.embed_dim = j.at("embed_dim").get<std::size_t>();
    c.card_layers = j.at("card_layers").get<std::size_t>();
    c.card_width = j.at("card_width").get<std::size_t>();
    c.pool_layers = j.at("pool_layers").get<std::size_t>();
    c.shared_layers = j.at("shared_layers").get<std::size_t>();
    const auto wiring = j.at("wiring").get<std::string>();
    if (wiring == "shared-main-block") {
      c.wiring = Wiring::kSharedMainBlock;
    } else if (wiring == "separate-outputs") {
      c.wiring = Wiring::kSeparateOutputs;
    } else {
      throw Error(Errc::kInvalidConfig, "unknown wiring " + wiring);
    }
    const auto agg = j.at("pool_aggregation").get<std::string>();
    if (agg == "masked-mean") {
      c.pool_aggregation = PoolAggregation::kMaskedMean;
    } else if (agg == "conv1d") {
      c.pool_aggregation = PoolAggregation::kConv1D;
    } else {
      throw Error(Errc::kInvalidConfig, "unknown pool aggregation " + agg);
    }
    c.normalize_output = j.at("normalize_output").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::kInvalidConfig, std::string("encoder config: ") + e.what());
  }
  c.validate();
  return c;
}

EmbeddingModel::EmbeddingModel(const EncoderConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  init_params(seed);
}

EmbeddingModel::EmbeddingModel(const EncoderConfig& config, ParamStore params)
    : config_(config), params_(std::move(params)) {
  config_.validate();
  const EmbeddingModel reference(config_, 0);
  for (const auto& [name, p] : reference.params()) {
    if (!params_.contains(name)) throw Error(Errc::kBadCheckpoint, "missing tensor " + name);
    if (params_.at(name).value.shape() != p.value.shape()) {
      throw Error(Errc::kBadCheckpoint, "tensor " + name + " has the wrong shape");
    }
  }
}

void EmbeddingModel::init_params(std::uint64_t seed) {
  Rng rng(derive_seed(seed, "init"));
  const auto& c = config_;
  const std::size_t w = c.card_width;
  add_dense_stack(params_, rng, "card", c.card_layers, c.feature_dim, w);
  // Pool stack input: card-trunk rows (separate) or raw feature rows (shared).
  const std::size_t pool_in = c.wiring == Wiring::kSeparateOutputs ? w : c.feature_dim;
  if (c.pool_aggregation == PoolAggregation::kMaskedMean) {
    add_dense_stack(params_, rng, "pool", c.pool_layers, pool_in, w);
  } else {
    add_conv_stack(params_, rng, c.pool_layers, pool_in, w);
  }
  if (c.wiring == Wiring::kSeparateOutputs) {
    add_head(params_, rng, "card.out", w, c.embed_dim);
    add_head(params_, rng, "pool.out", w, c.embed_dim);
  } else {
    add_dense_stack(params_, rng, "main", c.shared_layers, w, w);
    add_head(params_, rng, "out", w, c.embed_dim);
  }
  params_.add_uniform("pool.empty", {c.embed_dim}, c.embed_dim, rng);
}

BatchEmbeddings EmbeddingModel::forward(const Tensor& card_features,
                                        std::span<const PoolView> pools) const {
  const auto& c = config_;
  if (card_features.rank() != 2 || card_features.cols() != c.feature_dim) {
    throw Error(Errc::kShapeMismatch, "card features must be [M," + std::to_string(c.feature_dim) + "]");
  }
  const std::size_t m = card_features.rows();
  auto tape = std::make_shared<EncoderTape>();
  tape->num_cards = m;
  tape->num_pools = pools.size();
  for (std::size_t i = 0; i < pools.size(); ++i) {
    if (pools[i].size() > kPoolRows) {
      throw Error(Errc::kPoolTooLarge, std::to_string(pools[i].size()) + " cards");
    }
    for (CardId id : pools[i]) {
      if (index_of(id) >= m) throw Error(Errc::kUnknownCard, "pool references card " + std::to_string(index_of(id)));
    }
    if (!pools[i].empty()) {
      tape->nonempty.push_back(i);
      tape->pool_cards.emplace_back(pools[i].begin(), pools[i].end());
    }
  }

  Tensor trunk = dense_stack_forward(params_, "card", c.card_layers, card_features, &tape->card_stack);
  Tensor cards;
  Tensor pooled;  // [N',E]
  const bool any_pool = !tape->nonempty.empty();
  if (c.wiring == Wiring::kSeparateOutputs) {
    cards = head_forward(params_, "card.out", trunk, c.normalize_output, &tape->card_head);
    if (any_pool) {
      Tensor agg = aggregate_forward(params_, c, trunk, *tape);
      pooled = head_forward(params_, "pool.out", std::move(agg), c.normalize_output, &tape->pool_head);
    }
  } else {
    Tensor pool_in = any_pool ? aggregate_forward(params_, c, card_features, *tape)
                              : Tensor::matrix(0, c.card_width);
    Tensor z = stack_rows(trunk, pool_in);
    Tensor main = dense_stack_forward(params_, "main", c.shared_layers, std::move(z), &tape->main_stack);
    Tensor out = head_forward(params_, "out", std::move(main), c.normalize_output, &tape->shared_head);
    cards = take_rows(out, 0, m);
    pooled = take_rows(out, m, tape->nonempty.size());
  }

  Tensor empty = Tensor::matrix(1, c.embed_dim);
  const Tensor& e0 = params_.at("pool.empty").value;
  std::copy(e0.values().begin(), e0.values().end(), empty.data());
  if (c.normalize_output) empty = nn::l2_normalize_rows(empty, &tape->empty_norm);
  tape->empty_output = empty;

  Tensor pool_emb = Tensor::matrix(pools.size(), c.embed_dim);
  for (std::size_t i = 0; i < pools.size(); ++i) {
    std::copy(empty.values().begin(), empty.values().end(), pool_emb.row(i).begin());
  }
  for (std::size_t k = 0; k < tape->nonempty.size(); ++k) {
    const auto src = pooled.row(k);
    std::copy(src.begin(), src.end(), pool_emb.row(tape->nonempty[k]).begin());
  }
  return {std::move(cards), std::move(pool_emb), std::move(tape)};
}

void EmbeddingModel::backward(const BatchEmbeddings& fwd, const Tensor& d_cards,
                              const Tensor& d_pools) {
  const auto& c = config_;
  const EncoderTape& tape = *fwd.tape;
  require_same_shape(fwd.cards, d_cards, "encoder backward (cards)");
  require_same_shape(fwd.pools, d_pools, "encoder backward (pools)");
  const std::size_t m = tape.num_cards;
  const std::size_t n_nonempty = tape.nonempty.size();

  // Empty-pool rows all flow into the single learned vector.
  Tensor d_empty = Tensor::matrix(1, c.embed_dim);
  std::vector<bool> is_nonempty(tape.num_pools, false);
  for (std::size_t i : tape.nonempty) is_nonempty[i] = true;
  bool any_empty = false;
  for (std::size_t i = 0; i < tape.num_pools; ++i) {
    if (is_nonempty[i]) continue;
    any_empty = true;
    const auto g = d_pools.row(i);
    for (std::size_t j = 0; j < c.embed_dim; ++j) d_empty[j] += g[j];
  }
  if (any_empty) {
    if (c.normalize_output) {
      d_empty = nn::l2_normalize_rows_backward(tape.empty_output, tape.empty_norm, d_empty);
    }
    Tensor& grad = params_.at("pool.empty").grad;
    for (std::size_t j = 0; j < c.embed_dim; ++j) grad[j] += d_empty[j];
  }

  Tensor d_pooled = Tensor::matrix(n_nonempty, c.embed_dim);
  for (std::size_t k = 0; k < n_nonempty; ++k) {
    const auto g = d_pools.row(tape.nonempty[k]);
    std::copy(g.begin(), g.end(), d_pooled.row(k).begin());
  }

  Tensor d_trunk;
  if (c.wiring == Wiring::kSeparateOutputs) {
    d_trunk = head_backward(params_, "card.out", tape.card_head, c.normalize_output, d_cards);
    if (n_nonempty > 0) {
      const Tensor d_agg = head_backward(params_, "pool.out", tape.pool_head, c.normalize_output,
                                         std::move(d_pooled));
      aggregate_backward(params_, c, tape, d_agg, d_trunk);
    }
  } else {
    const Tensor d_out = stack_rows(d_cards, d_pooled);
    Tensor d_main = head_backward(params_, "out", tape.shared_head, c.normalize_output, d_out);
    const Tensor d_z = dense_stack_backward(params_, "main", tape.main_stack, std::move(d_main));
    d_trunk = take_rows(d_z, 0, m);
    if (n_nonempty > 0) {
      const Tensor d_pool_in = take_rows(d_z, m, n_nonempty);
      // Gradients w.r.t. raw features are not needed; discard them.
      Tensor d_features = Tensor::matrix(m, c.feature_dim);
      aggregate_backward(params_, c, tape, d_pool_in, d_features);
    }
  }
  dense_stack_backward(params_, "card", tape.card_stack, std::move(d_trunk));
}

Tensor EmbeddingModel::encode_card(std::span<const double> features) const {
  if (features.size() != config_.feature_dim) {
    throw Error(Errc::kShapeMismatch, "feature row has length " + std::to_string(features.size()));
  }
  Tensor x({1, features.size()}, std::vector<double>(features.begin(), features.end()));
  const Tensor out = embed_all_cards(x);
  return Tensor({config_.embed_dim}, std::vector<double>(out.values().begin(), out.values().end()));
}

Tensor EmbeddingModel::encode_card(CardId card, const CardCatalog& catalog) const {
  if (!catalog.contains(card)) throw Error(Errc::kUnknownCard, std::to_string(index_of(card)));
  return encode_card(catalog.row(card));
}

Tensor EmbeddingModel::encode_pool(PoolView pool, const CardCatalog& catalog) const {
  const Tensor all = encode_pools(std::span<const PoolView>(&pool, 1), catalog);
  return Tensor({config_.embed_dim}, std::vector<double>(all.values().begin(), all.values().end()));
}

Tensor EmbeddingModel::encode_pools(std::span<const PoolView> pools, const CardCatalog& catalog) const {
  return forward(catalog.features(), pools).pools;
}

Tensor EmbeddingModel::embed_all_cards(const CardCatalog& catalog) const {
  return embed_all_cards(catalog.features());
}

Tensor EmbeddingModel::embed_all_cards(const Tensor& card_features) const {
  return forward(card_features, {}).cards;
}

std::vector<std::string> EmbeddingModel::card_output_params() const {
  if (config_.wiring == Wiring::kSharedMainBlock) return {"out.b", "out.w"};
  return {"card.out.b", "card.out.w"};
}

std::vector<std::string> EmbeddingModel::pool_output_params() const {
  if (config_.wiring == Wiring::kSharedMainBlock) return {"out.b", "out.w"};
  return {"pool.out.b", "pool.out.w"};
}

}  // namespace cpr
