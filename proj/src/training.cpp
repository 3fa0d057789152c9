#include "cpr/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "cpr/checkpoint.hpp"
#include "cpr/error.hpp"
#include "cpr/evaluation.hpp"
#include "cpr/ingest.hpp"
#include "cpr/params.hpp"
#include "cpr/rng.hpp"

namespace cpr {
namespace {

using Json = nlohmann::ordered_json;

constexpr const char* kCheckpointKind = "cpr-model";

Json config_json(const TrainConfig& c) {
  Json j;
  j["loss"] = std::string(to_string(c.loss));
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["seed"] = c.seed;
  j["learning_rate"] = c.learning_rate;
  j["eval_every"] = c.eval_every;
  j["all_mining_divisor"] = c.all_mining_divisor;
  j["temperature"] = c.loss_config.temperature;
  j["margin"] = c.loss_config.margin;
  j["sigmoid_t"] = c.loss_config.sigmoid_t;
  j["sigmoid_b"] = c.loss_config.sigmoid_b;
  j["encoder"] = Json::parse(c.encoder.to_json());
  return j;
}

TrainConfig config_from(const Json& j) {
  TrainConfig c;
  const auto loss = parse_loss(j.at("loss").get<std::string>());
  if (!loss) throw Error(Errc::kInvalidConfig, "unknown loss " + j.at("loss").get<std::string>());
  c.loss = *loss;
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.eval_every = j.at("eval_every").get<std::size_t>();
  c.all_mining_divisor = j.at("all_mining_divisor").get<std::size_t>();
  c.loss_config.temperature = j.at("temperature").get<double>();
  c.loss_config.margin = j.at("margin").get<double>();
  c.loss_config.sigmoid_t = j.at("sigmoid_t").get<double>();
  c.loss_config.sigmoid_b = j.at("sigmoid_b").get<double>();
  c.encoder = EncoderConfig::from_json(j.at("encoder").dump());
  return c;
}

struct Header {
  TrainConfig config;
  std::size_t epochs_done = 0;
};

Header parse_header(const std::string& text) {
  try {
    const auto j = Json::parse(text);
    if (j.at("kind").get<std::string>() != kCheckpointKind) throw Error(Errc::kBadCheckpoint, "not a model checkpoint");
    return {config_from(j.at("train")), j.at("epochs_done").get<std::size_t>()};
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::kBadCheckpoint, std::string("bad checkpoint header: ") + e.what());
  }
}

EmbeddingModel fresh_model(const TrainConfig& config) {
  EmbeddingModel model(config.encoder, config.seed);
  if (config.loss == LossKind::kSigmoidInfoNce) {
    model.params().add(kSigmoidT, Tensor::vector(1, config.loss_config.sigmoid_t));
    model.params().add(kSigmoidB, Tensor::vector(1, config.loss_config.sigmoid_b));
  }
  return model;
}

TrainConfig resolved(TrainConfig config, std::size_t feature_dim) {
  config.encoder = encoder_for(config, feature_dim);
  config.validate();
  return config;
}

}  // namespace

EncoderConfig encoder_for(const TrainConfig& config, std::size_t feature_dim) {
  EncoderConfig e = config.encoder;
  e.feature_dim = feature_dim;
  e.wiring = default_wiring(config.loss);
  return e;
}

std::size_t TrainConfig::effective_batch_size() const {
  if (loss != LossKind::kTripletAll) return batch_size;
  return std::max<std::size_t>(1, batch_size / all_mining_divisor);
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw Error(Errc::kInvalidConfig, "batch_size must be >= 1");
  if (epochs < 1) throw Error(Errc::kInvalidConfig, "epochs must be >= 1");
  if (all_mining_divisor < 1) throw Error(Errc::kInvalidConfig, "all_mining_divisor must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw Error(Errc::kInvalidConfig, "learning rate must be finite and >= 0");
  }
  if (!(loss_config.temperature > 0.0)) throw Error(Errc::kInvalidConfig, "temperature must be > 0");
  if (!(loss_config.margin >= 0.0)) throw Error(Errc::kInvalidConfig, "margin must be >= 0");
  encoder.validate();
}

std::string train_config_to_json(const TrainConfig& config) { return config_json(config).dump(); }

TrainConfig train_config_from_json(const std::string& text) {
  try {
    return config_from(Json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::kInvalidConfig, std::string("bad training config: ") + e.what());
  }
}

Trainer::Trainer(const Dataset& dataset, TrainConfig config)
    : Trainer(dataset, resolved(config, dataset.catalog.feature_dim()),
              fresh_model(resolved(config, dataset.catalog.feature_dim())), 0) {}

Trainer::Trainer(const Dataset& dataset, TrainConfig config, EmbeddingModel model, std::size_t epochs_done)
    : dataset_(dataset),
      config_(std::move(config)),
      model_(std::move(model)),
      train_(dataset.partition(Partition::kTrain)),
      test_(dataset.partition(Partition::kTest)),
      epochs_done_(epochs_done) {
  if (config_.encoder.feature_dim != dataset.catalog.feature_dim()) {
    throw Error(Errc::kShapeMismatch, "model expects " + std::to_string(config_.encoder.feature_dim) +
                                          " features, dataset has " + std::to_string(dataset.catalog.feature_dim()));
  }
  if (train_.empty()) throw Error(Errc::kEmptyDataset, "no training decisions");
}

Trainer Trainer::resume(const Dataset& dataset, const std::string& checkpoint_path) {
  LoadedModel loaded = load_model(checkpoint_path);
  return Trainer(dataset, loaded.config, std::move(loaded.model), loaded.epochs_done);
}

std::vector<std::vector<std::size_t>> Trainer::epoch_batches(std::size_t epoch) const {
  std::vector<std::size_t> order(train_.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(config_.seed, "shuffle", epoch));
  rng.shuffle(order);
  const std::size_t b = config_.effective_batch_size();
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += b) {
    const std::size_t end = std::min(order.size(), start + b);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  // A one-row tail would leave pair losses without negatives.
  if (batches.size() > 1 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back().front());
    batches.pop_back();
  }
  return batches;
}

EpochReport Trainer::train_epoch() {
  const std::size_t epoch = epochs_done_ + 1;
  const auto batches = epoch_batches(epoch);
  Rng mining_rng(derive_seed(config_.seed, "mining", epoch));
  const SgdConfig sgd{config_.learning_rate};
  const bool sigmoid = config_.loss == LossKind::kSigmoidInfoNce;
  const Tensor& features = dataset_.catalog.features();

  EpochReport report;
  report.epoch = epoch;
  double loss_sum = 0.0;
  const auto start = std::chrono::steady_clock::now();
  std::vector<Decision> batch;
  std::vector<PoolView> pools;
  for (std::size_t bi = 0; bi < batches.size(); ++bi) {
    batch.clear();
    pools.clear();
    for (std::size_t i : batches[bi]) batch.push_back(train_[i]);
    for (const auto& d : batch) pools.emplace_back(d.pool);

    const BatchEmbeddings fwd = model_.forward(features, pools);
    const double t = sigmoid ? model_.params().at(kSigmoidT).value[0] : 0.0;
    const double b = sigmoid ? model_.params().at(kSigmoidB).value[0] : 0.0;
    const BatchLoss out = batch_loss(config_.loss, config_.loss_config, fwd.cards, fwd.pools, batch, mining_rng, t, b);
    if (!std::isfinite(out.loss)) {
      std::ostringstream msg;
      msg << "epoch " << epoch << " batch " << bi << " (" << batch.size() << " decisions, first draft "
          << batch.front().draft_id << " pick " << batch.front().pick_number << ") loss " << out.loss;
      throw Error(Errc::kNonFiniteLoss, msg.str());
    }
    model_.backward(fwd, out.d_cards, out.d_pools);
    if (sigmoid) {
      model_.params().at(kSigmoidT).grad[0] += out.d_t;
      model_.params().at(kSigmoidB).grad[0] += out.d_b;
    }
    sgd_step(model_.params(), sgd);
    loss_sum += out.loss;
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  report.batches = batches.size();
  report.mean_loss = loss_sum / static_cast<double>(batches.size());
  epochs_done_ = epoch;

  const bool last = epoch == config_.epochs;
  const bool scheduled = config_.eval_every > 0 && epoch % config_.eval_every == 0;
  if ((scheduled || last) && !test_.empty()) report.top1 = evaluate();
  return report;
}

std::vector<EpochReport> Trainer::train() {
  std::vector<EpochReport> reports;
  while (epochs_done_ < config_.epochs) reports.push_back(train_epoch());
  return reports;
}

double Trainer::evaluate() const {
  if (test_.empty()) throw Error(Errc::kEmptyInput, "no held-out decisions");
  return top1_accuracy(model_, dataset_.catalog, test_).top1;
}

void Trainer::save(const std::string& path) const {
  Json header;
  header["kind"] = kCheckpointKind;
  header["train"] = config_json(config_);
  header["epochs_done"] = epochs_done_;
  const std::filesystem::path parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  save_checkpoint(path, model_.params(), header.dump());
}

LoadedModel load_model(const std::string& checkpoint_path) {
  Checkpoint ckpt = load_checkpoint(checkpoint_path);
  const Header h = parse_header(ckpt.header);
  EmbeddingModel model(h.config.encoder, std::move(ckpt.params));
  if (h.config.loss == LossKind::kSigmoidInfoNce &&
      (!model.params().contains(kSigmoidT) || !model.params().contains(kSigmoidB))) {
    throw Error(Errc::kBadCheckpoint, "sigmoid checkpoint lacks its temperature and bias");
  }
  return {h.config, std::move(model), h.epochs_done};
}

std::vector<ExperimentRow> run_experiment(const Dataset& dataset, const std::vector<TrainConfig>& configs) {
  std::vector<ExperimentRow> rows;
  for (const auto& cfg : configs) {
    Trainer trainer(dataset, cfg);
    const auto reports = trainer.train();
    double seconds = 0.0;
    for (const auto& r : reports) seconds += r.seconds;
    const auto test = dataset.partition(Partition::kTest);
    const EvalReport eval = top1_accuracy(trainer.model(), dataset.catalog, test);
    ExperimentRow row;
    row.method = std::string(to_string(cfg.loss));
    row.top1_accuracy = eval.top1;
    row.mean_rank = eval.mean_rank;
    row.final_loss = reports.back().mean_loss;
    row.seconds_per_epoch = seconds / static_cast<double>(reports.size());
    row.epochs = cfg.epochs;
    row.seed = cfg.seed;
    rows.push_back(row);
  }
  return rows;
}

void write_results(std::ostream& out, const std::vector<ExperimentRow>& rows) {
  out << "method,top1_accuracy,epochs,seed,mean_rank,final_loss\n";
  for (const auto& r : rows) {
    out << r.method << ',' << format_double(r.top1_accuracy) << ',' << r.epochs << ',' << r.seed << ','
        << format_double(r.mean_rank) << ',' << format_double(r.final_loss) << '\n';
  }
}

void write_timing(std::ostream& out, const std::vector<ExperimentRow>& rows) {
  out << "method,seconds_per_epoch\n";
  for (const auto& r : rows) out << r.method << ',' << format_double(r.seconds_per_epoch) << '\n';
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double to_double(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) throw Error(Errc::kMalformed, "bad number '" + s + "' in results file");
  return v;
}

}  // namespace

std::vector<ExperimentRow> read_results(std::istream& results, std::istream* timing) {
  std::string line;
  if (!std::getline(results, line) || line != "method,top1_accuracy,epochs,seed,mean_rank,final_loss") {
    throw Error(Errc::kMalformed, "results file header mismatch");
  }
  std::vector<ExperimentRow> rows;
  while (std::getline(results, line)) {
    if (line.empty()) continue;
    const auto f = split_line(line);
    if (f.size() != 6) throw Error(Errc::kMalformed, "results row needs 6 fields: " + line);
    ExperimentRow r;
    r.method = f[0];
    r.top1_accuracy = to_double(f[1]);
    r.epochs = static_cast<std::size_t>(std::stoull(f[2]));
    r.seed = std::stoull(f[3]);
    r.mean_rank = to_double(f[4]);
    r.final_loss = to_double(f[5]);
    rows.push_back(r);
  }
  if (timing) {
    if (!std::getline(*timing, line) || line != "method,seconds_per_epoch") {
      throw Error(Errc::kMalformed, "timing file header mismatch");
    }
    std::size_t i = 0;
    while (std::getline(*timing, line)) {
      if (line.empty()) continue;
      const auto f = split_line(line);
      if (f.size() != 2 || i >= rows.size() || f[0] != rows[i].method) {
        throw Error(Errc::kMalformed, "timing row does not match results: " + line);
      }
      rows[i++].seconds_per_epoch = to_double(f[1]);
    }
  }
  return rows;
}

std::string format_table(const std::vector<ExperimentRow>& rows, double chance) {
  std::ostringstream out;
  out << std::left << std::setw(20) << "method" << std::right << std::setw(16) << "top-1 accuracy" << std::setw(12)
      << "mean rank" << std::setw(16) << "time/epoch (s)" << '\n';
  out << std::fixed;
  for (const auto& r : rows) {
    out << std::left << std::setw(20) << r.method << std::right << std::setw(15) << std::setprecision(2)
        << r.top1_accuracy * 100.0 << '%' << std::setw(12) << std::setprecision(3) << r.mean_rank << std::setw(16)
        << std::setprecision(3) << r.seconds_per_epoch << '\n';
  }
  out << "chance baseline: " << std::setprecision(2) << chance * 100.0 << "%\n";
  return out.str();
}

}  // namespace cpr
