#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cpr/domain.hpp"
#include "cpr/encoders.hpp"
#include "cpr/losses.hpp"

namespace cpr {

struct TrainConfig {
  LossKind loss = LossKind::kContextualInfoNce;
  std::size_t batch_size = 512;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  double learning_rate = 3e-4;
  std::size_t eval_every = 1;  // 0: evaluate after the last epoch only
  std::size_t all_mining_divisor = 10;
  LossConfig loss_config;
  EncoderConfig encoder;  // feature_dim and wiring are filled from the data and loss

  // triplet-all trains on batch_size / all_mining_divisor decisions per step.
  std::size_t effective_batch_size() const;
  // Throws kInvalidConfig.
  void validate() const;
};

struct EpochReport {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;
  std::optional<double> top1;  // held-out accuracy when evaluated
  double seconds = 0.0;        // training only, evaluation excluded
  std::size_t batches = 0;
};

inline constexpr const char* kSigmoidT = "loss.sigmoid.t";
inline constexpr const char* kSigmoidB = "loss.sigmoid.b";

class Trainer {
 public:
  // Fresh model; the initialization depends on the seed and architecture only.
  Trainer(const Dataset& dataset, TrainConfig config);

  // Restores the model and epoch counter written by save(). The config's
  // loss, seed and encoder must match the checkpoint.
  static Trainer resume(const Dataset& dataset, const std::string& checkpoint_path);

  EpochReport train_epoch();
  // Runs the remaining epochs up to config.epochs.
  std::vector<EpochReport> train();

  double evaluate() const;

  void save(const std::string& path) const;

  const EmbeddingModel& model() const { return model_; }
  EmbeddingModel& model() { return model_; }
  const TrainConfig& config() const { return config_; }
  std::size_t epochs_done() const { return epochs_done_; }

 private:
  Trainer(const Dataset& dataset, TrainConfig config, EmbeddingModel model, std::size_t epochs_done);
  std::vector<std::vector<std::size_t>> epoch_batches(std::size_t epoch) const;

  const Dataset& dataset_;
  TrainConfig config_;
  EmbeddingModel model_;
  std::vector<Decision> train_;
  std::vector<Decision> test_;
  std::size_t epochs_done_ = 0;
};

EncoderConfig encoder_for(const TrainConfig& config, std::size_t feature_dim);

std::string train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const std::string& text);

// A model loaded from a checkpoint written by Trainer::save.
struct LoadedModel {
  TrainConfig config;
  EmbeddingModel model;
  std::size_t epochs_done = 0;
};
LoadedModel load_model(const std::string& checkpoint_path);

struct ExperimentRow {
  std::string method;
  double top1_accuracy = 0.0;
  double mean_rank = 0.0;
  double final_loss = 0.0;
  double seconds_per_epoch = 0.0;
  std::size_t epochs = 0;
  std::uint64_t seed = 0;
  bool operator==(const ExperimentRow&) const = default;
};

// Trains every config on the dataset's train split from its own seed and
// reports held-out accuracy.
std::vector<ExperimentRow> run_experiment(const Dataset& dataset, const std::vector<TrainConfig>& configs);

// results.csv holds the deterministic columns
// (method,top1_accuracy,epochs,seed,mean_rank,final_loss); wall times go to
// timing.csv (method,seconds_per_epoch) so reruns compare byte for byte.
void write_results(std::ostream& out, const std::vector<ExperimentRow>& rows);
void write_timing(std::ostream& out, const std::vector<ExperimentRow>& rows);
// Reads results.csv and, when given, timing.csv back into rows.
std::vector<ExperimentRow> read_results(std::istream& results, std::istream* timing = nullptr);

// Fixed-width table for stdout.
std::string format_table(const std::vector<ExperimentRow>& rows, double chance);

}  // namespace cpr
