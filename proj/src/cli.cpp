#include "cpr/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "cpr/draft_sim.hpp"
#include "cpr/error.hpp"
#include "cpr/evaluation.hpp"
#include "cpr/ingest.hpp"
#include "cpr/service.hpp"
#include "cpr/training.hpp"

namespace cpr {
namespace {

namespace fs = std::filesystem;

struct Options {
  std::string data;
  std::string out;
  std::string loss = "contextual-infonce";
  std::size_t epochs = 10;
  std::size_t batch_size = 512;
  double lr = 3e-4;
  std::uint64_t seed = 0;
  std::string checkpoint;
  std::string resume;
  int port = 8080;
  std::string host = "0.0.0.0";
  std::size_t players = 8;
  std::size_t eval_every = 1;

  // synthetic data
  std::size_t cards = 200;
  std::size_t feature_dim = 32;
  std::size_t drafts = 50;
  std::size_t rank = 8;
  double noise = kDefaultSyntheticNoise;
  double ratio = 0.8;

  // ingest
  std::string features;
  std::string log;

  // rank
  std::string pool;
  std::string pack;
};

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::kIo, "cannot write " + path.string());
  return f;
}

SyntheticSpec synthetic_spec(const Options& o) {
  SyntheticSpec s;
  s.cards = o.cards;
  s.feature_dim = o.feature_dim;
  s.players = o.players;
  s.drafts = o.drafts;
  s.rank = o.rank;
  s.noise = o.noise;
  s.seed = o.seed;
  return s;
}

Dataset load_data(const Options& o) {
  if (o.data.empty()) throw Error(Errc::kInvalidConfig, "--data is required");
  if (o.data == "synthetic") {
    SyntheticData syn = generate_synthetic(synthetic_spec(o));
    return split_dataset(std::move(syn.catalog), std::move(syn.decisions), o.ratio, o.seed);
  }
  return load_dataset(o.data);
}

TrainConfig train_config(const Options& o) {
  TrainConfig c;
  const auto loss = parse_loss(o.loss);
  if (!loss) throw Error(Errc::kInvalidConfig, "unknown loss " + o.loss);
  c.loss = *loss;
  c.epochs = o.epochs;
  c.batch_size = o.batch_size;
  c.learning_rate = o.lr;
  c.seed = o.seed;
  c.eval_every = o.eval_every;
  return c;
}

std::vector<CardId> parse_cards(const std::string& list, const CardCatalog& catalog) {
  std::vector<CardId> out;
  if (list.empty()) return out;
  std::stringstream ss(list);
  std::string name;
  while (std::getline(ss, name, ';')) out.push_back(catalog.id_of(name));
  return out;
}

void print_summary(std::ostream& out, const Dataset& ds) {
  const auto train = ds.partition(Partition::kTrain);
  const auto test = ds.partition(Partition::kTest);
  out << "cards " << ds.catalog.size() << ", features " << ds.catalog.feature_dim() << ", decisions "
      << ds.decisions.size() << " (train " << train.size() << ", test " << test.size() << ")\n";
}

int cmd_ingest(const Options& o, std::ostream& out) {
  if (o.features.empty() || o.log.empty() || o.out.empty()) {
    throw Error(Errc::kInvalidConfig, "ingest needs --features, --log and --out");
  }
  CardCatalog catalog = parse_feature_file(o.features);
  DraftLog log = parse_draft_log_file(o.log, catalog);
  Dataset ds = split_dataset(std::move(catalog), std::move(log.decisions), o.ratio, o.seed);
  save_dataset(o.out, ds);
  print_summary(out, ds);
  out << "dropped single-card records: " << log.dropped_single << '\n';
  return 0;
}

int cmd_synth(const Options& o, std::ostream& out) {
  if (o.out.empty()) throw Error(Errc::kInvalidConfig, "synth needs --out");
  SyntheticData syn = generate_synthetic(synthetic_spec(o));
  PlantedScorer oracle(syn.utility);
  const double oracle_top1 = top1_accuracy(oracle, syn.decisions).top1;
  Dataset ds = split_dataset(std::move(syn.catalog), std::move(syn.decisions), o.ratio, o.seed);
  save_dataset(o.out, ds);
  print_summary(out, ds);
  out << "planted oracle top-1: " << std::fixed << std::setprecision(4) << oracle_top1 << '\n';
  return 0;
}

int cmd_train(const Options& o, std::ostream& out) {
  const Dataset ds = load_data(o);
  std::unique_ptr<Trainer> trainer;
  if (!o.resume.empty()) {
    trainer = std::make_unique<Trainer>(Trainer::resume(ds, o.resume));
  } else {
    trainer = std::make_unique<Trainer>(ds, train_config(o));
  }
  print_summary(out, ds);
  out << "loss " << to_string(trainer->config().loss) << ", chance " << std::fixed << std::setprecision(4)
      << chance_baseline(ds.partition(Partition::kTest)) << '\n';
  std::vector<EpochReport> reports;
  while (trainer->epochs_done() < trainer->config().epochs) {
    reports.push_back(trainer->train_epoch());
    const auto& r = reports.back();
    out << "epoch " << r.epoch << "  loss " << std::setprecision(6) << r.mean_loss;
    if (r.top1) out << "  top1 " << std::setprecision(4) << *r.top1;
    out << "  " << std::setprecision(3) << r.seconds << "s\n";
  }
  if (!o.checkpoint.empty()) {
    trainer->save(o.checkpoint);
    out << "checkpoint: " << o.checkpoint << '\n';
  }
  if (!o.out.empty() && !reports.empty()) {
    const auto test = ds.partition(Partition::kTest);
    const EvalReport eval = top1_accuracy(trainer->model(), ds.catalog, test);
    ExperimentRow row;
    row.method = std::string(to_string(trainer->config().loss));
    row.top1_accuracy = eval.top1;
    row.mean_rank = eval.mean_rank;
    row.final_loss = reports.back().mean_loss;
    double seconds = 0.0;
    for (const auto& r : reports) seconds += r.seconds;
    row.seconds_per_epoch = seconds / static_cast<double>(reports.size());
    row.epochs = trainer->config().epochs;
    row.seed = trainer->config().seed;
    auto results = open_out(fs::path(o.out) / "results.csv");
    write_results(results, {row});
    auto timing = open_out(fs::path(o.out) / "timing.csv");
    write_timing(timing, {row});
    auto epochs = open_out(fs::path(o.out) / "epochs.csv");
    epochs << "epoch,mean_loss,top1_accuracy\n";
    for (const auto& r : reports) {
      epochs << r.epoch << ',' << format_double(r.mean_loss) << ',' << (r.top1 ? format_double(*r.top1) : "") << '\n';
    }
  }
  return 0;
}

int cmd_eval(const Options& o, std::ostream& out) {
  if (o.checkpoint.empty()) throw Error(Errc::kInvalidConfig, "eval needs --checkpoint");
  const Dataset ds = load_data(o);
  const LoadedModel loaded = load_model(o.checkpoint);
  const auto test = ds.partition(Partition::kTest);
  const EvalReport r = top1_accuracy(loaded.model, ds.catalog, test);
  out << "method " << to_string(loaded.config.loss) << ", decisions " << r.n_decisions << '\n'
      << std::fixed << std::setprecision(4) << "top1 " << r.top1 << ", mean rank " << r.mean_rank << ", chance "
      << chance_baseline(test) << '\n';
  out << std::setw(10) << "pack size" << std::setw(12) << "decisions" << std::setw(10) << "top1" << '\n';
  for (const auto& [size, s] : r.by_pack_size) {
    out << std::setw(10) << size << std::setw(12) << s.decisions << std::setw(10) << s.accuracy() << '\n';
  }
  if (!o.out.empty()) {
    auto f = open_out(fs::path(o.out) / "eval.csv");
    f << "method,top1_accuracy,epochs,seed,mean_rank,n_decisions,pack_size\n";
    const std::string method(to_string(loaded.config.loss));
    auto line = [&](double top1, double mean_rank, std::size_t n, const std::string& pack) {
      f << method << ',' << format_double(top1) << ',' << loaded.epochs_done << ',' << loaded.config.seed << ','
        << format_double(mean_rank) << ',' << n << ',' << pack << '\n';
    };
    line(r.top1, r.mean_rank, r.n_decisions, "all");
    for (const auto& [size, s] : r.by_pack_size) line(s.accuracy(), s.mean_rank(), s.decisions, std::to_string(size));
  }
  return 0;
}

int cmd_rank(const Options& o, std::ostream& out) {
  if (o.checkpoint.empty()) throw Error(Errc::kInvalidConfig, "rank needs --checkpoint");
  const Dataset ds = load_data(o);
  const LoadedModel loaded = load_model(o.checkpoint);
  const auto pool = parse_cards(o.pool, ds.catalog);
  const auto pack = parse_cards(o.pack, ds.catalog);
  const Prediction p = predict_pick(loaded.model, ds.catalog, pool, pack);
  std::vector<std::size_t> order(pack.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (p.scores[a] != p.scores[b]) return p.scores[a] > p.scores[b];
    return index_of(pack[a]) < index_of(pack[b]);
  });
  out << std::fixed << std::setprecision(6);
  for (std::size_t r = 0; r < order.size(); ++r) {
    out << std::setw(3) << r + 1 << "  " << std::setw(10) << p.scores[order[r]] << "  " << ds.catalog.name(pack[order[r]])
        << '\n';
  }
  return 0;
}

int cmd_simulate(const Options& o, std::ostream& out) {
  const Dataset ds = load_data(o);
  std::vector<PickPolicy> policies;
  std::shared_ptr<const EmbeddingModel> model;
  std::shared_ptr<const PickScorer> scorer;
  if (!o.checkpoint.empty()) {
    model = std::make_shared<EmbeddingModel>(load_model(o.checkpoint).model);
    scorer = std::make_shared<ModelScorer>(*model, ds.catalog);
  }
  std::vector<Decision> decisions;
  for (std::size_t d = 0; d < o.drafts; ++d) {
    policies.clear();
    for (std::size_t s = 0; s < o.players; ++s) {
      if (scorer) {
        policies.emplace_back(GreedyModelPolicy{scorer});
      } else {
        policies.emplace_back(RandomPolicy{derive_seed(o.seed, "seat", d * o.players + s)});
      }
    }
    DraftResult r = run_draft(ds.catalog, policies, derive_seed(o.seed, "draft", d), d * o.players);
    for (auto& dec : r.decisions) decisions.push_back(std::move(dec));
  }
  out << "simulated " << o.drafts << " draft(s), " << o.players << " seats, " << decisions.size()
      << " decisions, bots: " << (scorer ? "greedy model" : "random") << '\n';
  if (!o.out.empty()) {
    auto f = open_out(fs::path(o.out) / "transcript.csv");
    write_draft_log(f, ds.catalog, decisions);
  }
  return 0;
}

int cmd_compare(const Options& o, std::ostream& out) {
  const Dataset ds = load_data(o);
  std::vector<TrainConfig> configs;
  for (LossKind kind : kAllLosses) {
    Options each = o;
    each.loss = std::string(to_string(kind));
    TrainConfig c = train_config(each);
    c.eval_every = 0;
    configs.push_back(c);
  }
  print_summary(out, ds);
  const auto rows = run_experiment(ds, configs);
  out << format_table(rows, chance_baseline(ds.partition(Partition::kTest)));
  if (!o.out.empty()) {
    auto results = open_out(fs::path(o.out) / "results.csv");
    write_results(results, rows);
    auto timing = open_out(fs::path(o.out) / "timing.csv");
    write_timing(timing, rows);
  }
  return 0;
}

int cmd_serve(const Options& o, std::ostream& out) {
  const Dataset ds = load_data(o);
  auto catalog = std::make_shared<const CardCatalog>(ds.catalog);
  std::shared_ptr<const EmbeddingModel> model;
  if (!o.checkpoint.empty()) model = std::make_shared<const EmbeddingModel>(load_model(o.checkpoint).model);
  AdvisorService service(catalog, model, o.checkpoint.empty() ? "" : fs::path(o.checkpoint).filename().string());
  out << "serving on " << o.host << ':' << o.port << (model ? "" : " (no model loaded)") << std::endl;
  serve_http(service, o.host, o.port);
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Contextual preference ranking for card drafts", "cpr"};
  app.set_config("--config", "", "TOML/INI file with option defaults; flags win");
  app.require_subcommand(1);
  Options o;

  auto add_seed = [&](CLI::App* c) { c->add_option("--seed", o.seed, "Master RNG seed")->capture_default_str(); };
  auto add_data = [&](CLI::App* c) {
    c->add_option("--data", o.data, "Dataset directory, or 'synthetic'");
    c->add_option("--cards", o.cards, "Synthetic catalog size")->capture_default_str();
    c->add_option("--feature-dim", o.feature_dim, "Synthetic feature dimension")->capture_default_str();
    c->add_option("--drafts", o.drafts, "Synthetic (or simulated) draft count")->capture_default_str();
    c->add_option("--rank", o.rank, "Synthetic latent dimension")->capture_default_str();
    c->add_option("--noise", o.noise, "Synthetic choice temperature")->capture_default_str();
    c->add_option("--ratio", o.ratio, "Train fraction of drafts")->capture_default_str();
    c->add_option("--players", o.players, "Seats per draft")->capture_default_str();
  };
  auto add_train = [&](CLI::App* c) {
    c->add_option("--epochs", o.epochs, "Training epochs")->capture_default_str();
    c->add_option("--batch-size", o.batch_size, "Decisions per batch")->capture_default_str();
    c->add_option("--lr", o.lr, "SGD learning rate")->capture_default_str();
  };

  auto* ingest = app.add_subcommand("ingest", "Parse a feature file and draft log into a dataset directory");
  ingest->add_option("--features", o.features, "Feature CSV (name,f0,...)");
  ingest->add_option("--log", o.log, "Draft log CSV (draft_id,pick_number,pack,pool,picked)");
  ingest->add_option("--out", o.out, "Dataset directory to write");
  ingest->add_option("--ratio", o.ratio, "Train fraction of drafts")->capture_default_str();
  add_seed(ingest);

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset directory");
  add_data(synth);
  synth->add_option("--out", o.out, "Dataset directory to write");
  add_seed(synth);

  auto* train = app.add_subcommand("train", "Train one method");
  add_data(train);
  add_train(train);
  train->add_option("--loss", o.loss, "standard-infonce | sigmoid-infonce | contextual-infonce | triplet-random | "
                                      "triplet-hard | triplet-all")
      ->capture_default_str();
  train->add_option("--checkpoint", o.checkpoint, "Write the trained model here");
  train->add_option("--resume", o.resume, "Continue from this checkpoint");
  train->add_option("--eval-every", o.eval_every, "Evaluate every N epochs (0: last only)")->capture_default_str();
  train->add_option("--out", o.out, "Directory for results.csv, timing.csv, epochs.csv");
  add_seed(train);

  auto* eval = app.add_subcommand("eval", "Held-out top-1 accuracy of a checkpoint");
  add_data(eval);
  eval->add_option("--checkpoint", o.checkpoint, "Model checkpoint");
  eval->add_option("--out", o.out, "Directory for eval.csv");
  add_seed(eval);

  auto* rank = app.add_subcommand("rank", "Rank a pack given a pool");
  add_data(rank);
  rank->add_option("--checkpoint", o.checkpoint, "Model checkpoint");
  rank->add_option("--pool", o.pool, "';'-separated card names");
  rank->add_option("--pack", o.pack, "';'-separated card names");
  add_seed(rank);

  auto* simulate = app.add_subcommand("simulate", "Run bot drafts and write their transcript");
  add_data(simulate);
  simulate->add_option("--checkpoint", o.checkpoint, "Model for greedy bots (random bots without it)");
  simulate->add_option("--out", o.out, "Directory for transcript.csv");
  add_seed(simulate);

  auto* compare = app.add_subcommand("compare", "Train all six methods and report the comparison");
  add_data(compare);
  add_train(compare);
  compare->add_option("--out", o.out, "Directory for results.csv and timing.csv");
  add_seed(compare);

  auto* serve = app.add_subcommand("serve", "HTTP ranking and draft service");
  add_data(serve);
  serve->add_option("--checkpoint", o.checkpoint, "Model checkpoint");
  serve->add_option("--port", o.port, "Port")->capture_default_str();
  serve->add_option("--host", o.host, "Bind address")->capture_default_str();
  add_seed(serve);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << app.help();
    return 2;
  }

  try {
    if (*ingest) return cmd_ingest(o, out);
    if (*synth) return cmd_synth(o, out);
    if (*train) return cmd_train(o, out);
    if (*eval) return cmd_eval(o, out);
    if (*rank) return cmd_rank(o, out);
    if (*simulate) return cmd_simulate(o, out);
    if (*compare) return cmd_compare(o, out);
    if (*serve) return cmd_serve(o, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: Internal: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace cpr
