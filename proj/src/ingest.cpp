#include "cpr/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string_view>

#include "cpr/draft_sim.hpp"
#include "cpr/error.hpp"
#include "cpr/rng.hpp"

namespace cpr {
namespace {

struct Row {
  std::size_t line = 0;
  std::vector<std::string> fields;
};

// RFC 4180 reader: quoted fields may hold commas, quotes ("") and newlines.
class CsvReader {
 public:
  CsvReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  bool next(Row& row) {
    row.fields.clear();
    int c = in_.get();
    if (c == EOF) return false;
    row.line = ++line_;
    std::string field;
    bool quoted = false;
    bool was_quoted = false;
    for (;; c = in_.get()) {
      if (quoted) {
        if (c == EOF) fail(row.fields.size() + 1, "unterminated quoted field");
        if (c == '"') {
          if (in_.peek() == '"') {
            field.push_back('"');
            in_.get();
          } else {
            quoted = false;
          }
        } else {
          if (c == '\n') ++line_;
          field.push_back(static_cast<char>(c));
        }
        continue;
      }
      if (c == '"' && field.empty() && !was_quoted) {
        quoted = was_quoted = true;
      } else if (c == ',') {
        row.fields.push_back(std::move(field));
        field.clear();
        was_quoted = false;
      } else if (c == '\n' || c == EOF) {
        if (!field.empty() && field.back() == '\r') field.pop_back();
        row.fields.push_back(std::move(field));
        return true;
      } else if (was_quoted && c != '\r') {
        fail(row.fields.size() + 1, "text after closing quote");
      } else {
        field.push_back(static_cast<char>(c));
      }
    }
  }

  [[noreturn]] void fail(std::size_t column, const std::string& what, Errc code = Errc::kMalformed) const {
    throw Error(code, source_ + ": line " + std::to_string(line_) + ", column " + std::to_string(column) + ": " +
                          what);
  }
  const std::string& source() const { return source_; }

 private:
  std::istream& in_;
  std::string source_;
  std::size_t line_ = 0;
};

[[noreturn]] void fail_at(const CsvReader& r, const Row& row, std::size_t column, const std::string& what,
                          Errc code) {
  throw Error(code, r.source() + ": line " + std::to_string(row.line) + ", column " + std::to_string(column) +
                        ": " + what);
}

void write_field(std::ostream& out, std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) {
    out << s;
    return;
  }
  out << '"';
  for (char c : s) {
    if (c == '"') out << '"';
    out << c;
  }
  out << '"';
}

template <class T>
bool parse_uint(std::string_view s, T& out) {
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size() && !s.empty();
}

std::vector<std::string_view> split_names(std::string_view s) {
  std::vector<std::string_view> out;
  if (s.empty()) return out;
  std::size_t start = 0;
  for (;;) {
    const auto at = s.find(';', start);
    out.push_back(s.substr(start, at - start));
    if (at == std::string_view::npos) return out;
    start = at + 1;
  }
}

std::string join_names(const CardCatalog& catalog, std::span<const CardId> cards) {
  std::string out;
  for (std::size_t i = 0; i < cards.size(); ++i) {
    const std::string& name = catalog.name(cards[i]);
    if (name.find(';') != std::string::npos) {
      throw Error(Errc::kMalformed, "card name '" + name + "' contains ';' and cannot appear in a draft log");
    }
    if (i) out.push_back(';');
    out += name;
  }
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kIo, "cannot open " + path);
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::kIo, "cannot write " + path);
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

CardCatalog parse_features(std::istream& in, const std::string& source) {
  CsvReader reader(in, source);
  Row row;
  if (!reader.next(row)) throw Error(Errc::kMalformed, source + ": empty feature file");
  if (row.fields.size() < 2 || row.fields[0] != "name") {
    fail_at(reader, row, 1, "header must be name,f0,f1,...", Errc::kMalformed);
  }
  const std::size_t f = row.fields.size() - 1;
  std::vector<std::string> names;
  std::vector<double> values;
  std::set<std::string> seen;
  while (reader.next(row)) {
    if (row.fields.size() == 1 && row.fields[0].empty()) continue;
    if (row.fields.size() != f + 1) {
      fail_at(reader, row, std::min(row.fields.size(), f + 1) + 1,
              "expected " + std::to_string(f) + " features, got " + std::to_string(row.fields.size() - 1),
              Errc::kMalformed);
    }
    if (!seen.insert(row.fields[0]).second) {
      fail_at(reader, row, 1, "duplicate card name '" + row.fields[0] + "'", Errc::kDuplicateName);
    }
    for (std::size_t j = 1; j <= f; ++j) {
      const std::string& s = row.fields[j];
      double v = 0.0;
      const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
      if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty()) {
        fail_at(reader, row, j + 1, "not a number: '" + s + "'", Errc::kMalformed);
      }
      if (!std::isfinite(v)) fail_at(reader, row, j + 1, "non-finite value '" + s + "'", Errc::kNonFiniteValue);
      values.push_back(v);
    }
    names.push_back(row.fields[0]);
  }
  Tensor features({names.size(), f});
  std::copy(values.begin(), values.end(), features.data());
  return CardCatalog(std::move(features), std::move(names));
}

CardCatalog parse_feature_file(const std::string& path) {
  auto in = open_in(path);
  return parse_features(in, path);
}

void write_features(std::ostream& out, const CardCatalog& catalog) {
  out << "name";
  for (std::size_t j = 0; j < catalog.feature_dim(); ++j) out << ",f" << j;
  out << '\n';
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    write_field(out, catalog.names()[i]);
    for (double v : catalog.row(card_at(i))) out << ',' << format_double(v);
    out << '\n';
  }
}

DraftLog parse_draft_log(std::istream& in, const CardCatalog& catalog, const std::string& source) {
  CsvReader reader(in, source);
  Row row;
  if (!reader.next(row)) throw Error(Errc::kMalformedRecord, source + ": empty draft log");
  std::map<std::string, std::size_t> col;
  for (std::size_t j = 0; j < row.fields.size(); ++j) col[row.fields[j]] = j;
  for (const char* need : {"draft_id", "pick_number", "pack", "picked"}) {
    if (!col.count(need)) {
      fail_at(reader, row, 1, std::string("header lacks column ") + need, Errc::kMalformedRecord);
    }
  }
  const bool has_pool = col.count("pool") > 0;

  DraftLog log;
  std::map<std::uint64_t, std::uint32_t> last_pick;
  std::map<std::uint64_t, std::vector<CardId>> picked_so_far;
  while (reader.next(row)) {
    if (row.fields.size() == 1 && row.fields[0].empty()) continue;
    if (row.fields.size() != col.size()) {
      fail_at(reader, row, 1,
              "expected " + std::to_string(col.size()) + " fields, got " + std::to_string(row.fields.size()),
              Errc::kMalformedRecord);
    }
    auto field = [&](const char* name) -> const std::string& { return row.fields[col.at(name)]; };
    auto column = [&](const char* name) { return col.at(name) + 1; };
    auto resolve = [&](std::string_view name, const char* where) {
      const auto id = catalog.find(std::string(name));
      if (!id) {
        fail_at(reader, row, column(where), "unknown card '" + std::string(name) + "'", Errc::kUnknownCard);
      }
      return *id;
    };

    Decision d;
    if (!parse_uint(field("draft_id"), d.draft_id)) {
      fail_at(reader, row, column("draft_id"), "bad draft_id", Errc::kMalformedRecord);
    }
    if (!parse_uint(field("pick_number"), d.pick_number) || d.pick_number == 0) {
      fail_at(reader, row, column("pick_number"), "bad pick_number", Errc::kMalformedRecord);
    }
    const auto prev = last_pick.find(d.draft_id);
    if (prev != last_pick.end() && d.pick_number <= prev->second) {
      fail_at(reader, row, column("pick_number"),
              "pick numbers must increase within draft " + std::to_string(d.draft_id), Errc::kMalformedRecord);
    }
    last_pick[d.draft_id] = d.pick_number;

    for (auto name : split_names(field("pack"))) d.pack.push_back(resolve(name, "pack"));
    const CardId picked = resolve(field("picked"), "picked");
    const auto at = std::find(d.pack.begin(), d.pack.end(), picked);
    if (at == d.pack.end()) {
      fail_at(reader, row, column("picked"), "picked card '" + field("picked") + "' is not in the pack",
              Errc::kPickNotInPack);
    }
    d.picked = static_cast<std::size_t>(at - d.pack.begin());
    auto& history = picked_so_far[d.draft_id];
    if (has_pool) {
      for (auto name : split_names(field("pool"))) d.pool.push_back(resolve(name, "pool"));
    } else {
      d.pool = history;
    }
    history.push_back(picked);

    if (d.pack.size() == 1) {
      ++log.dropped_single;
      continue;
    }
    if (const auto bad = validate_decision(d, catalog)) {
      fail_at(reader, row, 1, std::string(to_string(*bad)), Errc::kMalformedRecord);
    }
    log.decisions.push_back(std::move(d));
  }
  return log;
}

DraftLog parse_draft_log_file(const std::string& path, const CardCatalog& catalog) {
  auto in = open_in(path);
  return parse_draft_log(in, catalog, path);
}

void write_draft_log(std::ostream& out, const CardCatalog& catalog, std::span<const Decision> decisions) {
  out << "draft_id,pick_number,pack,pool,picked\n";
  for (const Decision& d : decisions) {
    out << d.draft_id << ',' << d.pick_number << ',';
    write_field(out, join_names(catalog, d.pack));
    out << ',';
    write_field(out, join_names(catalog, d.pool));
    out << ',';
    write_field(out, catalog.name(d.picked_card()));
    out << '\n';
  }
}

Dataset split_dataset(CardCatalog catalog, std::vector<Decision> decisions, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw Error(Errc::kInvalidConfig, "split ratio must be in (0, 1)");
  if (decisions.empty()) throw Error(Errc::kEmptyInput, "no decisions to split");
  std::vector<std::uint64_t> drafts;
  for (const auto& d : decisions) drafts.push_back(d.draft_id);
  std::sort(drafts.begin(), drafts.end());
  drafts.erase(std::unique(drafts.begin(), drafts.end()), drafts.end());
  if (drafts.size() < 2) {
    throw Error(Errc::kTooFewDrafts, "need at least 2 drafts to split, got " + std::to_string(drafts.size()));
  }
  Rng rng(derive_seed(seed, "split"));
  rng.shuffle(drafts);
  auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(drafts.size())));
  n_train = std::clamp<std::size_t>(n_train, 1, drafts.size() - 1);
  const std::set<std::uint64_t> train(drafts.begin(), drafts.begin() + static_cast<std::ptrdiff_t>(n_train));

  Dataset ds;
  ds.catalog = std::move(catalog);
  ds.decisions = std::move(decisions);
  ds.split.reserve(ds.decisions.size());
  for (const auto& d : ds.decisions) ds.split.push_back(train.count(d.draft_id) ? Partition::kTrain : Partition::kTest);
  return ds;
}

void save_dataset(const std::string& dir, const Dataset& dataset) {
  if (dataset.split.size() != dataset.decisions.size()) {
    throw Error(Errc::kShapeMismatch, "split has " + std::to_string(dataset.split.size()) + " entries for " +
                                          std::to_string(dataset.decisions.size()) + " decisions");
  }
  std::map<std::uint64_t, Partition> by_draft;
  for (std::size_t i = 0; i < dataset.decisions.size(); ++i) {
    const auto [it, fresh] = by_draft.emplace(dataset.decisions[i].draft_id, dataset.split[i]);
    if (!fresh && it->second != dataset.split[i]) {
      throw Error(Errc::kMalformed, "draft " + std::to_string(it->first) + " straddles the split");
    }
  }
  std::filesystem::create_directories(dir);
  const std::filesystem::path root(dir);
  {
    auto out = open_out((root / "catalog.csv").string());
    write_features(out, dataset.catalog);
  }
  {
    auto out = open_out((root / "decisions.csv").string());
    write_draft_log(out, dataset.catalog, dataset.decisions);
  }
  auto out = open_out((root / "split.csv").string());
  out << "draft_id,partition\n";
  for (const auto& [id, part] : by_draft) out << id << ',' << (part == Partition::kTrain ? "train" : "test") << '\n';
  if (!out) throw Error(Errc::kIo, "failed writing " + dir);
}

Dataset load_dataset(const std::string& dir) {
  const std::filesystem::path root(dir);
  Dataset ds;
  ds.catalog = parse_feature_file((root / "catalog.csv").string());
  DraftLog log = parse_draft_log_file((root / "decisions.csv").string(), ds.catalog);
  ds.decisions = std::move(log.decisions);

  const std::string split_path = (root / "split.csv").string();
  auto in = open_in(split_path);
  CsvReader reader(in, split_path);
  Row row;
  if (!reader.next(row) || row.fields != std::vector<std::string>{"draft_id", "partition"}) {
    throw Error(Errc::kMalformed, split_path + ": header must be draft_id,partition");
  }
  std::map<std::uint64_t, Partition> by_draft;
  while (reader.next(row)) {
    if (row.fields.size() == 1 && row.fields[0].empty()) continue;
    std::uint64_t id = 0;
    if (row.fields.size() != 2 || !parse_uint(row.fields[0], id)) {
      fail_at(reader, row, 1, "bad split record", Errc::kMalformed);
    }
    if (row.fields[1] != "train" && row.fields[1] != "test") {
      fail_at(reader, row, 2, "partition must be train or test", Errc::kMalformed);
    }
    by_draft[id] = row.fields[1] == "train" ? Partition::kTrain : Partition::kTest;
  }
  for (const auto& d : ds.decisions) {
    const auto it = by_draft.find(d.draft_id);
    if (it == by_draft.end()) {
      throw Error(Errc::kMalformed, split_path + ": no partition for draft " + std::to_string(d.draft_id));
    }
    ds.split.push_back(it->second);
  }
  return ds;
}

void SyntheticSpec::validate() const {
  if (cards < kPackSize) throw Error(Errc::kInvalidSpec, "synthetic catalog needs at least 15 cards");
  if (feature_dim == 0 || rank == 0 || drafts == 0) {
    throw Error(Errc::kInvalidSpec, "feature_dim, rank and drafts must be positive");
  }
  if (players < kMinPlayers || players > kMaxPlayers) throw Error(Errc::kInvalidSpec, "players must be in [2, 8]");
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw Error(Errc::kInvalidSpec, "noise must be finite and >= 0");
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t m = spec.cards, r = spec.rank, f = spec.feature_dim;

  Rng latent_rng(derive_seed(spec.seed, "latents"));
  auto utility = std::make_shared<PlantedUtility>();
  utility->latents = Tensor({m, r});
  for (double& v : utility->latents.values()) v = latent_rng.normal();
  utility->seed_vector.resize(r);
  for (double& v : utility->seed_vector) v = latent_rng.normal();

  Rng proj_rng(derive_seed(spec.seed, "projection"));
  Tensor proj({r, f});
  const double scale = 1.0 / std::sqrt(static_cast<double>(r));
  for (double& v : proj.values()) v = proj_rng.normal() * scale;

  Tensor features({m, f});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < r; ++k) {
      const double l = utility->latents(i, k);
      for (std::size_t j = 0; j < f; ++j) features(i, j) += l * proj(k, j);
    }
  }
  std::vector<std::string> names(m);
  for (std::size_t i = 0; i < m; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "card_%03zu", i);
    names[i] = buf;
  }

  SyntheticData out;
  out.catalog = CardCatalog(std::move(features), std::move(names));
  out.decisions.reserve(spec.drafts * spec.players * kDecisionsPerDraft);
  for (std::size_t d = 0; d < spec.drafts; ++d) {
    std::vector<PickPolicy> seats;
    for (std::size_t s = 0; s < spec.players; ++s) {
      seats.push_back(PlantedUtilityPolicy{utility, spec.noise, derive_seed(spec.seed, "drafter", d * spec.players + s)});
    }
    auto result = run_draft(out.catalog, seats, derive_seed(spec.seed, "draft", d), d * spec.players);
    for (auto& dec : result.decisions) out.decisions.push_back(std::move(dec));
  }
  out.utility = *utility;
  return out;
}

}  // namespace cpr
