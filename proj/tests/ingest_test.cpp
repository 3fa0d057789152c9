#include <filesystem>
#include <map>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "cpr/error.hpp"
#include "cpr/ingest.hpp"
#include "support.hpp"

using namespace cpr;

namespace {

Errc code_of(const std::function<void()>& f, std::string* message = nullptr) {
  try {
    f();
  } catch (const Error& e) {
    if (message) *message = e.what();
    return e.code();
  }
  ADD_FAILURE() << "no cpr::Error thrown";
  return Errc::kIo;
}

CardCatalog abc() {
  std::istringstream in("name,f0,f1\na,1,2\nb,3,4\nc,5,6\nd,7,8\n");
  return parse_features(in);
}

DraftLog log_of(const std::string& text) {
  std::istringstream in(text);
  return parse_draft_log(in, abc());
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("cpr_ingest_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST(Features, ParsesNamesAndValues) {
  std::istringstream in("name,f0,f1\n\"x, the card\",1.5,-2e-3\ny,0,7\n");
  const CardCatalog cat = parse_features(in);
  ASSERT_EQ(cat.size(), 2u);
  EXPECT_EQ(cat.name(card_at(0)), "x, the card");
  EXPECT_EQ(cat.row(card_at(0))[1], -2e-3);
  EXPECT_EQ(cat.row(card_at(1))[1], 7.0);
}

TEST(Features, ErrorsCarryCodesAndPositions) {
  auto parse = [](std::string text) {
    return [text] {
      std::istringstream in(text);
      parse_features(in, "cards.csv");
    };
  };
  std::string msg;
  EXPECT_EQ(code_of(parse("name,f0\na,1\nb,zz\n"), &msg), Errc::kMalformed);
  EXPECT_NE(msg.find("cards.csv: line 3, column 2"), std::string::npos) << msg;
  EXPECT_EQ(code_of(parse("name,f0,f1\na,1\n"), &msg), Errc::kMalformed);
  EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;
  EXPECT_EQ(code_of(parse("name,f0\na,1\na,2\n")), Errc::kDuplicateName);
  EXPECT_EQ(code_of(parse("name,f0\na,1\nb,inf\n")), Errc::kNonFiniteValue);
  EXPECT_EQ(code_of(parse("name,f0\na,1\nb,nan\n")), Errc::kNonFiniteValue);
  EXPECT_EQ(code_of(parse("card,f0\na,1\nb,2\n")), Errc::kMalformed);
  EXPECT_EQ(code_of(parse("")), Errc::kMalformed);
  EXPECT_EQ(code_of(parse("name,f0\na,\"1\n")), Errc::kMalformed);
}

TEST(Features, RoundTripIsExact) {
  Rng rng(1);
  const CardCatalog cat = cpr::testing::random_catalog(30, 5, rng);
  std::stringstream s;
  write_features(s, cat);
  EXPECT_EQ(parse_features(s), cat);
}

TEST(FormatDouble, ShortestRoundTrip) {
  EXPECT_EQ(format_double(0.5), "0.5");
  EXPECT_EQ(format_double(0.1 + 0.2), "0.30000000000000004");
  Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    const double v = rng.normal() * std::pow(10.0, rng.uniform(-20, 20));
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
}

TEST(DraftLog, ParsesExplicitPools) {
  const auto log = log_of(
      "draft_id,pick_number,pack,pool,picked\n"
      "7,1,a;b;c,,b\n"
      "7,2,c;d,b,d\n");
  ASSERT_EQ(log.decisions.size(), 2u);
  const Decision& d = log.decisions[1];
  EXPECT_EQ(d.draft_id, 7u);
  EXPECT_EQ(d.pick_number, 2u);
  EXPECT_EQ(d.pack, (std::vector<CardId>{card_at(2), card_at(3)}));
  EXPECT_EQ(d.pool, (std::vector<CardId>{card_at(1)}));
  EXPECT_EQ(d.picked_card(), card_at(3));
}

TEST(DraftLog, RebuildsPoolsAndDropsSingleCardPacks) {
  const auto log = log_of(
      "draft_id,pick_number,pack,picked\n"
      "1,1,a;b;c,a\n"
      "2,1,a;b,b\n"
      "1,2,b;c,c\n"
      "1,3,d,d\n");
  ASSERT_EQ(log.decisions.size(), 3u);
  EXPECT_EQ(log.dropped_single, 1u);
  EXPECT_EQ(log.decisions[2].pool, (std::vector<CardId>{card_at(0)}));
  EXPECT_TRUE(log.decisions[1].pool.empty());
}

TEST(DraftLog, KeepsDuplicateRecords) {
  const auto log = log_of(
      "draft_id,pick_number,pack,pool,picked\n"
      "1,1,a;b,c,a\n"
      "2,1,a;b,c,a\n"
      "3,1,a;b,c,b\n");
  ASSERT_EQ(log.decisions.size(), 3u);
  EXPECT_EQ(log.decisions[0].pack, log.decisions[1].pack);
  EXPECT_EQ(log.decisions[0].pool, log.decisions[1].pool);
}

TEST(DraftLog, Errors) {
  auto parse = [](std::string text) {
    return [text] { log_of(text); };
  };
  const std::string head = "draft_id,pick_number,pack,pool,picked\n";
  std::string msg;
  EXPECT_EQ(code_of(parse(head + "1,1,a;zz,,a\n"), &msg), Errc::kUnknownCard);
  EXPECT_NE(msg.find("line 2, column 3"), std::string::npos) << msg;
  EXPECT_EQ(code_of(parse(head + "1,1,a;b,,c\n")), Errc::kPickNotInPack);
  EXPECT_EQ(code_of(parse(head + "1,1,a;a,,a\n")), Errc::kMalformedRecord);
  EXPECT_EQ(code_of(parse(head + "x,1,a;b,,a\n")), Errc::kMalformedRecord);
  EXPECT_EQ(code_of(parse(head + "1,0,a;b,,a\n")), Errc::kMalformedRecord);
  EXPECT_EQ(code_of(parse(head + "1,2,a;b,,a\n1,2,a;b,,a\n")), Errc::kMalformedRecord);
  EXPECT_EQ(code_of(parse(head + "1,1,a;b,a\n")), Errc::kMalformedRecord);
  EXPECT_EQ(code_of(parse("draft_id,pack,picked\n1,a;b,a\n")), Errc::kMalformedRecord);
  EXPECT_EQ(code_of(parse("")), Errc::kMalformedRecord);
}

TEST(DraftLog, RoundTrip) {
  SyntheticSpec spec;
  spec.cards = 40;
  spec.feature_dim = 4;
  spec.players = 3;
  spec.drafts = 2;
  spec.seed = 3;
  const SyntheticData data = generate_synthetic(spec);
  std::stringstream s;
  write_draft_log(s, data.catalog, data.decisions);
  const DraftLog back = parse_draft_log(s, data.catalog);
  EXPECT_EQ(back.decisions, data.decisions);
  EXPECT_EQ(back.dropped_single, 0u);
}

TEST(Split, WholeDraftsAndRatio) {
  Rng rng(4);
  const CardCatalog cat = cpr::testing::random_catalog(20, 2, rng);
  std::vector<Decision> ds;
  for (std::uint64_t draft = 0; draft < 10; ++draft) {
    for (int k = 0; k < 5; ++k) {
      ds.push_back(cpr::testing::random_decision(20, rng));
      ds.back().draft_id = draft;
    }
  }
  const Dataset a = split_dataset(cat, ds, 0.8, 5);
  std::map<std::uint64_t, std::set<Partition>> by_draft;
  for (std::size_t i = 0; i < a.decisions.size(); ++i) by_draft[a.decisions[i].draft_id].insert(a.split[i]);
  std::size_t train = 0;
  for (const auto& [id, parts] : by_draft) {
    ASSERT_EQ(parts.size(), 1u) << "draft " << id << " straddles partitions";
    train += *parts.begin() == Partition::kTrain;
  }
  EXPECT_EQ(train, 8u);
  EXPECT_EQ(a.partition(Partition::kTest).size(), 10u);
  EXPECT_EQ(split_dataset(cat, ds, 0.8, 5), a);
  EXPECT_NE(split_dataset(cat, ds, 0.8, 6).split, a.split);
  const Dataset tiny = split_dataset(cat, ds, 0.01, 5);
  EXPECT_EQ(tiny.partition(Partition::kTrain).size(), 5u);
}

TEST(Split, Errors) {
  Rng rng(5);
  const CardCatalog cat = cpr::testing::random_catalog(20, 2, rng);
  std::vector<Decision> one{cpr::testing::random_decision(20, rng)};
  EXPECT_EQ(code_of([&] { split_dataset(cat, {}, 0.8, 0); }), Errc::kEmptyInput);
  EXPECT_EQ(code_of([&] { split_dataset(cat, one, 0.8, 0); }), Errc::kTooFewDrafts);
  one.push_back(one[0]);
  one[1].draft_id = 1;
  EXPECT_EQ(code_of([&] { split_dataset(cat, one, 1.0, 0); }), Errc::kInvalidConfig);
  EXPECT_EQ(code_of([&] { split_dataset(cat, one, 0.0, 0); }), Errc::kInvalidConfig);
}

TEST(DatasetDir, RoundTripAndMissingFiles) {
  SyntheticSpec spec;
  spec.cards = 30;
  spec.feature_dim = 3;
  spec.players = 2;
  spec.drafts = 3;
  const SyntheticData data = generate_synthetic(spec);
  const Dataset ds = split_dataset(data.catalog, data.decisions, 0.5, 1);
  const auto dir = temp_dir("roundtrip");
  save_dataset(dir.string(), ds);
  EXPECT_EQ(load_dataset(dir.string()), ds);
  std::filesystem::remove(dir / "split.csv");
  EXPECT_EQ(code_of([&] { load_dataset(dir.string()); }), Errc::kIo);
  std::filesystem::remove_all(dir);
}

TEST(Synthetic, DefaultSizes) {
  const SyntheticData data = generate_synthetic(SyntheticSpec{});
  EXPECT_EQ(data.catalog.size(), 200u);
  EXPECT_EQ(data.catalog.feature_dim(), 32u);
  EXPECT_EQ(data.decisions.size(), 50u * 8u * 42u);
  EXPECT_EQ(data.decisions.size(), 16800u);
  std::map<std::uint64_t, std::size_t> per_draft;
  for (const auto& d : data.decisions) {
    EXPECT_FALSE(validate_decision(d, data.catalog));
    ++per_draft[d.draft_id];
  }
  EXPECT_EQ(per_draft.size(), 400u);
  for (const auto& [id, n] : per_draft) EXPECT_EQ(n, 42u);
}

TEST(Synthetic, DeterministicPerSeed) {
  SyntheticSpec spec;
  spec.cards = 50;
  spec.drafts = 2;
  spec.seed = 9;
  const auto a = generate_synthetic(spec), b = generate_synthetic(spec);
  EXPECT_EQ(a.catalog, b.catalog);
  EXPECT_EQ(a.decisions, b.decisions);
  spec.seed = 10;
  EXPECT_NE(generate_synthetic(spec).decisions, a.decisions);
}

TEST(Synthetic, NoiselessPicksAreThePlantedArgmax) {
  SyntheticSpec spec;
  spec.cards = 60;
  spec.drafts = 3;
  spec.noise = 0.0;
  spec.seed = 4;
  const SyntheticData data = generate_synthetic(spec);
  for (const Decision& d : data.decisions) {
    std::size_t best = 0;
    double best_u = -1e300;
    for (std::size_t k = 0; k < d.pack.size(); ++k) {
      double u = 0;
      const auto ctx = data.utility.context(d.pool);
      for (std::size_t j = 0; j < ctx.size(); ++j) u += ctx[j] * data.utility.latents(index_of(d.pack[k]), j);
      if (u > best_u || (u == best_u && d.pack[k] < d.pack[best])) {
        best_u = u;
        best = k;
      }
    }
    EXPECT_EQ(d.picked, best);
  }
}

TEST(Synthetic, SpecValidation) {
  SyntheticSpec spec;
  spec.cards = 10;
  EXPECT_EQ(code_of([&] { spec.validate(); }), Errc::kInvalidSpec);
  spec = SyntheticSpec{};
  spec.noise = -1;
  EXPECT_EQ(code_of([&] { spec.validate(); }), Errc::kInvalidSpec);
  spec = SyntheticSpec{};
  spec.players = 9;
  EXPECT_EQ(code_of([&] { generate_synthetic(spec); }), Errc::kInvalidSpec);
}
