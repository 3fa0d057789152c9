#include <map>
#include <set>

#include <gtest/gtest.h>

#include "cpr/draft_sim.hpp"
#include "cpr/error.hpp"
#include "support.hpp"

using namespace cpr;

namespace {

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no cpr::Error thrown";
  return Errc::kIo;
}

CardCatalog catalog(std::size_t m = 60) {
  Rng rng(1);
  return cpr::testing::random_catalog(m, 4, rng);
}

std::vector<PickPolicy> randoms(std::size_t n, std::uint64_t base = 0) {
  std::vector<PickPolicy> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(RandomPolicy{base + i});
  return out;
}

}  // namespace

TEST(Draft, ConfigErrors) {
  const CardCatalog cat = catalog();
  EXPECT_EQ(code_of([&] { new_draft(cat, 1, 0); }), Errc::kInvalidConfig);
  EXPECT_EQ(code_of([&] { new_draft(cat, 9, 0); }), Errc::kInvalidConfig);
  EXPECT_EQ(code_of([&] { new_draft(14, 2, 0); }), Errc::kCatalogTooSmall);
  EXPECT_NO_THROW(new_draft(15, 8, 0));
}

TEST(Draft, DealtPacksAreDistinctWithinAPack) {
  const DraftState s = new_draft(catalog(), 8, 3);
  ASSERT_EQ(s.dealt.size(), 24u);
  for (const auto& pack : s.dealt) {
    ASSERT_EQ(pack.size(), 15u);
    EXPECT_EQ(std::set<CardId>(pack.begin(), pack.end()).size(), 15u);
  }
  for (std::size_t seat = 0; seat < 8; ++seat) {
    EXPECT_EQ(s.seats[seat].pack.id, seat);
    EXPECT_EQ(s.seats[seat].pack.cards, s.dealt[seat]);
  }
}

TEST(Draft, IllegalAndLatePicks) {
  DraftState s = new_draft(catalog(), 2, 4);
  const std::vector<CardId> wrong_count{s.seats[0].pack.cards[0]};
  EXPECT_EQ(code_of([&] { apply_picks_in_place(s, wrong_count); }), Errc::kIllegalPick);
  CardId outside = card_at(0);
  while (std::count(s.seats[0].pack.cards.begin(), s.seats[0].pack.cards.end(), outside)) {
    outside = card_at(index_of(outside) + 1);
  }
  const std::vector<CardId> bad{outside, s.seats[1].pack.cards[0]};
  EXPECT_EQ(code_of([&] { apply_picks_in_place(s, bad); }), Errc::kIllegalPick);
  EXPECT_TRUE(s.seats[0].pool.empty());

  const CardCatalog cat = catalog();
  const auto pols = randoms(2);
  DraftState done = run_draft(cat, pols, 4).final_state;
  EXPECT_TRUE(done.finished);
  EXPECT_EQ(code_of([&] { legal_picks(done, 0); }), Errc::kFinished);
  EXPECT_EQ(code_of([&] { apply_picks_in_place(done, bad); }), Errc::kFinished);
}

TEST(Draft, RotationDirectionAndRoundChanges) {
  const CardCatalog cat = catalog();
  DraftState s = new_draft(cat, 4, 5);
  EXPECT_EQ(s.direction, PassDirection::kLeft);
  std::vector<CardId> picks;
  for (const auto& seat : s.seats) picks.push_back(seat.pack.cards.front());
  const DraftState next = apply_picks(s, picks);
  // Left: seat i's pack goes to seat i+1.
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(next.seats[(i + 1) % 4].pack.id, s.seats[i].pack.id);
  EXPECT_EQ(next.pick_in_round, 2u);

  DraftState t = s;
  for (int k = 0; k < 15; ++k) {
    std::vector<CardId> p;
    for (std::size_t i = 0; i < 4; ++i) p.push_back(choose_pick(RandomPolicy{i}, t, i));
    apply_picks_in_place(t, p);
  }
  EXPECT_EQ(t.round, 2u);
  EXPECT_EQ(t.pick_in_round, 1u);
  EXPECT_EQ(t.direction, PassDirection::kRight);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(t.seats[i].pack.id, 4 + i);
  std::vector<CardId> p;
  for (const auto& seat : t.seats) p.push_back(seat.pack.cards.front());
  const DraftState r = apply_picks(t, p);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(r.seats[(i + 3) % 4].pack.id, t.seats[i].pack.id);
}

TEST(Draft, FullDraftInvariants) {
  const CardCatalog cat = catalog(90);
  for (std::size_t players : {2, 5, 8}) {
    const auto pols = randoms(players, 10);
    const DraftResult res = run_draft(cat, pols, players, 100);
    ASSERT_EQ(res.pools.size(), players);
    std::multiset<CardId> dealt, picked;
    for (const auto& p : res.final_state.dealt) dealt.insert(p.begin(), p.end());
    for (const auto& pool : res.pools) {
      EXPECT_EQ(pool.size(), 45u);
      picked.insert(pool.begin(), pool.end());
    }
    EXPECT_EQ(dealt, picked);
    EXPECT_EQ(res.decisions.size(), players * 42);
    std::map<std::uint64_t, std::vector<const Decision*>> by_seat;
    for (const auto& d : res.decisions) by_seat[d.draft_id].push_back(&d);
    ASSERT_EQ(by_seat.size(), players);
    for (const auto& [id, ds] : by_seat) {
      EXPECT_GE(id, 100u);
      EXPECT_LT(id, 100 + players);
      ASSERT_EQ(ds.size(), 42u);
      for (std::size_t k = 0; k < 42; ++k) {
        EXPECT_EQ(ds[k]->pick_number, k + 1);
        // 14 decisions per round, packs shrink 15..2.
        EXPECT_EQ(ds[k]->pack.size(), 15 - k % 14);
        EXPECT_EQ(ds[k]->pool.size(), k + k / 14);
        EXPECT_FALSE(validate_decision(*ds[k], cat));
      }
    }
    EXPECT_EQ(res.final_state.events.size(), players * 45);
  }
}

TEST(Draft, SameSeedSameTranscript) {
  const CardCatalog cat = catalog();
  const auto pols = randoms(6, 3);
  const DraftResult a = run_draft(cat, pols, 8), b = run_draft(cat, pols, 8), c = run_draft(cat, pols, 9);
  EXPECT_EQ(a.decisions, b.decisions);
  EXPECT_EQ(a.final_state.events, b.final_state.events);
  EXPECT_NE(a.final_state.events, c.final_state.events);
}

TEST(Draft, RunDraftRejectsHumans) {
  const CardCatalog cat = catalog();
  std::vector<PickPolicy> pols = randoms(3);
  pols[1] = HumanPolicy{};
  EXPECT_EQ(code_of([&] { run_draft(cat, pols, 0); }), Errc::kInvalidConfig);
  const DraftState s = new_draft(cat, 3, 0);
  EXPECT_EQ(code_of([&] { choose_pick(HumanPolicy{}, s, 0); }), Errc::kInvalidConfig);
}

TEST(Policies, GreedyModelMatchesPredictPick) {
  Rng rng(2);
  const CardCatalog cat = cpr::testing::random_catalog(60, 4, rng);
  EncoderConfig cfg;
  cfg.feature_dim = 4;
  cfg.embed_dim = 6;
  cfg.card_width = 8;
  const EmbeddingModel model(cfg, 7);
  auto scorer = std::make_shared<ModelScorer>(model, cat);
  std::vector<PickPolicy> pols = randoms(4);
  pols[2] = GreedyModelPolicy{scorer};
  const DraftResult res = run_draft(cat, pols, 11);
  std::size_t checked = 0;
  for (const auto& d : res.decisions) {
    if (d.draft_id != 2) continue;
    EXPECT_EQ(d.picked_card(), predict_pick(model, cat, d.pool, d.pack).card);
    ++checked;
  }
  EXPECT_EQ(checked, 42u);
  EXPECT_EQ(bot_agreement(*scorer, std::vector<Decision>(res.decisions.begin(), res.decisions.end())) > 0, true);
}

TEST(Policies, NoiselessPlantedIsArgmax) {
  Rng rng(3);
  const CardCatalog cat = cpr::testing::random_catalog(60, 4, rng);
  auto utility = std::make_shared<PlantedUtility>();
  utility->latents = cpr::testing::random_tensor({60, 3}, rng);
  utility->seed_vector = {1.0, -0.5, 0.2};
  const std::vector<PickPolicy> pols(3, PlantedUtilityPolicy{utility, 0.0, 1});
  const DraftResult res = run_draft(cat, pols, 5);
  const PlantedScorer scorer(*utility);
  EXPECT_EQ(bot_agreement(scorer, res.decisions), 1.0);
}

TEST(Policies, ScriptedReplayReproducesADraft) {
  const CardCatalog cat = catalog();
  const auto pols = randoms(3, 20);
  const DraftResult original = run_draft(cat, pols, 12);
  std::vector<PickPolicy> replay;
  for (std::size_t seat = 0; seat < 3; ++seat) {
    ScriptedPolicy s;
    for (const auto& d : original.decisions) {
      if (d.draft_id == seat) s.picks.push_back(d.picked_card());
    }
    replay.push_back(s);
  }
  const DraftResult again = run_draft(cat, replay, 12);
  EXPECT_EQ(again.decisions, original.decisions);
  EXPECT_EQ(again.pools, original.pools);
}

TEST(Session, HumanSeatDrivesTheTable) {
  const CardCatalog cat = catalog();
  std::vector<PickPolicy> pols = randoms(4, 30);
  pols[1] = HumanPolicy{};
  DraftSession session(cat, pols, 13);
  EXPECT_EQ(session.human_seats(), std::vector<std::size_t>{1});
  EXPECT_EQ(code_of([&] { session.submit(0, session.state().seats[0].pack.cards[0]); }), Errc::kInvalidConfig);
  CardId outside = card_at(0);
  const auto& pack = session.state().seats[1].pack.cards;
  while (std::count(pack.begin(), pack.end(), outside)) outside = card_at(index_of(outside) + 1);
  EXPECT_EQ(code_of([&] { session.submit(1, outside); }), Errc::kIllegalPick);

  std::size_t submitted = 0;
  while (!session.finished()) {
    const auto legal = legal_picks(session.state(), 1);
    ASSERT_GE(legal.size(), 2u);
    session.submit(1, legal.back());
    ++submitted;
  }
  EXPECT_EQ(submitted, 42u);
  for (const auto& seat : session.state().seats) EXPECT_EQ(seat.pool.size(), 45u);
  EXPECT_EQ(session.state().decisions.size(), 4u * 42u);
  EXPECT_EQ(code_of([&] { session.submit(1, card_at(0)); }), Errc::kFinished);
}

TEST(Session, MatchesRunDraftWithTheSamePicks) {
  const CardCatalog cat = catalog();
  std::vector<PickPolicy> pols = randoms(3, 40);
  pols[0] = HumanPolicy{};
  DraftSession session(cat, pols, 14);
  std::vector<CardId> script;
  while (!session.finished()) {
    const CardId c = legal_picks(session.state(), 0).front();
    script.push_back(c);
    session.submit(0, c);
  }
  pols[0] = ScriptedPolicy{script};
  const DraftResult res = run_draft(cat, pols, 14);
  EXPECT_EQ(res.final_state.events, session.state().events);
}
