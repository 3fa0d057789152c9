#include "cpr/draft_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "cpr/error.hpp"
#include "cpr/rng.hpp"

namespace cpr {
namespace {

std::size_t tick_of(const DraftState& s) { return (s.round - 1) * kPackSize + (s.pick_in_round - 1); }

Rng pick_rng(std::uint64_t seed, const DraftState& s, std::size_t seat) {
  return Rng(derive_seed(seed, "pick", tick_of(s) * kMaxPlayers + seat));
}

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

}  // namespace

DraftState new_draft(std::size_t catalog_size, std::size_t players, std::uint64_t seed,
                     std::uint64_t first_draft_id) {
  if (players < kMinPlayers || players > kMaxPlayers) {
    throw Error(Errc::kInvalidConfig, "players must be in [2, 8], got " + std::to_string(players));
  }
  if (catalog_size < kPackSize) {
    throw Error(Errc::kCatalogTooSmall, "need at least 15 cards, catalog has " + std::to_string(catalog_size));
  }
  DraftState s;
  s.seed = seed;
  s.first_draft_id = first_draft_id;
  s.seats.resize(players);
  Rng rng(derive_seed(seed, "deal"));
  std::vector<CardId> all(catalog_size);
  for (std::size_t i = 0; i < catalog_size; ++i) all[i] = card_at(i);
  s.dealt.reserve(kRounds * players);
  for (std::size_t p = 0; p < kRounds * players; ++p) {
    // Partial Fisher-Yates: the first 15 slots become a uniform sample.
    for (std::size_t k = 0; k < kPackSize; ++k) {
      std::swap(all[k], all[k + rng.below(catalog_size - k)]);
    }
    s.dealt.emplace_back(all.begin(), all.begin() + kPackSize);
  }
  for (std::size_t seat = 0; seat < players; ++seat) s.seats[seat].pack = {seat, s.dealt[seat]};
  return s;
}

DraftState new_draft(const CardCatalog& catalog, std::size_t players, std::uint64_t seed,
                     std::uint64_t first_draft_id) {
  return new_draft(catalog.size(), players, seed, first_draft_id);
}

std::vector<CardId> legal_picks(const DraftState& state, std::size_t seat) {
  if (state.finished) throw Error(Errc::kFinished, "draft is over");
  if (seat >= state.players()) throw Error(Errc::kInvalidConfig, "no seat " + std::to_string(seat));
  return state.seats[seat].pack.cards;
}

bool forced_pick(const DraftState& state) {
  return !state.finished && !state.seats.empty() && state.seats.front().pack.cards.size() == 1;
}

void apply_picks_in_place(DraftState& state, std::span<const CardId> picks) {
  if (state.finished) throw Error(Errc::kFinished, "draft is over");
  const std::size_t n = state.players();
  if (picks.size() != n) {
    throw Error(Errc::kIllegalPick, "expected " + std::to_string(n) + " picks, got " + std::to_string(picks.size()));
  }
  std::vector<std::size_t> slot(n);
  for (std::size_t s = 0; s < n; ++s) {
    const auto& cards = state.seats[s].pack.cards;
    const auto it = std::find(cards.begin(), cards.end(), picks[s]);
    if (it == cards.end()) {
      throw Error(Errc::kIllegalPick, "seat " + std::to_string(s) + " cannot take card " +
                                          std::to_string(index_of(picks[s])));
    }
    slot[s] = static_cast<std::size_t>(it - cards.begin());
  }
  const bool forced = forced_pick(state);
  for (std::size_t s = 0; s < n; ++s) {
    Seat& seat = state.seats[s];
    if (!forced) {
      Decision d;
      d.pool = seat.pool;
      d.pack = seat.pack.cards;
      d.picked = slot[s];
      d.draft_id = state.first_draft_id + s;
      d.pick_number = ++seat.decisions_made;
      state.decisions.push_back(std::move(d));
    }
    state.events.push_back({state.round, state.pick_in_round, s, seat.pack.id, picks[s], forced});
    seat.pack.cards.erase(seat.pack.cards.begin() + static_cast<std::ptrdiff_t>(slot[s]));
    seat.pool.push_back(picks[s]);
  }

  if (state.pick_in_round == kPackSize) {
    if (state.round == kRounds) {
      state.finished = true;
      return;
    }
    ++state.round;
    state.pick_in_round = 1;
    state.direction = state.direction == PassDirection::kLeft ? PassDirection::kRight : PassDirection::kLeft;
    for (std::size_t s = 0; s < n; ++s) {
      const std::size_t id = (state.round - 1) * n + s;
      state.seats[s].pack = {id, state.dealt[id]};
    }
    return;
  }
  std::vector<PackInPlay> moved(n);
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t to = state.direction == PassDirection::kLeft ? (s + 1) % n : (s + n - 1) % n;
    moved[to] = std::move(state.seats[s].pack);
  }
  for (std::size_t s = 0; s < n; ++s) state.seats[s].pack = std::move(moved[s]);
  ++state.pick_in_round;
}

DraftState apply_picks(DraftState state, std::span<const CardId> picks) {
  apply_picks_in_place(state, picks);
  return state;
}

CardId choose_pick(const PickPolicy& policy, const DraftState& state, std::size_t seat) {
  const auto& pack = state.seats.at(seat).pack.cards;
  const auto& pool = state.seats[seat].pool;
  if (pack.size() == 1) return pack.front();
  return std::visit(
      Overloaded{
          [&](const RandomPolicy& p) {
            Rng rng = pick_rng(p.seed, state, seat);
            return pack[rng.below(pack.size())];
          },
          [&](const GreedyModelPolicy& p) { return predict_pick(*p.scorer, pool, pack).card; },
          [&](const PlantedUtilityPolicy& p) {
            std::vector<double> scores;
            scores.reserve(pack.size());
            for (CardId c : pack) scores.push_back(p.utility->score(pool, c));
            if (p.noise <= 0.0) return argmax_pick(pack, scores);
            const double hi = *std::max_element(scores.begin(), scores.end());
            std::vector<double> weights;
            weights.reserve(scores.size());
            for (double s : scores) weights.push_back(std::exp((s - hi) / p.noise));
            const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
            Rng rng = pick_rng(p.seed, state, seat);
            double u = rng.uniform() * total;
            for (std::size_t k = 0; k < pack.size(); ++k) {
              u -= weights[k];
              if (u < 0.0) return pack[k];
            }
            return pack.back();
          },
          [&](const ScriptedPolicy& p) {
            const std::size_t at = state.seats[seat].decisions_made;
            if (at >= p.picks.size()) throw Error(Errc::kIllegalPick, "script exhausted");
            return p.picks[at];
          },
          [&](const HumanPolicy&) -> CardId {
            throw Error(Errc::kInvalidConfig, "human seats pick through DraftSession::submit");
          },
      },
      policy);
}

DraftSession::DraftSession(const CardCatalog& catalog, std::vector<PickPolicy> policies,
                           std::uint64_t seed, std::uint64_t first_draft_id)
    : policies_(std::move(policies)),
      state_(new_draft(catalog, policies_.size(), seed, first_draft_id)),
      pending_(policies_.size()) {
  advance();
}

std::vector<std::size_t> DraftSession::human_seats() const {
  std::vector<std::size_t> out;
  for (std::size_t s = 0; s < policies_.size(); ++s) {
    if (std::holds_alternative<HumanPolicy>(policies_[s])) out.push_back(s);
  }
  return out;
}

void DraftSession::submit(std::size_t seat, CardId card) {
  if (state_.finished) throw Error(Errc::kFinished, "draft is over");
  if (seat >= policies_.size() || !std::holds_alternative<HumanPolicy>(policies_[seat])) {
    throw Error(Errc::kInvalidConfig, "seat " + std::to_string(seat) + " is not a human seat");
  }
  const auto& cards = state_.seats[seat].pack.cards;
  if (std::find(cards.begin(), cards.end(), card) == cards.end()) {
    throw Error(Errc::kIllegalPick, "card " + std::to_string(index_of(card)) + " is not in the pack");
  }
  if (pending_[seat]) throw Error(Errc::kIllegalPick, "seat already picked this turn");
  pending_[seat] = card;
  advance();
}

void DraftSession::advance() {
  while (!state_.finished) {
    std::vector<CardId> picks(policies_.size());
    if (!forced_pick(state_)) {
      for (std::size_t s = 0; s < policies_.size(); ++s) {
        if (std::holds_alternative<HumanPolicy>(policies_[s]) && !pending_[s]) return;
      }
    }
    for (std::size_t s = 0; s < policies_.size(); ++s) {
      picks[s] = pending_[s] && !forced_pick(state_) ? *pending_[s]
                                                     : choose_pick(std::holds_alternative<HumanPolicy>(policies_[s])
                                                                       ? PickPolicy{RandomPolicy{}}
                                                                       : policies_[s],
                                                                   state_, s);
    }
    apply_picks_in_place(state_, picks);
    std::fill(pending_.begin(), pending_.end(), std::nullopt);
  }
}

DraftResult run_draft(const CardCatalog& catalog, std::span<const PickPolicy> policies,
                      std::uint64_t seed, std::uint64_t first_draft_id) {
  for (const auto& p : policies) {
    if (std::holds_alternative<HumanPolicy>(p)) {
      throw Error(Errc::kInvalidConfig, "run_draft cannot drive human seats; use DraftSession");
    }
  }
  DraftSession session(catalog, {policies.begin(), policies.end()}, seed, first_draft_id);
  DraftResult r;
  r.final_state = session.state();
  for (const auto& seat : r.final_state.seats) r.pools.push_back(seat.pool);
  r.decisions = r.final_state.decisions;
  return r;
}

double bot_agreement(const PickScorer& scorer, std::span<const Decision> decisions) {
  if (decisions.empty()) throw Error(Errc::kEmptyInput, "no decisions");
  const auto scores = scorer.score_all(decisions);
  std::size_t agree = 0;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    agree += argmax_pick(decisions[i].pack, scores[i]) == decisions[i].picked_card();
  }
  return static_cast<double>(agree) / static_cast<double>(decisions.size());
}

}  // namespace cpr
