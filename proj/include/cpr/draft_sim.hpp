#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "cpr/domain.hpp"
#include "cpr/evaluation.hpp"
#include "cpr/planted.hpp"

namespace cpr {

// Left passes seat i's pack to seat i+1; right to seat i-1.
enum class PassDirection { kLeft, kRight };

inline constexpr std::size_t kMinPlayers = 2;
inline constexpr std::size_t kMaxPlayers = 8;

struct PackInPlay {
  std::size_t id = 0;  // index into DraftState::dealt
  std::vector<CardId> cards;
};

struct Seat {
  std::vector<CardId> pool;
  PackInPlay pack;
  std::uint32_t decisions_made = 0;
};

struct PickEvent {
  std::size_t round;
  std::size_t pick_in_round;
  std::size_t seat;
  std::size_t pack_id;
  CardId card;
  bool forced;
  bool operator==(const PickEvent&) const = default;
};

// A Limited draft in progress. All three rounds of packs are dealt up front
// (pack id = round_index * players + seat) so every card's origin is known.
struct DraftState {
  std::vector<Seat> seats;
  std::size_t round = 1;          // 1..3
  std::size_t pick_in_round = 1;  // 1..15
  PassDirection direction = PassDirection::kLeft;
  std::uint64_t seed = 0;
  std::uint64_t first_draft_id = 0;  // seat s records decisions under first_draft_id + s
  bool finished = false;
  std::vector<std::vector<CardId>> dealt;
  std::vector<Decision> decisions;
  std::vector<PickEvent> events;

  std::size_t players() const { return seats.size(); }
};

// Throws kInvalidConfig for players outside [2, 8], kCatalogTooSmall for M < 15.
DraftState new_draft(const CardCatalog& catalog, std::size_t players, std::uint64_t seed,
                     std::uint64_t first_draft_id = 0);
DraftState new_draft(std::size_t catalog_size, std::size_t players, std::uint64_t seed,
                     std::uint64_t first_draft_id = 0);

// The seat's current pack. Throws kFinished.
std::vector<CardId> legal_picks(const DraftState& state, std::size_t seat);

// One simultaneous pick per seat. Picks move to pools, non-forced picks are
// recorded as decisions, packs rotate, rounds advance. Throws kIllegalPick
// (card not in that seat's pack, or wrong pick count) and kFinished.
void apply_picks_in_place(DraftState& state, std::span<const CardId> picks);
DraftState apply_picks(DraftState state, std::span<const CardId> picks);

// True when every pack holds a single card (the pick is not a decision).
bool forced_pick(const DraftState& state);

struct RandomPolicy {
  std::uint64_t seed = 0;
};
struct GreedyModelPolicy {
  std::shared_ptr<const PickScorer> scorer;
};
// Samples with probability proportional to exp(score / noise); noise == 0 is
// the argmax (ties -> lowest CardId).
struct PlantedUtilityPolicy {
  std::shared_ptr<const PlantedUtility> utility;
  double noise = 0.0;
  std::uint64_t seed = 0;
};
// Replays a fixed sequence of decisions (forced picks are not consumed).
struct ScriptedPolicy {
  std::vector<CardId> picks;
};
// Input arrives from outside (the service); see DraftSession.
struct HumanPolicy {};

using PickPolicy =
    std::variant<RandomPolicy, GreedyModelPolicy, PlantedUtilityPolicy, ScriptedPolicy, HumanPolicy>;

// Bot choice for `seat` in the current state. Not valid for HumanPolicy.
CardId choose_pick(const PickPolicy& policy, const DraftState& state, std::size_t seat);

// Drives a draft in which some seats are humans. Bots move only when every
// human seat has submitted, so the whole table picks simultaneously.
class DraftSession {
 public:
  DraftSession(const CardCatalog& catalog, std::vector<PickPolicy> policies, std::uint64_t seed,
               std::uint64_t first_draft_id = 0);

  const DraftState& state() const { return state_; }
  bool finished() const { return state_.finished; }
  std::vector<std::size_t> human_seats() const;
  // Records a human pick; once all humans have picked the table advances
  // (bots pick, forced last cards are auto-applied). Throws kIllegalPick,
  // kFinished, kInvalidConfig (seat is not human).
  void submit(std::size_t seat, CardId card);

 private:
  void advance();

  std::vector<PickPolicy> policies_;
  DraftState state_;
  std::vector<std::optional<CardId>> pending_;
};

struct DraftResult {
  std::vector<std::vector<CardId>> pools;
  std::vector<Decision> decisions;
  DraftState final_state;
};

// Runs to completion. Throws kInvalidConfig if any seat is a HumanPolicy.
DraftResult run_draft(const CardCatalog& catalog, std::span<const PickPolicy> policies,
                      std::uint64_t seed, std::uint64_t first_draft_id = 0);

// Fraction of decisions where the scorer's greedy pick equals the recorded pick.
double bot_agreement(const PickScorer& scorer, std::span<const Decision> decisions);

}  // namespace cpr
