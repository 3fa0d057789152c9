#include "cpr/service.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <regex>

#include <httplib.h>
#include <json.hpp>

#include "cpr/error.hpp"
#include "cpr/rng.hpp"

namespace cpr {
namespace {

using Json = nlohmann::ordered_json;

struct HttpError {
  int status;
  std::string code;
  std::string message;
};

HttpReply reply(int status, const Json& j) { return {status, j.dump()}; }

HttpReply error_reply(const HttpError& e) {
  Json j;
  j["error"] = {{"code", e.code}, {"message", e.message}};
  return reply(e.status, j);
}

Json parse_body(const std::string& body) {
  if (body.empty()) return Json::object();
  try {
    Json j = Json::parse(body);
    if (!j.is_object()) throw HttpError{400, "Malformed", "request body must be a JSON object"};
    return j;
  } catch (const nlohmann::json::parse_error& e) {
    throw HttpError{400, "Malformed", std::string("invalid JSON: ") + e.what()};
  }
}

CardId card_ref(const Json& ref, const CardCatalog& catalog) {
  if (ref.is_string()) {
    const auto id = catalog.find(ref.get<std::string>());
    if (!id) throw HttpError{400, "UnknownCard", "unknown card '" + ref.get<std::string>() + "'"};
    return *id;
  }
  if (ref.is_number_integer()) {
    const auto v = ref.get<std::int64_t>();
    if (v < 0 || static_cast<std::size_t>(v) >= catalog.size()) {
      throw HttpError{400, "UnknownCard", "unknown card id " + std::to_string(v)};
    }
    return card_at(static_cast<std::size_t>(v));
  }
  throw HttpError{400, "Malformed", "card references must be names or ids"};
}

std::vector<CardId> card_list(const Json& body, const char* field, const CardCatalog& catalog) {
  if (!body.contains(field)) return {};
  const Json& arr = body.at(field);
  if (!arr.is_array()) throw HttpError{400, "Malformed", std::string(field) + " must be an array"};
  std::vector<CardId> out;
  for (const auto& ref : arr) out.push_back(card_ref(ref, catalog));
  return out;
}

std::int64_t int_field(const Json& body, const char* field, std::int64_t fallback) {
  if (!body.contains(field)) return fallback;
  const Json& v = body.at(field);
  if (!v.is_number_integer()) throw HttpError{400, "Malformed", std::string(field) + " must be an integer"};
  return v.get<std::int64_t>();
}

Json card_json(CardId c, const CardCatalog& catalog) {
  return {{"card_id", index_of(c)}, {"name", catalog.name(c)}};
}

Json cards_json(std::span<const CardId> cards, const CardCatalog& catalog) {
  Json arr = Json::array();
  for (CardId c : cards) arr.push_back(card_json(c, catalog));
  return arr;
}

// Descending score, ties by ascending CardId.
Json ranking_json(const PickScorer& scorer, std::span<const CardId> pool, std::span<const CardId> pack,
                  const CardCatalog& catalog) {
  const auto scores = scorer.score(pool, pack);
  std::vector<std::size_t> order(pack.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return index_of(pack[a]) < index_of(pack[b]);
  });
  Json arr = Json::array();
  for (std::size_t r = 0; r < order.size(); ++r) {
    Json e = card_json(pack[order[r]], catalog);
    e["score"] = scores[order[r]];
    e["rank"] = r + 1;
    arr.push_back(std::move(e));
  }
  return arr;
}

HttpError from_error(const Error& e) {
  const std::string code(to_string(e.code()));
  switch (e.code()) {
    case Errc::kIllegalPick:
      return {409, code, e.what()};
    case Errc::kFinished:
      return {410, code, e.what()};
    default:
      return {400, code, e.what()};
  }
}

}  // namespace

struct AdvisorService::Session {
  std::mutex mu;
  std::string id;
  std::size_t human_seat = 0;
  std::uint64_t seed = 0;
  std::unique_ptr<DraftSession> draft;
  std::chrono::steady_clock::time_point last_used;
};

AdvisorService::AdvisorService(std::shared_ptr<const CardCatalog> catalog, std::shared_ptr<const EmbeddingModel> model,
                               std::string model_id, ServiceConfig config, Clock clock)
    : catalog_(std::move(catalog)),
      model_(std::move(model)),
      model_id_(std::move(model_id)),
      config_(config),
      clock_(clock ? std::move(clock) : Clock([] { return std::chrono::steady_clock::now(); })),
      id_salt_(std::random_device{}()) {
  if (!catalog_) throw Error(Errc::kInvalidConfig, "service needs a card catalog");
  if (model_) {
    if (model_->config().feature_dim != catalog_->feature_dim()) {
      throw Error(Errc::kShapeMismatch, "model and catalog feature dimensions differ");
    }
    scorer_ = std::make_shared<ModelScorer>(*model_, *catalog_);
  }
}

std::size_t AdvisorService::live_sessions() {
  expire_idle();
  std::lock_guard lock(sessions_mu_);
  return sessions_.size();
}

void AdvisorService::expire_idle() {
  const auto now = clock_();
  std::lock_guard lock(sessions_mu_);
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    if (now - it->second->last_used > config_.session_ttl) {
      it = sessions_.erase(it);
    } else {
      ++it;
    }
  }
}

std::string AdvisorService::fresh_id() {
  std::lock_guard lock(sessions_mu_);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(derive_seed(id_salt_, "session", next_id_++)));
  return buf;
}

std::shared_ptr<AdvisorService::Session> AdvisorService::find_session(const std::string& id) {
  expire_idle();
  std::lock_guard lock(sessions_mu_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw HttpError{404, "UnknownSession", "no live session " + id};
  return it->second;
}

HttpReply AdvisorService::handle(const std::string& method, const std::string& path, const std::string& body) {
  static const std::regex draft_route(R"(^/draft/([A-Za-z0-9_-]+)/(pick|state)$)");
  try {
    std::smatch m;
    if (path == "/health") {
      if (method != "GET") throw HttpError{405, "MethodNotAllowed", "use GET"};
      return health();
    }
    if (path == "/rank") {
      if (method != "POST") throw HttpError{405, "MethodNotAllowed", "use POST"};
      return rank(body);
    }
    if (path == "/draft/new") {
      if (method != "POST") throw HttpError{405, "MethodNotAllowed", "use POST"};
      return new_draft(body);
    }
    if (std::regex_match(path, m, draft_route)) {
      if (m[2] == "pick") {
        if (method != "POST") throw HttpError{405, "MethodNotAllowed", "use POST"};
        return pick(m[1], body);
      }
      if (method != "GET") throw HttpError{405, "MethodNotAllowed", "use GET"};
      return state(m[1]);
    }
    throw HttpError{404, "NotFound", "no route " + path};
  } catch (const HttpError& e) {
    return error_reply(e);
  } catch (const Error& e) {
    return error_reply(from_error(e));
  } catch (const std::exception& e) {
    return error_reply({500, "Internal", e.what()});
  }
}

HttpReply AdvisorService::health() {
  Json j;
  j["status"] = "ok";
  j["model_loaded"] = model_ != nullptr;
  j["model_id"] = model_id_;
  j["cards"] = catalog_->size();
  j["sessions"] = live_sessions();
  return reply(200, j);
}

HttpReply AdvisorService::rank(const std::string& body) {
  if (!scorer_) throw HttpError{503, "NoModelLoaded", "no model loaded"};
  const Json req = parse_body(body);
  const auto pool = card_list(req, "pool", *catalog_);
  const auto pack = card_list(req, "pack", *catalog_);
  if (pack.empty()) throw HttpError{400, "EmptyPack", "pack must hold at least one card"};
  if (pool.size() > kPoolRows) throw HttpError{400, "PoolTooLarge", "pool holds more than 45 cards"};
  Json j;
  j["model_id"] = model_id_;
  j["ranking"] = ranking_json(*scorer_, pool, pack, *catalog_);
  return reply(200, j);
}

namespace {

Json view_json(const std::string& id, std::size_t human_seat, std::uint64_t seed, const DraftSession& draft,
               const PickScorer& scorer, const CardCatalog& catalog, const std::string& model_id) {
  const DraftState& s = draft.state();
  const Seat& seat = s.seats[human_seat];
  Json j;
  j["session_id"] = id;
  j["model_id"] = model_id;
  j["players"] = s.players();
  j["human_seat"] = human_seat;
  j["seed"] = seed;
  j["finished"] = s.finished;
  j["round"] = s.round;
  j["pick_in_round"] = s.pick_in_round;
  j["pick_number"] = seat.decisions_made + (s.finished ? 0 : 1);
  j["decisions_made"] = seat.decisions_made;
  j["pass_direction"] = s.direction == PassDirection::kLeft ? "left" : "right";
  j["pool"] = cards_json(seat.pool, catalog);
  if (!s.finished) {
    j["pack"] = cards_json(seat.pack.cards, catalog);
    j["ranking"] = ranking_json(scorer, seat.pool, seat.pack.cards, catalog);
    return j;
  }
  j["pack"] = Json::array();
  j["ranking"] = Json::array();
  Json pools = Json::array();
  for (const auto& st : s.seats) pools.push_back(cards_json(st.pool, catalog));
  j["pools"] = std::move(pools);
  Json transcript = Json::array();
  for (const auto& d : s.decisions) {
    transcript.push_back({{"seat", d.draft_id - s.first_draft_id},
                          {"pick_number", d.pick_number},
                          {"pack", cards_json(d.pack, catalog)},
                          {"pool", cards_json(d.pool, catalog)},
                          {"picked", card_json(d.picked_card(), catalog)}});
  }
  j["transcript"] = std::move(transcript);
  return j;
}

}  // namespace

HttpReply AdvisorService::new_draft(const std::string& body) {
  if (!scorer_) throw HttpError{503, "NoModelLoaded", "no model loaded"};
  const Json req = parse_body(body);
  const auto players = int_field(req, "players", 8);
  const auto seed = int_field(req, "seed", 0);
  const auto human = int_field(req, "human_seat", 0);
  if (players < static_cast<std::int64_t>(kMinPlayers) || players > static_cast<std::int64_t>(kMaxPlayers)) {
    throw HttpError{400, "InvalidConfig", "players must be in [2, 8]"};
  }
  if (human < 0 || human >= players) throw HttpError{400, "InvalidConfig", "human_seat out of range"};
  if (seed < 0) throw HttpError{400, "InvalidConfig", "seed must be >= 0"};

  std::vector<PickPolicy> policies;
  for (std::int64_t s = 0; s < players; ++s) {
    if (s == human) {
      policies.emplace_back(HumanPolicy{});
    } else {
      policies.emplace_back(GreedyModelPolicy{scorer_});
    }
  }
  auto session = std::make_shared<Session>();
  session->id = fresh_id();
  session->human_seat = static_cast<std::size_t>(human);
  session->seed = static_cast<std::uint64_t>(seed);
  session->draft = std::make_unique<DraftSession>(*catalog_, std::move(policies), session->seed);
  session->last_used = clock_();
  const Json view =
      view_json(session->id, session->human_seat, session->seed, *session->draft, *scorer_, *catalog_, model_id_);
  expire_idle();
  {
    std::lock_guard lock(sessions_mu_);
    sessions_[session->id] = session;
  }
  return reply(200, view);
}

HttpReply AdvisorService::pick(const std::string& id, const std::string& body) {
  auto session = find_session(id);
  const Json req = parse_body(body);
  if (!req.contains("card")) throw HttpError{400, "Malformed", "missing card"};
  std::lock_guard lock(session->mu);
  session->last_used = clock_();
  if (session->draft->finished()) throw HttpError{410, "Finished", "draft is over"};
  const CardId card = card_ref(req.at("card"), *catalog_);
  session->draft->submit(session->human_seat, card);
  return reply(200,
               view_json(session->id, session->human_seat, session->seed, *session->draft, *scorer_, *catalog_, model_id_));
}

HttpReply AdvisorService::state(const std::string& id) {
  auto session = find_session(id);
  std::lock_guard lock(session->mu);
  session->last_used = clock_();
  return reply(200,
               view_json(session->id, session->human_seat, session->seed, *session->draft, *scorer_, *catalog_, model_id_));
}

HttpFrontend::HttpFrontend(AdvisorService& service) : server_(std::make_unique<httplib::Server>()) {
  auto forward = [&service](const httplib::Request& req, httplib::Response& res) {
    const HttpReply r = service.handle(req.method, req.path, req.body);
    res.status = r.status;
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_content(r.body, "application/json");
  };
  server_->Get(R"(/.*)", forward);
  server_->Post(R"(/.*)", forward);
  server_->Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
}

HttpFrontend::~HttpFrontend() = default;

int HttpFrontend::bind(const std::string& host, int port) {
  const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error(Errc::kIo, "cannot listen on " + host + ":" + std::to_string(port));
  return bound;
}

void HttpFrontend::run() { server_->listen_after_bind(); }

void HttpFrontend::stop() { server_->stop(); }

void serve_http(AdvisorService& service, const std::string& host, int port) {
  HttpFrontend frontend(service);
  frontend.bind(host, port);
  frontend.run();
}

}  // namespace cpr
