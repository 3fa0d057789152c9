#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "cpr/domain.hpp"
#include "cpr/draft_sim.hpp"
#include "cpr/encoders.hpp"
#include "cpr/evaluation.hpp"

namespace httplib {
class Server;
}

namespace cpr {

struct HttpReply {
  int status = 200;
  std::string body;  // JSON
};

struct ServiceConfig {
  std::chrono::seconds session_ttl{3600};
};

// Transport-independent core of the HTTP API:
//   GET  /health
//   POST /rank               {pool, pack}
//   POST /draft/new          {players, seed, human_seat}
//   POST /draft/{id}/pick    {card}
//   GET  /draft/{id}/state
// Cards are referenced by name or numeric id. Errors come back as
// {"error": {"code", "message"}} with status 400, 404, 409, 410 or 503.
class AdvisorService {
 public:
  using Clock = std::function<std::chrono::steady_clock::time_point()>;

  // `model` may be null: ranking and drafts then answer 503.
  AdvisorService(std::shared_ptr<const CardCatalog> catalog, std::shared_ptr<const EmbeddingModel> model,
                 std::string model_id, ServiceConfig config = {}, Clock clock = nullptr);

  HttpReply handle(const std::string& method, const std::string& path, const std::string& body);

  std::size_t live_sessions();

 private:
  struct Session;

  HttpReply health();
  HttpReply rank(const std::string& body);
  HttpReply new_draft(const std::string& body);
  HttpReply pick(const std::string& id, const std::string& body);
  HttpReply state(const std::string& id);
  std::shared_ptr<Session> find_session(const std::string& id);
  void expire_idle();
  std::string fresh_id();

  std::shared_ptr<const CardCatalog> catalog_;
  std::shared_ptr<const EmbeddingModel> model_;
  std::shared_ptr<const ModelScorer> scorer_;
  std::string model_id_;
  ServiceConfig config_;
  Clock clock_;

  std::mutex sessions_mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t next_id_ = 0;
  std::uint64_t id_salt_ = 0;
};

// HTTP transport for an AdvisorService with permissive CORS headers.
class HttpFrontend {
 public:
  explicit HttpFrontend(AdvisorService& service);
  ~HttpFrontend();
  // Port 0 picks a free port. Returns the bound port; throws kIo.
  int bind(const std::string& host, int port);
  // Blocks until stop() is called from another thread.
  void run();
  void stop();

 private:
  std::unique_ptr<httplib::Server> server_;
};

// Blocks serving `service` over HTTP until the process is stopped.
void serve_http(AdvisorService& service, const std::string& host, int port);

}  // namespace cpr
