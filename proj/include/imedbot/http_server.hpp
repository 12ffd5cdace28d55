#pragma once

#include <memory>
#include <string>
#include <thread>

#include "imedbot/agent_service.hpp"

namespace httplib {
class Server;
}

namespace imedbot::agent {

// JSON-over-HTTP front end for AgentService.
//
//   POST /api/sessions                      {"flow": "prediction" | "training"}
//   GET  /api/sessions/{id}
//   POST /api/sessions/{id}/answer          {"value": "..."}
//   POST /api/sessions/{id}/dataset?label=  raw CSV body, or multipart "file"
//   POST /api/sessions/{id}/confirm
//   POST /api/sessions/{id}/train           {"grid": "defaults" | {...}, "seed": n}
//   POST /api/sessions/{id}/survey          {"rating": 1..5, "comment": "..."}
//   GET  /api/jobs/{id}
//   GET  /api/jobs/{id}/model               application/octet-stream
//   GET  /api/jobs/{id}/roc.svg             image/svg+xml
//   GET  /api/models
//
// Errors are {"error": {"code", "message", "details"?}} with a 4xx/5xx status.
class HttpServer {
 public:
  explicit HttpServer(AgentService& service);
  ~HttpServer();

  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Binds and serves on a background thread. Port 0 picks a free port.
  // Returns the bound port.
  int start(const std::string& host, int port);
  // Serves on the calling thread until stop().
  bool listen(const std::string& host, int port);
  void stop();

 private:
  AgentService& service_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace imedbot::agent
