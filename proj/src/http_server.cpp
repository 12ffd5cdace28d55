#include "imedbot/http_server.hpp"

#include <iostream>

#include "httplib.h"

namespace imedbot::agent {

namespace {

constexpr const char* kJson = "application/json";

void send_json(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), kJson);
}

Json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return Json::object();
  try {
    return Json::parse(req.body);
  } catch (const Json::parse_error& e) {
    throw ApiError(400, "InvalidBody", std::string("request body is not valid JSON: ") + e.what());
  }
}

using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

// Maps ApiError to its status and anything else to a 500 JSON body.
Handler guarded(Handler h) {
  return [h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
    try {
      h(req, res);
    } catch (const ApiError& e) {
      send_json(res, e.status(), e.to_json());
    } catch (const Error& e) {
      send_json(res, 500, {{"error", {{"code", e.code()}, {"message", e.what()}}}});
    } catch (const std::exception& e) {
      send_json(res, 500, {{"error", {{"code", "InternalError"}, {"message", e.what()}}}});
    }
  };
}

}  // namespace

HttpServer::HttpServer(AgentService& service)
    : service_(service), server_(std::make_unique<httplib::Server>()) {
  auto& s = *server_;
  auto& svc = service_;

  // Bodies somewhat over the upload limit still reach the handler so the
  // client gets a JSON 413; far larger ones are cut off by the transport.
  s.set_payload_max_length(svc.config().upload_limit_bytes * 2 + (1u << 20));

  s.Post("/api/sessions", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
           const Json body = parse_body(req);
           const auto it = body.find("flow");
           if (it == body.end() || !it->is_string()) {
             throw ApiError(400, "InvalidFlow", "body must contain a string \"flow\"");
           }
           send_json(res, 201, svc.create_session(it->get<std::string>()));
         }));
  s.Get(R"(/api/sessions/([\w-]+))",
        guarded([&svc](const httplib::Request& req, httplib::Response& res) {
          send_json(res, 200, svc.get_session(req.matches[1]));
        }));
  s.Post(R"(/api/sessions/([\w-]+)/answer)",
         guarded([&svc](const httplib::Request& req, httplib::Response& res) {
           const Json body = parse_body(req);
           const auto it = body.find("value");
           if (it == body.end() || !(it->is_string() || it->is_number_integer())) {
             throw ApiError(400, "InvalidBody", "body must contain \"value\"");
           }
           const std::string value = it->is_string() ? it->get<std::string>() : it->dump();
           send_json(res, 200, svc.answer(req.matches[1], value));
         }));
  s.Post(R"(/api/sessions/([\w-]+)/dataset)",
         guarded([&svc](const httplib::Request& req, httplib::Response& res) {
           std::optional<std::string> label;
           if (req.has_param("label")) label = req.get_param_value("label");
           std::optional<std::size_t> declared;
           if (req.has_header("Content-Length")) {
             declared = static_cast<std::size_t>(
                 req.get_header_value_u64("Content-Length"));
           }
           std::string_view body = req.body;
           httplib::MultipartFormData file;
           if (req.is_multipart_form_data()) {
             if (!req.has_file("file")) {
               throw ApiError(400, "InvalidBody", "multipart upload needs a \"file\" part");
             }
             file = req.get_file_value("file");
             body = file.content;
             if (!label && req.has_file("label")) label = req.get_file_value("label").content;
           }
           send_json(res, 200, svc.upload_dataset(req.matches[1], body, label, declared));
         }));
  s.Post(R"(/api/sessions/([\w-]+)/confirm)",
         guarded([&svc](const httplib::Request& req, httplib::Response& res) {
           send_json(res, 200, svc.confirm(req.matches[1]));
         }));
  s.Post(R"(/api/sessions/([\w-]+)/train)",
         guarded([&svc](const httplib::Request& req, httplib::Response& res) {
           send_json(res, 202, svc.start_training(req.matches[1], parse_body(req)));
         }));
  s.Post(R"(/api/sessions/([\w-]+)/survey)",
         guarded([&svc](const httplib::Request& req, httplib::Response& res) {
           send_json(res, 200, svc.submit_survey(req.matches[1], parse_body(req)));
         }));
  s.Get(R"(/api/jobs/([\w-]+))", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
          send_json(res, 200, svc.job_status(req.matches[1]));
        }));
  s.Get(R"(/api/jobs/([\w-]+)/model)",
        guarded([&svc](const httplib::Request& req, httplib::Response& res) {
          const auto bytes = svc.job_model(req.matches[1]);
          res.set_header("Content-Disposition", "attachment; filename=\"model.imbm\"");
          res.set_content(std::string(bytes.begin(), bytes.end()), "application/octet-stream");
        }));
  s.Get(R"(/api/jobs/([\w-]+)/roc\.svg)",
        guarded([&svc](const httplib::Request& req, httplib::Response& res) {
          res.set_content(svc.job_roc_svg(req.matches[1]), "image/svg+xml");
        }));
  s.Get("/api/models", guarded([&svc](const httplib::Request&, httplib::Response& res) {
          send_json(res, 200, svc.list_models());
        }));

  if (!svc.config().static_dir.empty()) {
    if (!s.set_mount_point("/", svc.config().static_dir.string())) {
      throw ConfigError("static_dir " + svc.config().static_dir.string() + " is not a directory");
    }
  }

  s.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (!res.body.empty()) return;
    if (res.status == 404) {
      send_json(res, 404, {{"error", {{"code", "NotFound"}, {"message", "no route for " + req.path}}}});
    } else if (res.status == 413) {
      send_json(res, 413, {{"error", {{"code", "PayloadTooLarge"},
                                      {"message", "request body is too large"}}}});
    }
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = server_->bind_to_any_port(host);
  } else if (!server_->bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw Error("BindFailed", "cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

bool HttpServer::listen(const std::string& host, int port) {
  return server_->listen(host, port);
}

void HttpServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace imedbot::agent
