#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include "imedbot/error.hpp"

namespace imedbot::agent {

// Service configuration. File form is a JSON object whose keys are the field
// names below; every key is optional. Each field can also be overridden by an
// environment variable named IMEDBOT_ + the upper-cased key, e.g.
// IMEDBOT_PORT=9000 or IMEDBOT_MODEL_DIR=/srv/models.
struct ServiceConfig {
  std::string listen_address = "127.0.0.1";
  int port = 8080;
  std::filesystem::path model_dir = "models";
  std::filesystem::path survey_log = "survey_log.ndjson";
  std::filesystem::path static_dir;  // chat UI bundle; empty = not served
  std::size_t grid_cap = 4096;
  std::size_t workers = 1;  // grid-search threads per training job
  std::size_t max_concurrent_jobs = 4;
  std::size_t max_queued_jobs = 16;
  std::size_t upload_limit_bytes = 512000;
  int session_idle_minutes = 30;
  std::uint64_t training_seed = 20220901;
};

inline constexpr const char* kEnvPrefix = "IMEDBOT_";

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message) : Error("ConfigError", message) {}
};

ServiceConfig parse_config(std::string_view json_text);
ServiceConfig load_config(const std::filesystem::path& path);

// `getenv` is injectable for tests; defaults to std::getenv.
void apply_env_overrides(
    ServiceConfig& cfg,
    const std::function<std::optional<std::string>(const std::string&)>& getenv = {});

}  // namespace imedbot::agent
