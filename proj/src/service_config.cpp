#include "imedbot/service_config.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>

#include "json.hpp"

namespace imedbot::agent {

namespace {

using Json = nlohmann::json;

template <typename T>
T number(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(text, &used);
    if (used != text.size() || v < 0) throw std::invalid_argument(text);
    return static_cast<T>(v);
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + text + "'");
  }
}

// Applies one key from either source; values arrive as JSON.
void assign(ServiceConfig& cfg, const std::string& key, const Json& v) {
  auto str = [&] {
    if (!v.is_string()) throw ConfigError(key + ": expected a string");
    return v.get<std::string>();
  };
  auto uint = [&]() -> std::uint64_t {
    if (!v.is_number_unsigned()) throw ConfigError(key + ": expected a non-negative integer");
    return v.get<std::uint64_t>();
  };
  if (key == "listen_address") cfg.listen_address = str();
  else if (key == "port") cfg.port = static_cast<int>(uint());
  else if (key == "model_dir") cfg.model_dir = str();
  else if (key == "survey_log") cfg.survey_log = str();
  else if (key == "static_dir") cfg.static_dir = str();
  else if (key == "grid_cap") cfg.grid_cap = uint();
  else if (key == "workers") cfg.workers = uint();
  else if (key == "max_concurrent_jobs") cfg.max_concurrent_jobs = uint();
  else if (key == "max_queued_jobs") cfg.max_queued_jobs = uint();
  else if (key == "upload_limit_bytes") cfg.upload_limit_bytes = uint();
  else if (key == "session_idle_minutes") cfg.session_idle_minutes = static_cast<int>(uint());
  else if (key == "training_seed") cfg.training_seed = uint();
  else throw ConfigError("unknown configuration key '" + key + "'");
}

const char* const kKeys[] = {
    "listen_address", "port",           "model_dir",           "survey_log",
    "static_dir",     "grid_cap",       "workers",             "max_concurrent_jobs",
    "max_queued_jobs", "upload_limit_bytes", "session_idle_minutes", "training_seed"};

bool is_string_key(const std::string& key) {
  return key == "listen_address" || key == "model_dir" || key == "survey_log" ||
         key == "static_dir";
}

void check(const ServiceConfig& cfg) {
  if (cfg.port > 65535) throw ConfigError("port must be <= 65535");
  if (cfg.workers == 0) throw ConfigError("workers must be >= 1");
  if (cfg.max_concurrent_jobs == 0) throw ConfigError("max_concurrent_jobs must be >= 1");
  if (cfg.grid_cap == 0) throw ConfigError("grid_cap must be >= 1");
}

}  // namespace

ServiceConfig parse_config(std::string_view json_text) {
  Json j;
  try {
    j = Json::parse(json_text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("configuration is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  ServiceConfig cfg;
  for (const auto& [key, value] : j.items()) assign(cfg, key, value);
  check(cfg);
  return cfg;
}

ServiceConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read configuration file " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config(text);
}

void apply_env_overrides(
    ServiceConfig& cfg,
    const std::function<std::optional<std::string>(const std::string&)>& getenv) {
  auto lookup = [&](const std::string& name) -> std::optional<std::string> {
    if (getenv) return getenv(name);
    if (const char* v = std::getenv(name.c_str())) return std::string(v);
    return std::nullopt;
  };
  for (const std::string key : kKeys) {
    std::string env = kEnvPrefix;
    for (char c : key) env += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    const auto value = lookup(env);
    if (!value) continue;
    if (is_string_key(key)) assign(cfg, key, Json(*value));
    else assign(cfg, key, Json(number<std::uint64_t>(env, *value)));
  }
  check(cfg);
}

}  // namespace imedbot::agent
