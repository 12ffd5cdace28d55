#include "doctest.h"

#include "httplib.h"
#include "imedbot/agent_service.hpp"
#include "imedbot/http_server.hpp"
#include "support.hpp"

#include <cstdio>
#include <functional>
#include <sstream>
#include <thread>

using namespace imedbot;
using agent::AgentService;
using agent::ApiError;
using codec::Json;

namespace {

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

ApiError expect_api_error(const std::function<void()>& f) {
  try {
    f();
  } catch (const ApiError& e) {
    return e;
  }
  FAIL("expected an ApiError");
  return ApiError(0, "", "");
}

struct FakeClock {
  std::shared_ptr<std::chrono::steady_clock::time_point> now =
      std::make_shared<std::chrono::steady_clock::time_point>();
  AgentService::Clock fn() const {
    return [now = now] { return *now; };
  }
  void advance(std::chrono::minutes m) const { *now += m; }
};

// Horizon-5 model over two predictors p0, p1 with values {a, b}.
vault::ModelArtifact tiny_artifact() {
  vault::ModelArtifact a;
  a.horizon = 5;
  a.encoder = data::FeatureEncoder::from_columns(
      {{"p0", {"a", "b"}, 0}, {"p1", {"a", "b"}, 0}}, "y", {"0", "1"});
  a.catalog = vault::PredictorCatalog::from_encoder(a.encoder);
  a.setting.hidden_layer_count = 1;
  a.setting.hidden_units = 3;
  a.weights = nn::init_weights({a.setting, 99, a.encoder.width()});
  a.provenance = "tiny test model";
  return a;
}

struct Fixture {
  support::TempDir dir;
  FakeClock clock;
  std::shared_ptr<vault::ModelRegistry> registry;
  std::unique_ptr<AgentService> service;

  explicit Fixture(bool demo_models = true,
                   const std::function<void(agent::ServiceConfig&)>& tweak = {}) {
    agent::ServiceConfig cfg;
    cfg.survey_log = dir.path / "survey.ndjson";
    cfg.max_concurrent_jobs = 2;
    if (tweak) tweak(cfg);
    if (demo_models) {
      registry = std::make_shared<vault::ModelRegistry>(support::demo_dir());
    } else {
      registry = std::make_shared<vault::ModelRegistry>(dir.path / "models");
      registry->put(tiny_artifact());
    }
    service = std::make_unique<AgentService>(cfg, registry, clock.fn());
  }
};

std::string small_csv() {
  return "colour,size,shape,label\n"
         "red,big,round,yes\n"
         "red,small,square,no\n"
         "blue,big,round,yes\n"
         "blue,small,square,no\n"
         "green,big,round,yes\n"
         "green,small,round,no\n"
         "red,big,square,no\n";
}

// Exactly `size` bytes of valid CSV.
std::string csv_of_size(std::size_t size) {
  std::string out = "f1,f2,label\n";
  int k = 0;
  while (true) {
    const std::string row = "v" + std::to_string(k % 3) + ",w" + std::to_string(k % 5) + "," +
                            std::to_string(k % 2) + "\n";
    if (out.size() + row.size() + 40 > size) break;
    out += row;
    ++k;
  }
  const std::string tail = ",w0,1\n";
  out += "z" + std::string(size - out.size() - tail.size() - 1, 'q') + tail;
  return out;
}

std::string demo_csv() { return support::slurp(support::data_dir() / "demo_separable.csv"); }

std::string to_training(AgentService& svc, const std::string& csv, const std::string& label) {
  const auto id = svc.create_session("training").at("session_id").get<std::string>();
  svc.upload_dataset(id, csv, label);
  svc.confirm(id);
  return id;
}

}  // namespace

TEST_CASE("sessions start in the flow's first state with distinct ids") {
  Fixture f;
  const auto p = f.service->create_session("prediction");
  const auto t = f.service->create_session("training");
  CHECK(p.at("state") == "ChooseHorizon");
  CHECK(p.at("prompt").at("options") == Json::array({"5", "10", "15"}));
  CHECK(t.at("state") == "AwaitUpload");
  CHECK(p.at("session_id") != t.at("session_id"));
  const auto e = expect_api_error([&] { f.service->create_session("chat"); });
  CHECK(e.status() == 400);
  CHECK(e.code() == "InvalidFlow");
  CHECK(expect_api_error([&] { f.service->get_session("s-nope"); }).status() == 404);
}

TEST_CASE("prediction flow walks every predictor and shows the golden probability") {
  Fixture f;
  auto& svc = *f.service;
  const auto golden = support::golden();
  const auto answers = support::golden_answers();
  const auto id = svc.create_session("prediction").at("session_id").get<std::string>();

  auto v = svc.answer(id, "5");
  const auto model = f.registry->lookup(5);
  for (std::size_t i = 0; i < model->catalog.predictors.size(); ++i) {
    REQUIRE(v.at("state") == "AskPredictor");
    CHECK(v.at("predictor_index") == i);
    const auto& name = model->catalog.predictors[i].name;
    CHECK(v.at("prompt").at("predictor") == name);
    CHECK(v.at("prompt").at("options") == model->catalog.predictors[i].allowed);
    v = svc.answer(id, answers.at(name));
  }
  REQUIRE(v.at("state") == "ShowPrediction");
  CHECK(v.at("prompt").at("probability") == golden.at("horizons").at("5").at("display4"));
  CHECK(v.at("prompt").at("disclaimer") == model->provenance);

  CHECK(svc.confirm(id).at("state") == "Survey");
  const auto done = svc.submit_survey(id, {{"rating", 5}});
  CHECK(done.at("state") == "Done");
  CHECK(done.at("acknowledged") == true);
  const auto again = expect_api_error([&] { svc.submit_survey(id, {{"rating", 4}}); });
  CHECK(again.status() == 409);
  CHECK(again.code() == "WrongState");
}

TEST_CASE("an invalid answer leaves the state unchanged and lists the allowed values") {
  Fixture f;
  auto& svc = *f.service;
  const auto id = svc.create_session("prediction").at("session_id").get<std::string>();
  auto e = expect_api_error([&] { svc.answer(id, "7"); });
  CHECK(e.status() == 422);
  CHECK(e.code() == "InvalidValue");
  CHECK(e.details().at("allowed") == Json::array({"5", "10", "15"}));
  CHECK(svc.get_session(id).at("state") == "ChooseHorizon");

  svc.answer(id, "10");
  e = expect_api_error([&] { svc.answer(id, "ancient"); });
  CHECK(e.code() == "InvalidValue");
  CHECK(e.details().at("predictor") == "age_group");
  CHECK(e.details().at("value") == "ancient");
  CHECK(e.details().at("allowed").size() == 5);
  const auto s = svc.get_session(id);
  CHECK(s.at("state") == "AskPredictor");
  CHECK(s.at("predictor_index") == 0);
}

TEST_CASE("actions outside their state are rejected with WrongState") {
  Fixture f;
  auto& svc = *f.service;
  const auto pred = svc.create_session("prediction").at("session_id").get<std::string>();
  const auto train = svc.create_session("training").at("session_id").get<std::string>();
  CHECK(expect_api_error([&] { svc.upload_dataset(pred, small_csv(), "label"); }).status() == 409);
  CHECK(expect_api_error([&] { svc.confirm(pred); }).status() == 409);
  CHECK(expect_api_error([&] { svc.start_training(pred, {{"grid", "defaults"}}); }).status() == 409);
  CHECK(expect_api_error([&] { svc.submit_survey(pred, {{"rating", 3}}); }).status() == 409);
  CHECK(expect_api_error([&] { svc.answer(train, "5"); }).status() == 409);
  CHECK(expect_api_error([&] { svc.confirm(train); }).status() == 409);
  CHECK(expect_api_error([&] { svc.start_training(train, {{"grid", "defaults"}}); }).status() == 409);
}

// Every action sequence up to length 6 over a small alphabet, checked step by
// step against a reference model of the prediction machine.
TEST_CASE("exhaustive small traces never reach a prediction without one valid answer each") {
  Fixture f(false);
  auto& svc = *f.service;
  const auto model = f.registry->lookup(5);
  enum Act { kHorizon, kA, kB, kBogus, kConfirm, kSurvey, kCount };
  const char* values[] = {"5", "a", "b", "zz"};

  struct Ref {
    std::string state = "ChooseHorizon";
    std::size_t index = 0;
    std::map<std::string, std::string> answers;
  };

  std::vector<int> trace;
  std::size_t traces = 0;
  std::size_t predictions = 0;
  std::function<void(std::size_t)> walk = [&](std::size_t depth) {
    // Replay the trace on a fresh session alongside the reference model.
    const auto id = svc.create_session("prediction").at("session_id").get<std::string>();
    Ref ref;
    for (int act : trace) {
      int expect_status = 200;
      Ref next = ref;
      if (act <= kBogus) {
        const std::string value = values[act];
        if (ref.state == "ChooseHorizon") {
          if (value == "5") next.state = "AskPredictor";
          else expect_status = 422;
        } else if (ref.state == "AskPredictor") {
          if (value == "a" || value == "b") {
            next.answers["p" + std::to_string(ref.index)] = value;
            if (ref.index + 1 < 2) ++next.index;
            else next.state = "ShowPrediction";
          } else {
            expect_status = 422;
          }
        } else {
          expect_status = 409;
        }
      } else if (act == kConfirm) {
        if (ref.state == "ShowPrediction") next.state = "Survey";
        else expect_status = 409;
      } else {
        if (ref.state == "Survey") next.state = "Done";
        else expect_status = 409;
      }

      int status = 200;
      Json v;
      try {
        if (act <= kBogus) v = svc.answer(id, values[act]);
        else if (act == kConfirm) v = svc.confirm(id);
        else v = svc.submit_survey(id, {{"rating", 3}});
      } catch (const ApiError& e) {
        status = e.status();
      }
      REQUIRE(status == expect_status);
      if (status == 200) ref = next;
      const auto s = svc.get_session(id);
      REQUIRE(s.at("state") == ref.state);
      if (ref.state == "AskPredictor") REQUIRE(s.at("predictor_index") == ref.index);
      if (ref.state == "ShowPrediction") {
        REQUIRE(ref.answers.size() == 2);
        REQUIRE(s.at("prompt").at("probability") == fixed4(model->predict(ref.answers)));
        ++predictions;
      }
    }
    ++traces;
    if (depth == 0) return;
    for (int act = 0; act < kCount; ++act) {
      trace.push_back(act);
      walk(depth - 1);
      trace.pop_back();
    }
  };
  walk(6);
  CHECK(traces == 55987);  // sum of 6^k for k = 0..6
  CHECK(predictions > 0);
}

TEST_CASE("upload size limit is checked before parsing") {
  Fixture f;
  auto& svc = *f.service;
  const auto at_limit = csv_of_size(512000);
  REQUIRE(at_limit.size() == 512000);
  const auto over = csv_of_size(512001);
  REQUIRE(over.size() == 512001);

  auto id = svc.create_session("training").at("session_id").get<std::string>();
  auto e = expect_api_error([&] { svc.upload_dataset(id, over, "label"); });
  CHECK(e.status() == 413);
  CHECK(e.code() == "PayloadTooLarge");
  CHECK(e.details().at("size") == 512001);
  CHECK(e.details().at("limit") == 512000);
  CHECK(svc.get_session(id).at("state") == "AwaitUpload");

  // Garbage that would fail parsing still reports the size first.
  e = expect_api_error([&] { svc.upload_dataset(id, std::string(600000, ','), "label"); });
  CHECK(e.status() == 413);
  // So does a declared length over the limit.
  e = expect_api_error([&] { svc.upload_dataset(id, small_csv(), "label", 512001); });
  CHECK(e.status() == 413);

  const auto ok = svc.upload_dataset(id, at_limit, "label");
  CHECK(ok.at("state") == "ReviewDataset");
}

TEST_CASE("upload summary lists columns, class balance and a preview") {
  Fixture f;
  auto& svc = *f.service;
  const auto id = svc.create_session("training").at("session_id").get<std::string>();
  const auto v = svc.upload_dataset(id, small_csv(), "label");
  CHECK(v.at("state") == "ReviewDataset");
  const auto& s = v.at("summary");
  CHECK(s.at("rows") == 7);
  CHECK(s.at("feature_columns") == 3);
  CHECK(s.at("columns").size() == 4);
  CHECK(s.at("columns")[0].at("name") == "colour");
  CHECK(s.at("columns")[0].at("category_count") == 3);
  CHECK(s.at("columns")[3].at("role") == "label");
  CHECK(s.at("class_balance").at("yes") == 3);
  CHECK(s.at("class_balance").at("no") == 4);
  CHECK(s.at("preview").size() == 5);
  CHECK(s.at("preview")[0] == Json::array({"red", "big", "round", "yes"}));
  CHECK(svc.confirm(id).at("state") == "ConfigureGrid");
}

TEST_CASE("label defaults to the last column") {
  Fixture f;
  auto& svc = *f.service;
  const auto id = svc.create_session("training").at("session_id").get<std::string>();
  const auto v = svc.upload_dataset(id, small_csv(), std::nullopt);
  CHECK(v.at("summary").at("label_column") == "label");
}

TEST_CASE("parse errors come back as 422 with the dataset error payload") {
  Fixture f;
  auto& svc = *f.service;
  const auto id = svc.create_session("training").at("session_id").get<std::string>();
  const std::string three = "a,b\nx,1\ny,2\nx,3\ny,1\n";
  auto e = expect_api_error([&] { svc.upload_dataset(id, three, "b"); });
  CHECK(e.status() == 422);
  CHECK(e.code() == "LabelNotBinary");
  CHECK(e.details().at("distinct_values") == 3);
  CHECK(e.details().at("column") == "b");

  e = expect_api_error([&] { svc.upload_dataset(id, "a,b\nx,1\ny\n", "b"); });
  CHECK(e.code() == "RaggedRow");
  CHECK(e.details().at("line") == 3);
  const auto j = e.to_json();
  CHECK(j.at("error").at("code") == "RaggedRow");
  CHECK(!j.at("error").at("message").get<std::string>().empty());
  CHECK(svc.get_session(id).at("state") == "AwaitUpload");
}

TEST_CASE("training requests: defaults, singleton, caps and malformed grids") {
  Fixture f;
  auto& svc = *f.service;
  const auto id = to_training(svc, small_csv(), "label");
  CHECK(svc.get_session(id).at("prompt").at("default_settings") == 12);

  auto e = expect_api_error(
      [&] { svc.start_training(id, {{"learning_rate", Json::array({0.1, 0.2})}, {"epochs", "many"}}); });
  CHECK(e.status() == 422);
  CHECK(e.code() == "InvalidGrid");

  std::vector<double> rates(20);
  for (std::size_t i = 0; i < rates.size(); ++i) rates[i] = 0.001 * (i + 1);
  std::vector<int> units(15, 4);
  std::vector<int> epochs(14, 5);
  e = expect_api_error([&] {
    svc.start_training(id, {{"learning_rate", rates}, {"hidden_units", units}, {"epochs", epochs}});
  });
  CHECK(e.status() == 422);
  CHECK(e.code() == "GridTooLarge");
  CHECK(e.details().at("count") == 4200);
  CHECK(svc.get_session(id).at("state") == "ConfigureGrid");

  const auto v = svc.start_training(id, {{"grid", "defaults"}});
  CHECK(v.at("state") == "Running");
  CHECK(v.at("settings") == 12);
  const auto job = v.at("job_id").get<std::string>();
  CHECK(svc.job_status(job).at("progress").at("total") == 12);

  const auto id2 = to_training(svc, small_csv(), "label");
  const auto v2 = svc.start_training(id2, {{"grid", {{"epochs", {5}}}}, {"seed", 3}});
  CHECK(v2.at("settings") == 1);
  svc.wait_for_jobs();
}

TEST_CASE("a full training job succeeds on the separable demo data") {
  Fixture f;
  auto& svc = *f.service;
  const auto id = to_training(svc, demo_csv(), "outcome");
  const auto job = svc.start_training(id, {{"grid", "defaults"}}).at("job_id").get<std::string>();
  const auto first = svc.job_status(job).at("status").get<std::string>();
  CHECK((first == "queued" || first == "running" || first == "succeeded"));
  svc.wait_for_jobs();

  const auto s1 = svc.job_status(job);
  const auto s2 = svc.job_status(job);
  CHECK(s1 == s2);
  REQUIRE(s1.at("status") == "succeeded");
  CHECK(s1.at("progress").at("done") == 12);
  const auto& r = s1.at("result");
  CHECK(r.at("validation_auc").get<double>() >= 0.95);
  CHECK(r.at("per_setting_results").size() == 12);
  CHECK(r.at("roc_svg").get<std::string>().find("<svg ") != std::string::npos);
  CHECK(svc.job_roc_svg(job) == r.at("roc_svg"));

  const auto bytes = svc.job_model(job);
  const auto model = vault::deserialize(bytes);
  CHECK(model.encoder.label_column == "outcome");
  CHECK(model.catalog.predictors.size() == 5);

  const auto v = svc.get_session(id);
  CHECK(v.at("state") == "ShowResults");
  CHECK(v.at("prompt").at("kind") == "results");
  CHECK(svc.submit_survey(id, {{"rating", 4}, {"comment", "fine"}}).at("state") == "Done");

  CHECK(expect_api_error([&] { svc.job_status("j-missing"); }).status() == 404);
  CHECK(expect_api_error([&] { svc.job_model("j-missing"); }).code() == "UnknownJob");
}

TEST_CASE("a failing job ends the session with the error") {
  Fixture f;
  auto& svc = *f.service;
  const auto id = to_training(svc, demo_csv(), "outcome");
  // A huge learning rate with plain SGD and no regularisation diverges.
  const Json grid = {{"learning_rate", {1e300}}, {"optimizer", {"sgd"}}, {"epochs", {3}}};
  const auto job = svc.start_training(id, grid).at("job_id").get<std::string>();
  svc.wait_for_jobs();
  const auto s = svc.job_status(job);
  REQUIRE(s.at("status") == "failed");
  CHECK(s.at("error").at("code") == "NonFiniteLoss");
  CHECK(svc.get_session(id).at("state") == "Done");
  CHECK(svc.get_session(id).at("prompt").at("error").at("code") == "NonFiniteLoss");
  CHECK(expect_api_error([&] { svc.job_model(job); }).status() == 409);
}

TEST_CASE("concurrent jobs for different sessions match a direct serial search") {
  Fixture f(true, [](agent::ServiceConfig& c) {
    c.max_concurrent_jobs = 3;
    c.workers = 2;
  });
  auto& svc = *f.service;
  const Json grid = {{"learning_rate", {0.01, 0.1}}, {"epochs", {15}}, {"seed", 42}};
  std::vector<std::string> jobs;
  for (int i = 0; i < 3; ++i) {
    const auto id = to_training(svc, demo_csv(), "outcome");
    jobs.push_back(svc.start_training(id, grid).at("job_id").get<std::string>());
  }
  svc.wait_for_jobs();

  const auto d = data::parse_csv(demo_csv(), "outcome");
  auto g = search::GridSpec::singleton(search::default_setting());
  g.learning_rate = {0.01, 0.1};
  g.epochs = {15};
  const auto direct = search::run_grid_search(d, g, 42);
  for (const auto& job : jobs) {
    const auto s = svc.job_status(job);
    REQUIRE(s.at("status") == "succeeded");
    CHECK(s.at("result").at("validation_auc").get<double>() == direct.validation_auc);
    CHECK(s.at("result").at("best_index") == direct.best_index);
    CHECK(vault::deserialize(svc.job_model(job)).weights == direct.weights);
  }
}

TEST_CASE("the queue is bounded") {
  Fixture f(true, [](agent::ServiceConfig& c) {
    c.max_concurrent_jobs = 1;
    c.max_queued_jobs = 0;
  });
  auto& svc = *f.service;
  const auto id = to_training(svc, small_csv(), "label");
  const auto e = expect_api_error([&] { svc.start_training(id, {{"grid", "defaults"}}); });
  CHECK(e.status() == 503);
  CHECK(e.code() == "QueueFull");
  CHECK(svc.get_session(id).at("state") == "ConfigureGrid");
}

TEST_CASE("survey ratings are validated and logged as NDJSON") {
  Fixture f;
  auto& svc = *f.service;
  auto to_survey = [&] {
    const auto id = svc.create_session("prediction").at("session_id").get<std::string>();
    svc.answer(id, "15");
    for (const auto& p : f.registry->lookup(15)->catalog.predictors) svc.answer(id, p.allowed[0]);
    svc.confirm(id);
    return id;
  };
  const auto id = to_survey();
  for (const Json& bad : {Json{{"rating", 0}}, Json{{"rating", 6}}, Json{{"rating", "5"}},
                          Json{{"rating", 2.5}}, Json::object()}) {
    const auto e = expect_api_error([&] { svc.submit_survey(id, bad); });
    CHECK(e.status() == 422);
    CHECK(e.code() == "RatingOutOfRange");
  }
  CHECK(svc.get_session(id).at("state") == "Survey");
  svc.submit_survey(id, {{"rating", 1}, {"comment", "line one\nline \"two\""}});
  svc.submit_survey(to_survey(), {{"rating", 5}});

  std::istringstream log(support::slurp(f.dir.path / "survey.ndjson"));
  std::vector<Json> lines;
  for (std::string line; std::getline(log, line);) lines.push_back(Json::parse(line));
  REQUIRE(lines.size() == 2);
  CHECK(lines[0].at("session_id") == id);
  CHECK(lines[0].at("rating") == 1);
  CHECK(lines[0].at("comment") == "line one\nline \"two\"");
  CHECK(lines[0].at("horizon") == 15);
  CHECK(lines[1].at("rating") == 5);
  CHECK(!lines[1].contains("comment"));
}

TEST_CASE("idle sessions expire") {
  Fixture f;
  auto& svc = *f.service;
  const auto id = svc.create_session("prediction").at("session_id").get<std::string>();
  f.clock.advance(std::chrono::minutes(29));
  CHECK(svc.get_session(id).at("state") == "ChooseHorizon");
  f.clock.advance(std::chrono::minutes(29));
  CHECK(svc.answer(id, "5").at("state") == "AskPredictor");
  f.clock.advance(std::chrono::minutes(31));
  const auto e = expect_api_error([&] { svc.get_session(id); });
  CHECK(e.status() == 410);
  CHECK(e.code() == "SessionExpired");
  CHECK(expect_api_error([&] { svc.get_session(id); }).status() == 404);
}

TEST_CASE("model listing reports horizons and provenance") {
  Fixture f;
  const auto m = f.service->list_models().at("models");
  REQUIRE(m.size() == 3);
  CHECK(m[0].at("horizon") == 5);
  CHECK(m[2].at("horizon") == 15);
  CHECK(m[0].at("predictors").size() == 8);
  CHECK(m[1].at("provenance").get<std::string>().find("synthetic") != std::string::npos);
}

TEST_CASE("configuration file and environment overrides") {
  const auto cfg = agent::parse_config(
      R"({"port": 9000, "model_dir": "/srv/m", "grid_cap": 10, "upload_limit_bytes": 1000})");
  CHECK(cfg.port == 9000);
  CHECK(cfg.model_dir == "/srv/m");
  CHECK(cfg.grid_cap == 10);
  CHECK(cfg.upload_limit_bytes == 1000);
  CHECK(cfg.listen_address == "127.0.0.1");
  CHECK(cfg.max_concurrent_jobs == 4);

  CHECK_THROWS_AS(agent::parse_config(R"({"prot": 1})"), agent::ConfigError);
  CHECK_THROWS_AS(agent::parse_config(R"({"port": "80"})"), agent::ConfigError);
  CHECK_THROWS_AS(agent::parse_config(R"({"workers": 0})"), agent::ConfigError);
  CHECK_THROWS_AS(agent::parse_config("[1]"), agent::ConfigError);

  std::map<std::string, std::string> env = {{"IMEDBOT_PORT", "7001"},
                                            {"IMEDBOT_SURVEY_LOG", "/tmp/s.ndjson"},
                                            {"IMEDBOT_WORKERS", "3"}};
  auto getenv = [&](const std::string& k) -> std::optional<std::string> {
    const auto it = env.find(k);
    return it == env.end() ? std::nullopt : std::optional(it->second);
  };
  auto c2 = cfg;
  agent::apply_env_overrides(c2, getenv);
  CHECK(c2.port == 7001);
  CHECK(c2.survey_log == "/tmp/s.ndjson");
  CHECK(c2.workers == 3);
  CHECK(c2.grid_cap == 10);

  env = {{"IMEDBOT_GRID_CAP", "lots"}};
  CHECK_THROWS_AS(agent::apply_env_overrides(c2, getenv), agent::ConfigError);
}

TEST_CASE("HTTP routes map to the service with JSON errors") {
  Fixture f;
  agent::HttpServer server(*f.service);
  const int port = server.start("127.0.0.1", 0);
  httplib::Client http("127.0.0.1", port);
  http.set_read_timeout(60);

  auto post = [&](const std::string& path, const Json& body) {
    return http.Post(path, body.dump(), "application/json");
  };

  auto res = post("/api/sessions", {{"flow", "prediction"}});
  REQUIRE(res);
  CHECK(res->status == 201);
  const auto id = Json::parse(res->body).at("session_id").get<std::string>();
  const auto answers = support::golden_answers();
  res = post("/api/sessions/" + id + "/answer", {{"value", "5"}});
  CHECK(res->status == 200);
  auto v = Json::parse(res->body);
  while (v.at("state") == "AskPredictor") {
    const auto name = v.at("prompt").at("predictor").get<std::string>();
    res = post("/api/sessions/" + id + "/answer", {{"value", answers.at(name)}});
    REQUIRE(res->status == 200);
    v = Json::parse(res->body);
  }
  CHECK(v.at("prompt").at("probability") == support::golden().at("horizons").at("5").at("display4"));

  res = post("/api/sessions/" + id + "/survey", {{"rating", 3}});
  CHECK(res->status == 409);
  CHECK(Json::parse(res->body).at("error").at("code") == "WrongState");

  res = http.Post("/api/sessions/" + id + "/answer", "{not json", "application/json");
  CHECK(res->status == 400);
  CHECK(Json::parse(res->body).at("error").at("code") == "InvalidBody");

  res = http.Get("/api/nowhere");
  CHECK(res->status == 404);
  CHECK(Json::parse(res->body).at("error").at("code") == "NotFound");

  res = http.Get("/api/jobs/j-missing");
  CHECK(res->status == 404);
  CHECK(Json::parse(res->body).at("error").at("code") == "UnknownJob");

  res = http.Get("/api/models");
  CHECK(res->status == 200);
  CHECK(Json::parse(res->body).at("models").size() == 3);

  const auto tid = Json::parse(post("/api/sessions", {{"flow", "training"}})->body)
                       .at("session_id")
                       .get<std::string>();
  res = http.Post("/api/sessions/" + tid + "/dataset?label=label", csv_of_size(512001), "text/csv");
  CHECK(res->status == 413);
  CHECK(Json::parse(res->body).at("error").at("code") == "PayloadTooLarge");

  res = http.Post("/api/sessions/" + tid + "/dataset?label=b", "a,b\nx,1\ny,2\nz,3\nx,1\n", "text/csv");
  CHECK(res->status == 422);
  CHECK(Json::parse(res->body).at("error").at("details").at("distinct_values") == 3);

  httplib::MultipartFormDataItems form = {{"file", small_csv(), "data.csv", "text/csv"}};
  res = http.Post("/api/sessions/" + tid + "/dataset?label=label", form);
  REQUIRE(res->status == 200);
  CHECK(Json::parse(res->body).at("summary").at("rows") == 7);
  CHECK(post("/api/sessions/" + tid + "/confirm", Json::object())->status == 200);
  res = post("/api/sessions/" + tid + "/train", {{"grid", {{"epochs", {5}}}}});
  CHECK(res->status == 202);
  const auto job = Json::parse(res->body).at("job_id").get<std::string>();
  f.service->wait_for_jobs();

  res = http.Get("/api/jobs/" + job);
  CHECK(Json::parse(res->body).at("status") == "succeeded");
  res = http.Get("/api/jobs/" + job + "/roc.svg");
  CHECK(res->status == 200);
  CHECK(res->get_header_value("Content-Type") == "image/svg+xml");
  res = http.Get("/api/jobs/" + job + "/model");
  CHECK(res->status == 200);
  const std::vector<std::uint8_t> bytes(res->body.begin(), res->body.end());
  CHECK(bytes == f.service->job_model(job));
  server.stop();
}

TEST_CASE("static files are served at the root when configured") {
  support::TempDir web;
  {
    std::ofstream(web.path / "index.html") << "<html>chat</html>";
  }
  Fixture f(true, [&](agent::ServiceConfig& c) { c.static_dir = web.path; });
  agent::HttpServer server(*f.service);
  const int port = server.start("127.0.0.1", 0);
  httplib::Client http("127.0.0.1", port);
  const auto res = http.Get("/");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->body == "<html>chat</html>");
  CHECK(http.Get("/api/models")->status == 200);
}
