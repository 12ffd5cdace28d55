// Acceptance suite: one PASS/FAIL line per criterion, each with its time
// budget. Exits non-zero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "imedbot/agent_service.hpp"
#include "imedbot/codec.hpp"
#include "imedbot/grid_search.hpp"
#include "imedbot/http_server.hpp"
#include "imedbot/metrics.hpp"
#include "imedbot/model_vault.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace imedbot;
using codec::Json;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void fail(Outcome& o, const std::string& why) {
  if (o.ok) o.detail.clear();
  o.ok = false;
  o.detail += (o.detail.empty() ? "" : "; ") + why;
}

Outcome gradient_check() {
  Outcome o;
  Rng rng(20240601);
  const nn::Activation acts[] = {nn::Activation::kRelu, nn::Activation::kTanh,
                                 nn::Activation::kSigmoid};
  constexpr int kNets = 25;
  double worst = 0.0;
  for (int trial = 0; trial < kNets; ++trial) {
    nn::TrainConfig cfg;
    cfg.setting.hidden_layer_count = 1 + static_cast<int>(rng.below(3));
    cfg.setting.hidden_units = 2 + static_cast<int>(rng.below(5));
    cfg.setting.hidden_activation = acts[rng.below(3)];
    cfg.setting.weight_init = nn::WeightInit::kXavierUniform;
    cfg.setting.l2_lambda = rng.below(2) ? 0.0 : rng.uniform(0.0, 0.1);
    cfg.input_width = 2 + rng.below(5);
    cfg.seed = rng.next();
    auto w = nn::init_weights(cfg);
    for (auto& l : w.layers)
      for (double& b : l.bias) b = rng.uniform(-0.5, 0.5);

    const std::size_t n = 1 + rng.below(8);
    std::vector<std::vector<double>> xs;
    std::vector<double> flat, ys;
    for (std::size_t s = 0; s < n; ++s) {
      std::vector<double> x(cfg.input_width);
      for (double& v : x) v = rng.uniform(-1.0, 1.0);
      flat.insert(flat.end(), x.begin(), x.end());
      xs.push_back(x);
      ys.push_back(static_cast<double>(rng.below(2)));
    }
    const auto analytic =
        nn::backprop_gradients(w, {flat, ys, cfg.input_width}, cfg.setting).gradients;
    const auto numeric = oracle::finite_difference_gradients(
        w, xs, ys, cfg.setting.hidden_activation, cfg.setting.l2_lambda);
    auto cmp = [&](double a, double b) {
      const double rel = std::abs(a - b) / std::max(1e-8, std::abs(a) + std::abs(b));
      worst = std::max(worst, rel);
    };
    for (std::size_t l = 0; l < w.layers.size(); ++l) {
      for (std::size_t i = 0; i < w.layers[l].weights.data.size(); ++i)
        cmp(analytic.layers[l].weights.data[i], numeric.layers[l].weights.data[i]);
      for (std::size_t i = 0; i < w.layers[l].bias.size(); ++i)
        cmp(analytic.layers[l].bias[i], numeric.layers[l].bias[i]);
    }
  }
  o.detail = std::to_string(kNets) + " nets, worst relative error " + fmt("%.2e", worst);
  if (worst > 1e-4) fail(o, "relative error " + fmt("%.2e", worst) + " > 1e-4");
  return o;
}

Outcome auc_oracle() {
  Outcome o;
  Rng rng(20240602);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(199);
    std::vector<double> scores(n), labels(n);
    const bool coarse = rng.below(2) == 0;
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = coarse ? static_cast<double>(rng.below(6)) : rng.uniform();
      labels[i] = static_cast<double>(rng.below(2));
    }
    // both classes present, at random positions
    const std::size_t neg = rng.below(n);
    labels[neg] = 0.0;
    labels[(neg + 1 + rng.below(n - 1)) % n] = 1.0;
    const double got = metrics::roc_curve(scores, labels).auc;
    worst = std::max(worst, std::abs(got - oracle::pair_count_auc(scores, labels)));
  }
  o.detail = "100 instances, worst |difference| " + fmt("%.2e", worst);
  if (worst > 1e-9) fail(o, "difference " + fmt("%.2e", worst) + " > 1e-9");
  return o;
}

Outcome stratification() {
  Outcome o;
  Rng rng(20240603);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 10 + rng.below(491);
    const auto d = data::parse_csv(oracle::random_csv(rng, n, 1 + rng.below(4)), "y");
    const auto plan = data::make_split(d, rng.next());

    std::vector<int> seen(n, 0);
    for (auto i : plan.train) seen[i] += 1;
    for (auto i : plan.validation) seen[i] += 10;
    for (const auto& f : plan.folds)
      for (auto i : f) seen[i] += 100;
    for (std::size_t i = 0; i < n; ++i) {
      if (seen[i] != 101 && seen[i] != 10) {
        fail(o, "row " + std::to_string(i) + " misplaced in trial " + std::to_string(trial));
        return o;
      }
    }
    const double ratio = static_cast<double>(d.class_count(1)) / static_cast<double>(n);
    auto deviation = [&](const std::vector<std::size_t>& part) {
      double pos = 0;
      for (auto i : part) pos += d.labels[i];
      return std::abs(pos - ratio * static_cast<double>(part.size()));
    };
    worst = std::max({worst, deviation(plan.train), deviation(plan.validation)});
    for (const auto& f : plan.folds) worst = std::max(worst, deviation(f));
  }
  o.detail = "100 datasets, disjoint partitions, worst class deviation " +
             fmt("%.3f", worst) + " samples";
  if (worst > 1.0 + 1e-9) fail(o, "deviation " + fmt("%.3f", worst) + " > 1");
  return o;
}

data::Dataset separable() {
  return data::parse_csv(support::slurp(support::data_dir() / "demo_separable.csv"), "outcome");
}

std::string report_text(const search::GridReport& r, const search::GridSpec& g) {
  return codec::report_to_json(r, search::enumerate_settings(g, search::kDefaultGridCap)).dump();
}

Outcome grid_determinism() {
  Outcome o;
  const auto d = separable();
  const auto g = search::default_grid();
  search::SearchOptions serial, parallel;
  parallel.workers = 4;
  const auto a = search::run_grid_search(d, g, 31337, serial);
  const auto b = search::run_grid_search(d, g, 31337, parallel);
  const auto c = search::run_grid_search(d, g, 31337, serial);
  o.detail = std::to_string(a.per_setting_results.size()) + " settings";
  if (a.per_setting_results.size() != 12) fail(o, "expected 12 settings");
  if (!(a == b) || report_text(a, g) != report_text(b, g)) fail(o, "serial != 4 workers");
  if (!(a == c) || report_text(a, g) != report_text(c, g)) fail(o, "run 1 != run 2");
  if (o.ok) o.detail += ", serial == 4 workers == repeat (bit-identical)";
  return o;
}

Outcome learnability() {
  Outcome o;
  const auto d = separable();
  const auto real = search::run_grid_search(d, search::default_grid(), 7);

  // Same rows, labels shuffled with a fixed seed.
  auto permuted = d;
  std::vector<std::size_t> order(d.row_count());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(0x9E3779B97F4A7C15ull);
  rng.shuffle(std::span<std::size_t>(order));
  for (std::size_t i = 0; i < order.size(); ++i) {
    permuted.labels[i] = d.labels[order[i]];
    permuted.rows[i][d.label_index] = d.rows[order[i]][d.label_index];
  }
  const auto noise = search::run_grid_search(permuted, search::default_grid(), 7);

  o.detail = "separable validation AUC " + fmt("%.4f", real.validation_auc) +
             ", permuted-label validation AUC " + fmt("%.4f", noise.validation_auc);
  if (real.validation_auc < 0.95) fail(o, "separable AUC " + fmt("%.4f", real.validation_auc) + " < 0.95");
  if (noise.validation_auc < 0.35 || noise.validation_auc > 0.65) {
    fail(o, "permuted AUC " + fmt("%.4f", noise.validation_auc) + " outside [0.35, 0.65]");
  }
  return o;
}

vault::ModelArtifact random_artifact(Rng& rng) {
  std::vector<data::FeatureEncoder::Column> cols;
  const std::size_t n_cols = 1 + rng.below(5);
  for (std::size_t c = 0; c < n_cols; ++c) {
    std::vector<std::string> cats;
    for (std::size_t k = 0, n = 1 + rng.below(5); k < n; ++k) cats.push_back("v" + std::to_string(k));
    cols.push_back({"p" + std::to_string(c), cats, 0});
  }
  vault::ModelArtifact a;
  a.encoder = data::FeatureEncoder::from_columns(cols, "y", {"0", "1"});
  a.catalog = vault::PredictorCatalog::from_encoder(a.encoder);
  if (rng.below(2)) a.horizon = vault::kHorizons[rng.below(3)];
  a.setting.hidden_layer_count = 1 + static_cast<int>(rng.below(3));
  a.setting.hidden_units = 1 + static_cast<int>(rng.below(8));
  a.setting.hidden_activation = static_cast<nn::Activation>(rng.below(3));
  a.setting.learning_rate = rng.uniform(0.0, 0.2);
  a.provenance = "artifact " + std::to_string(rng.next());
  a.weights = nn::init_weights({a.setting, rng.next(), a.encoder.width()});
  for (auto& l : a.weights.layers)
    for (double& b : l.bias) b = rng.uniform(-1.0, 1.0);
  return a;
}

Outcome serialization() {
  Outcome o;
  Rng rng(20240606);
  std::size_t corruptions = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto a = random_artifact(rng);
    const auto bytes = vault::serialize(a);
    const auto b = vault::deserialize(bytes);
    if (!(a == b)) fail(o, "roundtrip " + std::to_string(trial) + " differs");
    for (int k = 0; k < 5; ++k) {
      std::map<std::string, std::string> answers;
      for (const auto& p : a.catalog.predictors) answers[p.name] = p.allowed[rng.below(p.allowed.size())];
      if (a.predict(answers) != b.predict(answers)) fail(o, "prediction differs after roundtrip");
    }
    // Single-byte corruption anywhere past the version field.
    for (int k = 0; k < 20; ++k) {
      auto bad = bytes;
      const std::size_t at = 8 + rng.below(bad.size() - 8);
      bad[at] ^= static_cast<std::uint8_t>(1 + rng.below(255));
      ++corruptions;
      try {
        vault::deserialize(bad);
        fail(o, "corruption at byte " + std::to_string(at) + " not detected");
      } catch (const vault::VaultError& e) {
        if (e.kind() != vault::VaultError::Kind::kChecksumMismatch) {
          fail(o, std::string("corruption gave ") + e.code());
        }
      }
    }
  }
  if (o.ok) {
    o.detail = "100 roundtrips equal with identical predictions, " + std::to_string(corruptions) +
               " corruptions all ChecksumMismatch";
  }
  return o;
}

Outcome service_contract() {
  Outcome o;
  support::TempDir dir;
  agent::ServiceConfig cfg;
  cfg.survey_log = dir.path / "survey.ndjson";
  auto registry = std::make_shared<vault::ModelRegistry>(support::demo_dir());
  agent::AgentService service(cfg, registry);
  agent::HttpServer server(service);
  const int port = server.start("127.0.0.1", 0);
  httplib::Client http("127.0.0.1", port);
  http.set_read_timeout(120);

  auto post = [&](const std::string& path, const Json& body) {
    auto res = http.Post(path, body.dump(), "application/json");
    if (!res) throw std::runtime_error("no response from " + path);
    return std::make_pair(res->status, Json::parse(res->body));
  };

  // Prediction flow, ChooseHorizon through Survey.
  const auto golden = support::golden();
  const auto answers = support::golden_answers();
  auto [status, v] = post("/api/sessions", {{"flow", "prediction"}});
  const auto id = v.at("session_id").get<std::string>();
  std::vector<std::string> trace = {v.at("state")};
  std::tie(status, v) = post("/api/sessions/" + id + "/answer", {{"value", "5"}});
  trace.push_back(v.at("state"));
  while (status == 200 && v.at("state") == "AskPredictor") {
    const auto name = v.at("prompt").at("predictor").get<std::string>();
    std::tie(status, v) = post("/api/sessions/" + id + "/answer", {{"value", answers.at(name)}});
    trace.push_back(v.at("state"));
  }
  const std::string expected = golden.at("horizons").at("5").at("display4");
  const std::string shown = v.contains("prompt") ? v.at("prompt").value("probability", "") : "";
  if (shown != expected) fail(o, "prediction " + shown + " != golden " + expected);
  std::tie(status, v) = post("/api/sessions/" + id + "/confirm", Json::object());
  trace.push_back(v.at("state"));
  std::tie(status, v) = post("/api/sessions/" + id + "/survey", {{"rating", 5}});
  trace.push_back(v.value("state", ""));
  const std::vector<std::string> want = {"ChooseHorizon", "AskPredictor", "AskPredictor",
                                         "AskPredictor",  "AskPredictor", "AskPredictor",
                                         "AskPredictor",  "AskPredictor", "AskPredictor",
                                         "ShowPrediction", "Survey",      "Done"};
  if (trace != want) fail(o, "unexpected prediction state trace");

  // Oversize and invalid uploads.
  const auto tid = post("/api/sessions", {{"flow", "training"}}).second.at("session_id").get<std::string>();
  std::string big = "a,label\n";
  while (big.size() < 512001) big += "x,1\n";
  big.resize(512001);
  auto res = http.Post("/api/sessions/" + tid + "/dataset?label=label", big, "text/csv");
  if (!res || res->status != 413) fail(o, "oversize upload did not return 413");
  res = http.Post("/api/sessions/" + tid + "/dataset?label=label", "a,label\nx,1\ny\n", "text/csv");
  std::string invalid_code;
  if (res && res->status == 422) {
    const auto err = Json::parse(res->body).at("error");
    invalid_code = err.at("code");
    if (!err.contains("message") || !err.contains("details")) fail(o, "422 body is not structured");
  } else {
    fail(o, "invalid CSV did not return 422");
  }

  // Training flow on the separable demo CSV with the default grid.
  res = http.Post("/api/sessions/" + tid + "/dataset?label=outcome",
                  support::slurp(support::data_dir() / "demo_separable.csv"), "text/csv");
  if (!res || res->status != 200) fail(o, "demo CSV upload rejected");
  post("/api/sessions/" + tid + "/confirm", Json::object());
  std::tie(status, v) = post("/api/sessions/" + tid + "/train", {{"grid", "defaults"}});
  if (status != 202) {
    fail(o, "training did not start");
    return o;
  }
  const auto job = v.at("job_id").get<std::string>();
  Json snapshot;
  for (int i = 0; i < 2400; ++i) {
    res = http.Get("/api/jobs/" + job);
    snapshot = Json::parse(res->body);
    if (snapshot.at("status") == "succeeded" || snapshot.at("status") == "failed") break;
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }
  double auc = -1.0;
  if (snapshot.at("status") != "succeeded") {
    fail(o, "training job ended " + snapshot.at("status").get<std::string>());
  } else {
    auc = snapshot.at("result").at("validation_auc");
    if (auc < 0.95) fail(o, "training AUC " + fmt("%.4f", auc) + " < 0.95");
  }
  server.stop();
  if (o.ok) {
    o.detail = "prediction " + shown + " == golden, oversize 413, invalid CSV 422 " +
               invalid_code + ", training succeeded with validation AUC " + fmt("%.4f", auc);
  }
  return o;
}

struct Criterion {
  const char* name;
  double budget_seconds;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const Criterion criteria[] = {
      {"gradient correctness", 10, gradient_check},
      {"AUC oracle equivalence", 5, auc_oracle},
      {"stratification properties", 10, stratification},
      {"grid-search determinism and parallelism invariance", 120, grid_determinism},
      {"learnability sanity", 180, learnability},
      {"serialization", 5, serialization},
      {"service contract", 240, service_contract},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.ok = false;
      o.detail = std::string("threw: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs > c.budget_seconds) fail(o, "took longer than the budget");
    failures += o.ok ? 0 : 1;
    std::printf("%s  %s: %s [%.2f s, budget %.0f s]\n", o.ok ? "PASS" : "FAIL", c.name,
                o.detail.c_str(), secs, c.budget_seconds);
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(std::size(criteria)) - failures,
              std::size(criteria));
  return failures == 0 ? 0 : 1;
}
