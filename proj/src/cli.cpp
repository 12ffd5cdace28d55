#include "imedbot/cli.hpp"

#include <algorithm>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "CLI11.hpp"
#include "imedbot/agent_service.hpp"
#include "imedbot/codec.hpp"
#include "imedbot/grid_search.hpp"
#include "imedbot/http_server.hpp"
#include "imedbot/metrics.hpp"
#include "imedbot/model_vault.hpp"

namespace imedbot::cli {

namespace fs = std::filesystem;

namespace {

// Input problems (unreadable files, bad data) that map to exit code 1.
class UserError : public Error {
 public:
  using Error::Error;
};

std::string fixed(double v, int places) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", places, v);
  return buf;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UserError("FileNotReadable", "cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, std::string_view body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
  if (!out) throw UserError("FileNotWritable", "cannot write " + path.string());
}

std::string last_header_column(std::string_view text) {
  const auto table = data::read_table(text);
  return table.header.back();
}

struct TrainArgs {
  fs::path dataset;
  std::string label;
  fs::path grid;
  bool defaults = false;
  std::uint64_t seed = 20220901;
  fs::path out = "model.imbm";
  fs::path roc = "roc.svg";
  fs::path report = "report.json";
  std::size_t workers = 1;
};

int train(const TrainArgs& a, std::ostream& out) {
  const std::string text = read_file(a.dataset);
  const std::string label = a.label.empty() ? last_header_column(text) : a.label;
  const auto d = data::parse_csv(text, label);

  search::GridSpec grid = search::default_grid();
  if (!a.grid.empty()) {
    codec::Json j;
    try {
      j = codec::Json::parse(read_file(a.grid));
    } catch (const codec::Json::parse_error& e) {
      throw UserError("InvalidGrid", a.grid.string() + " is not valid JSON: " + e.what());
    }
    grid = codec::grid_from_json(j, search::default_setting());
  }

  search::SearchOptions options;
  options.workers = a.workers;
  const auto report = search::run_grid_search(d, grid, a.seed, options);

  vault::ModelArtifact artifact;
  artifact.setting = report.best_setting;
  artifact.encoder = report.encoder;
  artifact.catalog = vault::PredictorCatalog::from_encoder(report.encoder);
  artifact.weights = report.weights;
  artifact.provenance = "Trained from " + a.dataset.filename().string() + " (label '" + label +
                        "', " + std::to_string(d.row_count()) + " rows), seed " +
                        std::to_string(a.seed) + ", validation AUC " +
                        fixed(report.validation_auc, 3);
  vault::save(artifact, a.out);
  write_file(a.roc, metrics::plot_series(report.validation_roc));
  const auto settings = search::enumerate_settings(grid, options.cap);
  write_file(a.report, codec::report_to_json(report, settings).dump(2) + "\n");

  for (const auto& w : report.warnings) out << "warning: " << w << '\n';
  out << "validation AUC " << fixed(report.validation_auc, 6) << '\n';
  return kExitOk;
}

int predict(const fs::path& model, const std::vector<std::string>& pairs, std::ostream& out) {
  const auto artifact = vault::load(model);
  std::map<std::string, std::string> answers;
  for (const auto& p : pairs) {
    const auto eq = p.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw UserError("InvalidAnswer", "answer '" + p + "' is not of the form predictor=value");
    }
    answers[p.substr(0, eq)] = p.substr(eq + 1);
  }
  out << fixed(artifact.predict(answers), 6) << '\n';
  return kExitOk;
}

int evaluate(const fs::path& model, const fs::path& dataset, const fs::path& roc,
             std::ostream& out) {
  const auto artifact = vault::load(model);
  const auto table = data::read_table(read_file(dataset));
  const auto m = data::encode_table(table, artifact.encoder);
  const auto scores = nn::predict(artifact.weights, artifact.setting.hidden_activation, m);
  const auto result = metrics::roc_curve(scores, m.labels);
  write_file(roc, metrics::plot_series(result));
  out << "AUC " << fixed(result.auc, 6) << '\n';
  return kExitOk;
}

agent::HttpServer* g_server = nullptr;

extern "C" void on_signal(int) {
  if (g_server) g_server->stop();
}

int serve(const fs::path& config_path, std::ostream& out) {
  agent::ServiceConfig cfg = config_path.empty() ? agent::ServiceConfig{}
                                                 : agent::load_config(config_path);
  agent::apply_env_overrides(cfg);
  auto registry = std::make_shared<vault::ModelRegistry>(cfg.model_dir);
  agent::AgentService service(cfg, registry);
  agent::HttpServer server(service);
  out << "serving on http://" << cfg.listen_address << ':' << cfg.port << " with "
      << registry->horizons().size() << " horizon model(s) from " << cfg.model_dir.string()
      << std::endl;
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  const bool ok = server.listen(cfg.listen_address, cfg.port);
  g_server = nullptr;
  if (!ok) {
    throw UserError("BindFailed",
                    "cannot listen on " + cfg.listen_address + ":" + std::to_string(cfg.port));
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Train, evaluate and serve categorical neural-network risk models", "imedbot"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "grid-search a model on a CSV dataset");
  train_cmd->add_option("--dataset", ta.dataset, "CSV file")->required();
  train_cmd->add_option("--label", ta.label, "label column (default: last column)");
  auto* grid_opt = train_cmd->add_option("--grid", ta.grid, "GridSpec JSON file");
  auto* defaults_flag = train_cmd->add_flag("--defaults", ta.defaults, "use the default grid");
  grid_opt->excludes(defaults_flag);
  train_cmd->add_option("--seed", ta.seed, "master seed");
  train_cmd->add_option("--out", ta.out, "model file to write");
  train_cmd->add_option("--roc", ta.roc, "ROC SVG to write");
  train_cmd->add_option("--report", ta.report, "JSON report to write");
  train_cmd->add_option("--workers", ta.workers, "grid-search threads")
      ->check(CLI::PositiveNumber);

  fs::path model, dataset, roc = "roc.svg", config;
  std::vector<std::string> pairs;
  auto* predict_cmd = app.add_subcommand("predict", "predict from predictor=value answers");
  predict_cmd->add_option("--model", model, "model file")->required();
  predict_cmd->add_option("answers", pairs, "predictor=value pairs");

  auto* eval_cmd = app.add_subcommand("evaluate", "AUC and ROC of a model on a labelled CSV");
  eval_cmd->add_option("--model", model, "model file")->required();
  eval_cmd->add_option("--dataset", dataset, "CSV file")->required();
  eval_cmd->add_option("--roc", roc, "ROC SVG to write");

  auto* serve_cmd = app.add_subcommand("serve", "run the HTTP service");
  serve_cmd->add_option("--config", config, "JSON configuration file");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUserError;
  }

  try {
    if (train_cmd->parsed()) return train(ta, out);
    if (predict_cmd->parsed()) return predict(model, pairs, out);
    if (eval_cmd->parsed()) return evaluate(model, dataset, roc, out);
    if (serve_cmd->parsed()) return serve(config, out);
  } catch (const Error& e) {
    err << "error: " << e.code() << ": " << e.what() << '\n';
    return kExitUserError;
  } catch (const std::exception& e) {
    err << "error: InternalError: " << e.what() << '\n';
    return kExitInternalError;
  }
  return kExitUserError;
}

}  // namespace imedbot::cli
