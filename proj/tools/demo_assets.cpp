// Generates the bundled synthetic datasets and trains the demo horizon models.
//
//   imedbot_demo_assets data   --out-dir data/
//   imedbot_demo_assets models --data-dir data/ --out-dir build/demo_models
//
// Everything is seeded, so reruns reproduce the same files byte for byte.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "imedbot/codec.hpp"
#include "imedbot/grid_search.hpp"
#include "imedbot/model_vault.hpp"
#include "imedbot/rng.hpp"

namespace fs = std::filesystem;
using namespace imedbot;

namespace {

struct DemoPredictor {
  const char* name;
  const char* question;
  std::vector<std::string> values;  // display order
  std::vector<double> effect;       // log-odds contribution per value
  std::vector<double> weight;       // sampling weight per value
};

const std::vector<DemoPredictor>& lsm_predictors() {
  static const std::vector<DemoPredictor> p = {
      {"age_group", "What is the patient's age group at diagnosis?",
       {"under_40", "40_to_49", "50_to_59", "60_to_69", "70_plus"},
       {0.6, 0.2, 0.0, -0.1, 0.1}, {1, 2, 3, 3, 2}},
      {"menopausal_status", "What is the patient's menopausal status?",
       {"pre", "peri", "post"}, {0.2, 0.1, 0.0}, {3, 1, 4}},
      {"tumor_size", "What is the size category of the primary tumor?",
       {"T1", "T2", "T3", "T4"}, {-0.7, 0.1, 0.7, 1.2}, {5, 4, 2, 1}},
      {"grade", "What is the histologic grade of the tumor?",
       {"1", "2", "3"}, {-0.6, 0.0, 0.6}, {2, 4, 3}},
      {"lymph_nodes_positive", "How many lymph nodes were positive?",
       {"0", "1-3", "4-9", "10+"}, {-0.9, 0.2, 0.9, 1.5}, {6, 3, 2, 1}},
      {"ER_status", "What is the estrogen receptor (ER) status?",
       {"positive", "negative"}, {-0.3, 0.4}, {3, 1}},
      {"HER2_status", "What is the HER2 status?",
       {"negative", "equivocal", "positive"}, {-0.1, 0.1, 0.5}, {5, 1, 2}},
      {"DCIS_level", "What is the type of ductal carcinoma in situ (DCIS_level)?",
       {"none", "cribriform", "papillary", "solid", "comedo"},
       {-0.2, 0.0, -0.1, 0.3, 0.6}, {3, 2, 1, 2, 2}},
  };
  return p;
}

struct Horizon {
  int years;
  double intercept;
  double scale;
  std::uint64_t seed;
};

constexpr Horizon kHorizonSpecs[] = {
    {5, -1.7, 1.0, 0x5A17},
    {10, -1.1, 1.15, 0x10A17},
    {15, -0.6, 1.3, 0x15A17},
};

std::size_t weighted_pick(Rng& rng, const std::vector<double>& weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (u < weights[i]) return i;
    u -= weights[i];
  }
  return weights.size() - 1;
}

std::string lsm_csv(const Horizon& h) {
  Rng rng(h.seed);
  std::ostringstream out;
  for (const auto& p : lsm_predictors()) out << p.name << ',';
  out << "metastasis\n";
  for (int row = 0; row < 600; ++row) {
    double logit = h.intercept;
    for (const auto& p : lsm_predictors()) {
      const auto k = weighted_pick(rng, p.weight);
      logit += h.scale * p.effect[k];
      out << p.values[k] << ',';
    }
    const double prob = 1.0 / (1.0 + std::exp(-logit));
    out << (rng.uniform() < prob ? "yes" : "no") << '\n';
  }
  return out.str();
}

// The label is a threshold on a sum of per-category points, so the classes
// are linearly separable in the one-hot space. "lot" is pure noise.
std::string separable_csv() {
  Rng rng(0x5E9A7AB1E);
  const char* shapes[] = {"circle", "square", "triangle"};
  const int shape_pts[] = {0, 1, 0};
  const char* colours[] = {"blue", "green", "red", "yellow"};
  const int colour_pts[] = {1, 0, 2, 0};
  const char* sizes[] = {"large", "medium", "small"};
  const int size_pts[] = {1, 0, -1};
  const char* textures[] = {"rough", "smooth"};
  const char* lots[] = {"A", "B", "C"};

  std::ostringstream out;
  out << "shape,colour,size,texture,lot,outcome\n";
  for (int row = 0; row < 400; ++row) {
    const auto s = rng.below(3), c = rng.below(4), z = rng.below(3);
    const int points = shape_pts[s] + colour_pts[c] + size_pts[z];
    out << shapes[s] << ',' << colours[c] << ',' << sizes[z] << ','
        << textures[rng.below(2)] << ',' << lots[rng.below(3)] << ','
        << (points >= 2 ? 1 : 0) << '\n';
  }
  return out.str();
}

void write_file(const fs::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << body;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::map<std::string, std::string> golden_answers() {
  return {{"age_group", "50_to_59"}, {"menopausal_status", "post"},
          {"tumor_size", "T2"},      {"grade", "3"},
          {"lymph_nodes_positive", "1-3"}, {"ER_status", "positive"},
          {"HER2_status", "negative"},     {"DCIS_level", "comedo"}};
}

std::string fixed(double v, int places) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", places, v);
  return buf;
}

void make_data(const fs::path& out_dir) {
  fs::create_directories(out_dir);
  write_file(out_dir / "demo_separable.csv", separable_csv());
  for (const auto& h : kHorizonSpecs) {
    write_file(out_dir / ("demo_lsm_" + std::to_string(h.years) + "y.csv"), lsm_csv(h));
  }
}

void make_models(const fs::path& data_dir, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  auto base = search::default_setting();
  base.hidden_layer_count = 1;
  base.hidden_units = 12;
  base.epochs = 40;
  base.batch_size = 32;
  base.l2_lambda = 1e-3;
  auto grid = search::GridSpec::singleton(base);
  grid.learning_rate = {0.003, 0.01};

  codec::Json golden = {{"answers", golden_answers()}, {"horizons", codec::Json::object()}};
  for (const auto& h : kHorizonSpecs) {
    const auto file = "demo_lsm_" + std::to_string(h.years) + "y.csv";
    const auto d = data::parse_csv(read_file(data_dir / file), "metastasis");
    const auto report = search::run_grid_search(d, grid, h.seed);

    vault::ModelArtifact a;
    a.horizon = h.years;
    a.setting = report.best_setting;
    a.encoder = report.encoder;
    for (const auto& p : lsm_predictors()) a.catalog.predictors.push_back({p.name, p.question, p.values});
    a.weights = report.weights;
    a.provenance = "Demo " + std::to_string(h.years) +
                   "-year model trained on synthetic data (" + file + "), seed " +
                   std::to_string(h.seed) + ", validation AUC " +
                   fixed(report.validation_auc, 3) +
                   ". The data are synthetic; predictions carry no clinical meaning.";
    vault::save(a, out_dir / vault::horizon_file_name(h.years));

    const double p = a.predict(golden_answers());
    golden["horizons"][std::to_string(h.years)] = {
        {"probability", p}, {"display4", fixed(p, 4)}, {"display6", fixed(p, 6)},
        {"validation_auc", report.validation_auc}};
    std::cout << h.years << "-year demo model: validation AUC "
              << fixed(report.validation_auc, 3) << ", golden probability " << fixed(p, 6)
              << '\n';
  }
  write_file(out_dir / "golden.json", golden.dump(2) + "\n");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generate bundled demo datasets and models"};
  app.require_subcommand(1);
  fs::path out_dir;
  fs::path data_dir;
  auto* data_cmd = app.add_subcommand("data", "write the synthetic CSV datasets");
  data_cmd->add_option("--out-dir", out_dir)->required();
  auto* models_cmd = app.add_subcommand("models", "train the demo horizon models");
  models_cmd->add_option("--data-dir", data_dir)->required();
  models_cmd->add_option("--out-dir", out_dir)->required();
  CLI11_PARSE(app, argc, argv);

  try {
    if (data_cmd->parsed()) make_data(out_dir);
    if (models_cmd->parsed()) make_models(data_dir, out_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
