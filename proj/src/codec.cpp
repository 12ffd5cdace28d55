#include "imedbot/codec.hpp"

#include <algorithm>
#include <limits>
#include <set>

namespace imedbot::codec {

namespace {

const std::vector<std::string>& setting_keys() {
  static const std::vector<std::string> keys = {
      "hidden_layer_count", "hidden_units", "hidden_activation", "learning_rate",
      "lr_decay",           "epochs",       "batch_size",        "optimizer",
      "momentum",           "dropout_rate", "l2_lambda",         "weight_init",
      "early_stop_patience"};
  return keys;
}

[[noreturn]] void bad_grid(const std::string& message) {
  throw search::GridError("InvalidGrid", message);
}

int as_int(const Json& v, const std::string& key) {
  if (!v.is_number_integer()) bad_grid(key + ": expected an integer, got " + v.dump());
  const auto x = v.get<std::int64_t>();
  if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
    bad_grid(key + ": integer out of range");
  }
  return static_cast<int>(x);
}

double as_double(const Json& v, const std::string& key) {
  if (!v.is_number()) bad_grid(key + ": expected a number, got " + v.dump());
  return v.get<double>();
}

std::string as_string(const Json& v, const std::string& key) {
  if (!v.is_string()) bad_grid(key + ": expected a string, got " + v.dump());
  return v.get<std::string>();
}

template <typename T, typename Conv>
void read_list(const Json& j, const std::string& key, std::vector<T>& out, Conv conv) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_array()) bad_grid(key + ": expected a list of candidate values");
  out.clear();
  for (const auto& v : *it) out.push_back(conv(v, key));
}

}  // namespace

Json to_json(const nn::HyperparameterSetting& s) {
  Json j = Json::object();
  j["hidden_layer_count"] = s.hidden_layer_count;
  j["hidden_units"] = s.hidden_units;
  j["hidden_activation"] = nn::to_string(s.hidden_activation);
  j["learning_rate"] = s.learning_rate;
  j["lr_decay"] = s.lr_decay;
  j["epochs"] = s.epochs;
  j["batch_size"] = s.batch_size;
  j["optimizer"] = nn::to_string(s.optimizer);
  j["momentum"] = s.momentum;
  j["dropout_rate"] = s.dropout_rate;
  j["l2_lambda"] = s.l2_lambda;
  j["weight_init"] = nn::to_string(s.weight_init);
  j["early_stop_patience"] = s.early_stop_patience;
  return j;
}

nn::HyperparameterSetting setting_from_json(const Json& j) {
  if (!j.is_object()) throw nn::InvalidSetting("setting", "expected an object");
  for (const auto& [key, _] : j.items()) {
    const auto& keys = setting_keys();
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw nn::InvalidSetting(key, "unknown hyperparameter");
    }
  }
  try {
    nn::HyperparameterSetting s;
    s.hidden_layer_count = j.at("hidden_layer_count").get<int>();
    s.hidden_units = j.at("hidden_units").get<int>();
    s.hidden_activation = nn::parse_activation(j.at("hidden_activation").get<std::string>());
    s.learning_rate = j.at("learning_rate").get<double>();
    s.lr_decay = j.at("lr_decay").get<double>();
    s.epochs = j.at("epochs").get<int>();
    s.batch_size = j.at("batch_size").get<int>();
    s.optimizer = nn::parse_optimizer(j.at("optimizer").get<std::string>());
    s.momentum = j.at("momentum").get<double>();
    s.dropout_rate = j.at("dropout_rate").get<double>();
    s.l2_lambda = j.at("l2_lambda").get<double>();
    s.weight_init = nn::parse_weight_init(j.at("weight_init").get<std::string>());
    s.early_stop_patience = j.at("early_stop_patience").get<int>();
    nn::validate(s);
    return s;
  } catch (const Json::exception& e) {
    throw nn::InvalidSetting("setting", e.what());
  }
}

Json to_json(const search::GridSpec& g) {
  Json j = Json::object();
  j["hidden_layer_count"] = g.hidden_layer_count;
  j["hidden_units"] = g.hidden_units;
  Json acts = Json::array();
  for (auto a : g.hidden_activation) acts.push_back(nn::to_string(a));
  j["hidden_activation"] = acts;
  j["learning_rate"] = g.learning_rate;
  j["lr_decay"] = g.lr_decay;
  j["epochs"] = g.epochs;
  j["batch_size"] = g.batch_size;
  Json opts = Json::array();
  for (auto o : g.optimizer) opts.push_back(nn::to_string(o));
  j["optimizer"] = opts;
  j["momentum"] = g.momentum;
  j["dropout_rate"] = g.dropout_rate;
  j["l2_lambda"] = g.l2_lambda;
  Json inits = Json::array();
  for (auto w : g.weight_init) inits.push_back(nn::to_string(w));
  j["weight_init"] = inits;
  j["early_stop_patience"] = g.early_stop_patience;
  return j;
}

search::GridSpec grid_from_json(const Json& j, const nn::HyperparameterSetting& base) {
  if (!j.is_object()) bad_grid("grid must be an object of candidate lists");
  const auto& keys = setting_keys();
  for (const auto& [key, _] : j.items()) {
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      bad_grid("unknown hyperparameter '" + key + "'");
    }
  }
  auto g = search::GridSpec::singleton(base);
  read_list(j, "hidden_layer_count", g.hidden_layer_count, as_int);
  read_list(j, "hidden_units", g.hidden_units, as_int);
  read_list(j, "hidden_activation", g.hidden_activation,
            [](const Json& v, const std::string& k) { return nn::parse_activation(as_string(v, k)); });
  read_list(j, "learning_rate", g.learning_rate, as_double);
  read_list(j, "lr_decay", g.lr_decay, as_double);
  read_list(j, "epochs", g.epochs, as_int);
  read_list(j, "batch_size", g.batch_size, as_int);
  read_list(j, "optimizer", g.optimizer,
            [](const Json& v, const std::string& k) { return nn::parse_optimizer(as_string(v, k)); });
  read_list(j, "momentum", g.momentum, as_double);
  read_list(j, "dropout_rate", g.dropout_rate, as_double);
  read_list(j, "l2_lambda", g.l2_lambda, as_double);
  read_list(j, "weight_init", g.weight_init,
            [](const Json& v, const std::string& k) { return nn::parse_weight_init(as_string(v, k)); });
  read_list(j, "early_stop_patience", g.early_stop_patience, as_int);
  search::validate(g);
  return g;
}

Json to_json(const data::FeatureEncoder& e) {
  Json cols = Json::array();
  for (const auto& c : e.columns) {
    cols.push_back({{"name", c.name}, {"categories", c.categories}, {"offset", c.offset}});
  }
  return {{"columns", cols},
          {"label_column", e.label_column},
          {"label_values", {e.label_values[0], e.label_values[1]}}};
}

data::FeatureEncoder encoder_from_json(const Json& j) {
  std::vector<data::FeatureEncoder::Column> cols;
  for (const auto& c : j.at("columns")) {
    cols.push_back({c.at("name").get<std::string>(),
                    c.at("categories").get<std::vector<std::string>>(), 0});
  }
  const auto labels = j.at("label_values").get<std::vector<std::string>>();
  if (labels.size() != 2) throw std::invalid_argument("label_values must have 2 entries");
  auto enc = data::FeatureEncoder::from_columns(std::move(cols),
                                                j.at("label_column").get<std::string>(),
                                                {labels[0], labels[1]});
  // Stored offsets must agree with the ones implied by category counts.
  const auto& stored = j.at("columns");
  for (std::size_t i = 0; i < enc.columns.size(); ++i) {
    if (stored[i].at("offset").get<std::size_t>() != enc.columns[i].offset) {
      throw std::invalid_argument("encoder offsets are inconsistent");
    }
  }
  return enc;
}

Json report_to_json(const search::GridReport& r,
                    const std::vector<nn::HyperparameterSetting>& settings) {
  Json per = Json::array();
  for (const auto& s : r.per_setting_results) {
    Json entry = {{"index", s.index}, {"mean_cv_auc", s.mean_cv_auc}};
    if (s.index < settings.size()) entry["setting"] = to_json(settings[s.index]);
    per.push_back(entry);
  }
  Json roc = Json::array();
  for (const auto& p : r.validation_roc.points) roc.push_back({p.fpr, p.tpr});
  return {{"best_index", r.best_index},
          {"best_setting", to_json(r.best_setting)},
          {"best_cv_auc", r.best_cv_auc},
          {"validation_auc", r.validation_auc},
          {"validation_roc", {{"points", roc},
                              {"n_pos", r.validation_roc.n_pos},
                              {"n_neg", r.validation_roc.n_neg}}},
          {"per_setting_results", per},
          {"warnings", r.warnings}};
}

}  // namespace imedbot::codec
