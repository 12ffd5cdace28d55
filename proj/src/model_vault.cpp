#include "imedbot/model_vault.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <mutex>
#include <set>

#include "imedbot/codec.hpp"

namespace imedbot::vault {

namespace {

using codec::Json;

const char* kind_name(VaultError::Kind k) {
  using K = VaultError::Kind;
  switch (k) {
    case K::kBadMagic: return "BadMagic";
    case K::kUnsupportedVersion: return "UnsupportedVersion";
    case K::kChecksumMismatch: return "ChecksumMismatch";
    case K::kEncoderWidthMismatch: return "EncoderWidthMismatch";
    case K::kMalformedMetadata: return "MalformedMetadata";
    case K::kCatalogMismatch: return "CatalogMismatch";
    case K::kStorage: return "StorageError";
    case K::kHorizonUnavailable: return "HorizonUnavailable";
  }
  return "VaultError";
}

const char* kind_name(AnswerError::Kind k) {
  using K = AnswerError::Kind;
  switch (k) {
    case K::kMissingPredictor: return "MissingPredictor";
    case K::kUnknownPredictor: return "UnknownPredictor";
    case K::kInvalidValue: return "InvalidValue";
  }
  return "AnswerError";
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) {
    if (!out.empty()) out += ", ";
    out += s;
  }
  return out;
}

std::string answer_message(AnswerError::Kind k, const std::string& predictor,
                           const std::string& value, const std::vector<std::string>& allowed) {
  using K = AnswerError::Kind;
  switch (k) {
    case K::kMissingPredictor:
      return "no value given for predictor '" + predictor + "' (allowed: " + join(allowed) + ")";
    case K::kUnknownPredictor:
      return "'" + predictor + "' is not a predictor of this model (predictors: " +
             join(allowed) + ")";
    case K::kInvalidValue:
      return "'" + value + "' is not an allowed value for '" + predictor +
             "' (allowed: " + join(allowed) + ")";
  }
  return "invalid answers";
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[at + i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::span<const std::uint8_t> b, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[at + i]) << (8 * i);
  return v;
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

Json catalog_to_json(const PredictorCatalog& c) {
  Json arr = Json::array();
  for (const auto& p : c.predictors) {
    arr.push_back({{"name", p.name}, {"question", p.question}, {"allowed", p.allowed}});
  }
  return arr;
}

PredictorCatalog catalog_from_json(const Json& j) {
  PredictorCatalog c;
  for (const auto& p : j) {
    c.predictors.push_back({p.at("name").get<std::string>(),
                            p.at("question").get<std::string>(),
                            p.at("allowed").get<std::vector<std::string>>()});
  }
  return c;
}

[[noreturn]] void malformed(const std::string& why) {
  throw VaultError(VaultError::Kind::kMalformedMetadata, "model metadata is malformed: " + why);
}

}  // namespace

VaultError::VaultError(Kind kind, const std::string& message, std::int64_t value)
    : Error(kind_name(kind), message), kind_(kind), value_(value) {}

AnswerError::AnswerError(Kind kind, std::string predictor, std::string value,
                         std::vector<std::string> allowed)
    : Error(kind_name(kind), answer_message(kind, predictor, value, allowed)),
      kind_(kind),
      predictor_(std::move(predictor)),
      value_(std::move(value)),
      allowed_(std::move(allowed)) {}

PredictorCatalog PredictorCatalog::from_encoder(const data::FeatureEncoder& enc) {
  PredictorCatalog c;
  for (const auto& col : enc.columns) {
    c.predictors.push_back({col.name, "What is the value of " + col.name + "?", col.categories});
  }
  return c;
}

void PredictorCatalog::check_against(const data::FeatureEncoder& enc) const {
  auto fail = [](const std::string& why) {
    throw VaultError(VaultError::Kind::kCatalogMismatch, "predictor catalog: " + why);
  };
  if (predictors.size() != enc.columns.size()) {
    fail("has " + std::to_string(predictors.size()) + " predictors, encoder has " +
         std::to_string(enc.columns.size()) + " columns");
  }
  std::set<std::string> names;
  for (std::size_t i = 0; i < predictors.size(); ++i) {
    const auto& p = predictors[i];
    if (!names.insert(p.name).second) fail("duplicate predictor '" + p.name + "'");
    if (p.name != enc.columns[i].name) {
      fail("predictor " + std::to_string(i) + " is '" + p.name + "', encoder column is '" +
           enc.columns[i].name + "'");
    }
    auto sorted = p.allowed;
    std::sort(sorted.begin(), sorted.end());
    if (sorted.empty() || sorted != enc.columns[i].categories) {
      fail("allowed values of '" + p.name + "' differ from the encoder categories");
    }
  }
}

const Predictor* PredictorCatalog::find(std::string_view name) const noexcept {
  for (const auto& p : predictors) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

std::vector<double> ModelArtifact::encode_answers(
    const std::map<std::string, std::string>& answers) const {
  using K = AnswerError::Kind;
  std::vector<std::string> names;
  for (const auto& p : catalog.predictors) names.push_back(p.name);
  for (const auto& [name, value] : answers) {
    if (catalog.find(name) == nullptr) throw AnswerError(K::kUnknownPredictor, name, value, names);
  }
  std::vector<std::string> values;
  for (const auto& p : catalog.predictors) {
    const auto it = answers.find(p.name);
    if (it == answers.end()) throw AnswerError(K::kMissingPredictor, p.name, {}, p.allowed);
    if (std::find(p.allowed.begin(), p.allowed.end(), it->second) == p.allowed.end()) {
      throw AnswerError(K::kInvalidValue, p.name, it->second, p.allowed);
    }
    values.push_back(it->second);
  }
  std::vector<double> x(encoder.width(), 0.0);
  encoder.encode_row(values, x);
  return x;
}

double ModelArtifact::predict(const std::map<std::string, std::string>& answers) const {
  return nn::forward(weights, setting.hidden_activation, encode_answers(answers));
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (const std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::vector<std::uint8_t> serialize(const ModelArtifact& a) {
  Json layers = Json::array();
  for (const auto& l : a.weights.layers) layers.push_back({l.weights.rows, l.weights.cols});

  Json meta = Json::object();
  meta["catalog"] = catalog_to_json(a.catalog);
  meta["encoder"] = codec::to_json(a.encoder);
  meta["horizon"] = a.horizon ? Json(*a.horizon) : Json(nullptr);
  meta["layers"] = layers;
  meta["provenance"] = a.provenance;
  meta["setting"] = codec::to_json(a.setting);
  const std::string text = meta.dump();

  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_u32(out, a.format_version);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& l : a.weights.layers) {
    for (double v : l.weights.data) put_f64(out, v);
    for (double v : l.bias) put_f64(out, v);
  }
  put_u64(out, fnv1a64(std::span(out).subspan(4)));
  return out;
}

ModelArtifact deserialize(std::span<const std::uint8_t> bytes) {
  using K = VaultError::Kind;
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw VaultError(K::kBadMagic, "not a model file (bad magic bytes)");
  }
  if (bytes.size() < 4 + 4 + 4 + 8) {
    throw VaultError(K::kChecksumMismatch, "model file is truncated");
  }
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kFormatVersion) {
    throw VaultError(K::kUnsupportedVersion,
                     "unsupported model format version " + std::to_string(version), version);
  }
  const std::size_t body_end = bytes.size() - 8;
  if (fnv1a64(bytes.subspan(4, body_end - 4)) != get_u64(bytes, body_end)) {
    throw VaultError(K::kChecksumMismatch, "model file checksum does not match its contents");
  }

  const std::uint32_t meta_len = get_u32(bytes, 8);
  if (12 + static_cast<std::size_t>(meta_len) > body_end) malformed("metadata overruns the file");
  const std::string text(reinterpret_cast<const char*>(bytes.data() + 12), meta_len);

  ModelArtifact a;
  a.format_version = version;
  std::vector<std::pair<std::size_t, std::size_t>> dims;
  try {
    const Json meta = Json::parse(text);
    if (!meta.at("horizon").is_null()) a.horizon = meta.at("horizon").get<int>();
    a.setting = codec::setting_from_json(meta.at("setting"));
    a.encoder = codec::encoder_from_json(meta.at("encoder"));
    a.catalog = catalog_from_json(meta.at("catalog"));
    a.provenance = meta.at("provenance").get<std::string>();
    for (const auto& d : meta.at("layers")) {
      dims.emplace_back(d.at(0).get<std::size_t>(), d.at(1).get<std::size_t>());
    }
  } catch (const VaultError&) {
    throw;
  } catch (const std::exception& e) {
    malformed(e.what());
  }

  std::size_t at = 12 + meta_len;
  for (const auto& [rows, cols] : dims) {
    const std::size_t need = (rows * cols + rows) * 8;
    if (rows == 0 || cols == 0 || at + need > body_end) malformed("weight payload is short");
    nn::Layer layer{nn::Matrix(rows, cols), std::vector<double>(rows)};
    for (double& v : layer.weights.data) {
      v = std::bit_cast<double>(get_u64(bytes, at));
      at += 8;
    }
    for (double& v : layer.bias) {
      v = std::bit_cast<double>(get_u64(bytes, at));
      at += 8;
    }
    a.weights.layers.push_back(std::move(layer));
  }
  if (at != body_end) malformed("trailing bytes after the weight payload");

  for (std::size_t l = 1; l < a.weights.layers.size(); ++l) {
    if (a.weights.layers[l].weights.cols != a.weights.layers[l - 1].weights.rows) {
      malformed("layer dimensions do not chain");
    }
  }
  if (a.weights.layers.empty() || a.weights.layers.back().weights.rows != 1) {
    malformed("network must end in a single output unit");
  }
  if (a.weights.input_width() != a.encoder.width()) {
    throw VaultError(K::kEncoderWidthMismatch,
                     "encoder width " + std::to_string(a.encoder.width()) +
                         " differs from network input width " +
                         std::to_string(a.weights.input_width()));
  }
  a.catalog.check_against(a.encoder);
  return a;
}

std::size_t save(const ModelArtifact& a, const std::filesystem::path& destination) {
  const auto bytes = serialize(a);
  std::ofstream out(destination, std::ios::binary | std::ios::trunc);
  if (out) out.write(reinterpret_cast<const char*>(bytes.data()),
                     static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw VaultError(VaultError::Kind::kStorage,
                     "cannot write model file " + destination.string());
  }
  return bytes.size();
}

ModelArtifact load(const std::filesystem::path& source) {
  std::ifstream in(source, std::ios::binary);
  if (!in) {
    throw VaultError(VaultError::Kind::kStorage, "cannot read model file " + source.string());
  }
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

std::string horizon_file_name(int horizon) {
  return "horizon_" + std::to_string(horizon) + "y.imbm";
}

ModelRegistry::ModelRegistry(std::filesystem::path directory)
    : directory_(std::move(directory)) {
  for (const int h : kHorizons) {
    const auto path = directory_ / horizon_file_name(h);
    if (!std::filesystem::exists(path)) continue;
    auto artifact = std::make_shared<ModelArtifact>(load(path));
    artifact->horizon = h;
    models_[h] = std::move(artifact);
  }
}

std::shared_ptr<const ModelArtifact> ModelRegistry::lookup(int horizon) const {
  std::shared_lock lock(mutex_);
  const auto it = models_.find(horizon);
  if (it == models_.end()) {
    throw VaultError(VaultError::Kind::kHorizonUnavailable,
                     "no model is available for the " + std::to_string(horizon) +
                         "-year horizon",
                     horizon);
  }
  return it->second;
}

std::vector<int> ModelRegistry::horizons() const {
  std::shared_lock lock(mutex_);
  std::vector<int> out;
  for (const auto& [h, _] : models_) out.push_back(h);
  return out;
}

void ModelRegistry::put(ModelArtifact artifact) {
  if (!artifact.horizon) {
    throw VaultError(VaultError::Kind::kHorizonUnavailable,
                     "registry models need a horizon", 0);
  }
  const int h = *artifact.horizon;
  std::unique_lock lock(mutex_);
  std::error_code ec;
  std::filesystem::create_directories(directory_, ec);
  save(artifact, directory_ / horizon_file_name(h));
  models_[h] = std::make_shared<const ModelArtifact>(std::move(artifact));
}

}  // namespace imedbot::vault
