#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include "imedbot/dataset.hpp"
#include "imedbot/dfnn.hpp"
#include "imedbot/error.hpp"

namespace imedbot::vault {

// Model file layout (.imbm), all integers little-endian:
//
//   offset  size  field
//   0       4     magic "IMBM"
//   4       4     format_version (u32), currently 1
//   8       4     metadata length N (u32)
//   12      N     metadata: compact UTF-8 JSON, keys sorted, with keys
//                 catalog, encoder, horizon, layers, provenance, setting
//   12+N    8*P   weights: per layer, the weight matrix row-major then the
//                 bias vector, as IEEE-754 f64
//   end-8   8     FNV-1a 64 over bytes [4, end-8)
inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr char kMagic[4] = {'I', 'M', 'B', 'M'};

class VaultError : public Error {
 public:
  enum class Kind {
    kBadMagic,
    kUnsupportedVersion,
    kChecksumMismatch,
    kEncoderWidthMismatch,
    kMalformedMetadata,
    kCatalogMismatch,
    kStorage,
    kHorizonUnavailable,
  };

  VaultError(Kind kind, const std::string& message, std::int64_t value = 0);
  Kind kind() const noexcept { return kind_; }
  // Version for UnsupportedVersion, horizon for HorizonUnavailable.
  std::int64_t value() const noexcept { return value_; }

 private:
  Kind kind_;
  std::int64_t value_;
};

// Raised when prediction answers do not cover the catalog exactly.
class AnswerError : public Error {
 public:
  enum class Kind { kMissingPredictor, kUnknownPredictor, kInvalidValue };

  AnswerError(Kind kind, std::string predictor, std::string value,
              std::vector<std::string> allowed);
  Kind kind() const noexcept { return kind_; }
  const std::string& predictor() const noexcept { return predictor_; }
  const std::string& value() const noexcept { return value_; }
  const std::vector<std::string>& allowed() const noexcept { return allowed_; }

 private:
  Kind kind_;
  std::string predictor_;
  std::string value_;
  std::vector<std::string> allowed_;
};

struct Predictor {
  std::string name;
  std::string question;
  std::vector<std::string> allowed;  // display order

  friend bool operator==(const Predictor&, const Predictor&) = default;
};

// Ordered predictors; the order is the dialogue's question order and matches
// the encoder's column order.
struct PredictorCatalog {
  std::vector<Predictor> predictors;

  // One predictor per encoder column, allowed values in category order.
  static PredictorCatalog from_encoder(const data::FeatureEncoder& enc);

  // Names unique, same order as the encoder columns, each allowed list a
  // permutation of the column's categories. Throws CatalogMismatch.
  void check_against(const data::FeatureEncoder& enc) const;

  const Predictor* find(std::string_view name) const noexcept;

  friend bool operator==(const PredictorCatalog&, const PredictorCatalog&) = default;
};

struct ModelArtifact {
  std::uint32_t format_version = kFormatVersion;
  std::optional<int> horizon;  // years: 5, 10 or 15
  nn::HyperparameterSetting setting;
  data::FeatureEncoder encoder;
  PredictorCatalog catalog;
  nn::NetworkWeights weights;
  std::string provenance;

  // Throws AnswerError unless `answers` has exactly one allowed value per
  // catalog predictor.
  std::vector<double> encode_answers(const std::map<std::string, std::string>& answers) const;
  double predict(const std::map<std::string, std::string>& answers) const;

  friend bool operator==(const ModelArtifact&, const ModelArtifact&) = default;
};

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) noexcept;

std::vector<std::uint8_t> serialize(const ModelArtifact& a);
ModelArtifact deserialize(std::span<const std::uint8_t> bytes);

// Returns the number of bytes written.
std::size_t save(const ModelArtifact& a, const std::filesystem::path& destination);
ModelArtifact load(const std::filesystem::path& source);

inline constexpr int kHorizons[] = {5, 10, 15};

// File name used for a horizon model inside a registry directory.
std::string horizon_file_name(int horizon);

// Horizon-keyed catalog over a model directory. Reads share a lock; writes
// are exclusive.
class ModelRegistry {
 public:
  // Loads every horizon_<h>y.imbm present in `directory`.
  explicit ModelRegistry(std::filesystem::path directory);

  std::shared_ptr<const ModelArtifact> lookup(int horizon) const;
  std::vector<int> horizons() const;

  // Saves under the horizon's file name and makes it visible to lookups.
  void put(ModelArtifact artifact);

  const std::filesystem::path& directory() const noexcept { return directory_; }

 private:
  std::filesystem::path directory_;
  mutable std::shared_mutex mutex_;
  std::map<int, std::shared_ptr<const ModelArtifact>> models_;
};

}  // namespace imedbot::vault
