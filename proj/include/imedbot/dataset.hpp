#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "imedbot/error.hpp"

namespace imedbot::data {

// CSV dialect: comma separated, no quoting, UTF-8, "\n" or "\r\n" line
// endings, optional leading BOM. Every cell is a category label and must be
// non-empty.

class DatasetError : public Error {
 public:
  enum class Kind {
    kMissingHeader,
    kDuplicateColumn,
    kRaggedRow,
    kLabelNotFound,
    kLabelNotBinary,
    kTooFewRows,
    kEmptyValue,
    kClassTooSmall,
    kSchemaMismatch,
    kUnknownCategory,
  };

  DatasetError(Kind kind, std::string message, std::size_t line = 0,
               std::string column = {}, std::size_t count = 0);

  Kind kind() const noexcept { return kind_; }
  // 1-based line in the source text, 0 when not tied to a line.
  std::size_t line() const noexcept { return line_; }
  // Column (or label value, for ClassTooSmall) the error refers to.
  const std::string& column() const noexcept { return column_; }
  // Distinct-value count for LabelNotBinary, row count for TooFewRows.
  std::size_t count() const noexcept { return count_; }

 private:
  Kind kind_;
  std::size_t line_;
  std::string column_;
  std::size_t count_;
};

const char* kind_name(DatasetError::Kind kind) noexcept;

enum class ColumnRole { kFeature, kLabel };

struct ColumnSchema {
  std::string name;
  std::vector<std::string> categories;  // byte-order sorted, unique
  ColumnRole role = ColumnRole::kFeature;

  friend bool operator==(const ColumnSchema&, const ColumnSchema&) = default;
};

// Header plus rows, checked for shape and empty cells only.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> row_lines;  // source line of each row
};

struct Dataset {
  std::vector<ColumnSchema> columns;
  std::vector<std::vector<std::string>> rows;
  std::string label_column;
  std::size_t label_index = 0;
  // label_values[0] maps to class 0 (the byte-order smaller raw value).
  std::array<std::string, 2> label_values;
  std::vector<int> labels;

  std::size_t row_count() const noexcept { return rows.size(); }
  std::size_t class_count(int cls) const noexcept;
};

Table read_table(std::string_view text);

// Requires a header and at least kMinRows data rows.
Dataset parse_csv(std::string_view text, std::string_view label_column);

inline constexpr std::size_t kMinRows = 4;

// One-hot layout of the feature columns: column order, then sorted
// category order within each column.
struct FeatureEncoder {
  struct Column {
    std::string name;
    std::vector<std::string> categories;
    std::size_t offset = 0;

    friend bool operator==(const Column&, const Column&) = default;
  };

  std::vector<Column> columns;
  std::string label_column;
  std::array<std::string, 2> label_values;

  static FeatureEncoder from_dataset(const Dataset& d);

  // Rebuilds offsets from the category counts.
  static FeatureEncoder from_columns(std::vector<Column> columns,
                                     std::string label_column,
                                     std::array<std::string, 2> label_values);

  std::size_t width() const noexcept;

  // `values` holds one raw value per encoder column, in encoder order.
  // Throws UnknownCategory for values outside a column's vocabulary.
  void encode_row(std::span<const std::string> values,
                  std::span<double> out) const;

  friend bool operator==(const FeatureEncoder&,
                         const FeatureEncoder&) = default;
};

struct EncodedMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> features;  // row-major rows x cols
  std::vector<double> labels;    // 0.0 or 1.0
  FeatureEncoder encoder;

  std::span<const double> row(std::size_t i) const noexcept {
    return {features.data() + i * cols, cols};
  }
};

EncodedMatrix encode(const Dataset& d);

// Encodes a raw table against an existing encoder (e.g. a stored model's).
// Columns are matched by name; extra columns are ignored. Rows whose label is
// not one of encoder.label_values raise UnknownCategory on the label column.
EncodedMatrix encode_table(const Table& table, const FeatureEncoder& encoder);

// Copies the listed rows, in the listed order.
EncodedMatrix select_rows(const EncodedMatrix& m,
                          std::span<const std::size_t> indices);

inline constexpr std::size_t kFoldCount = 5;

struct SplitPlan {
  std::vector<std::size_t> train;       // ascending
  std::vector<std::size_t> validation;  // ascending
  std::array<std::vector<std::size_t>, kFoldCount> folds;  // each ascending

  friend bool operator==(const SplitPlan&, const SplitPlan&) = default;
};

// Stratified 80/20 split plus 5 stratified folds over the training part.
// Class c contributes floor(0.2 * n_c + 0.5) rows to validation. Within each
// class the rows are shuffled, the first ones go to validation and the rest
// are dealt round-robin into folds; the dealing position carries over from
// class 0 to class 1 so fold sizes differ by at most one.
SplitPlan make_split(const Dataset& d, std::uint64_t seed);
SplitPlan make_split(std::span<const int> labels,
                     const std::array<std::string, 2>& label_values,
                     std::uint64_t seed);

}  // namespace imedbot::data
