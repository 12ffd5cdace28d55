#include "imedbot/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <unordered_map>

#include "imedbot/rng.hpp"

namespace imedbot::data {

namespace {

std::string quoted(std::string_view s) {
  std::string out = "'";
  out.append(s);
  out += '\'';
  return out;
}

std::vector<std::string> split_fields(std::string_view line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.emplace_back(line.substr(start));
      break;
    }
    fields.emplace_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

// Seed-stream tag so split shuffles never collide with training streams.
constexpr std::uint64_t kSplitStream = 0x53504C4954ULL;  // "SPLIT"

}  // namespace

DatasetError::DatasetError(Kind kind, std::string message, std::size_t line,
                           std::string column, std::size_t count)
    : Error(kind_name(kind), message),
      kind_(kind),
      line_(line),
      column_(std::move(column)),
      count_(count) {}

const char* kind_name(DatasetError::Kind kind) noexcept {
  using K = DatasetError::Kind;
  switch (kind) {
    case K::kMissingHeader: return "MissingHeader";
    case K::kDuplicateColumn: return "DuplicateColumn";
    case K::kRaggedRow: return "RaggedRow";
    case K::kLabelNotFound: return "LabelNotFound";
    case K::kLabelNotBinary: return "LabelNotBinary";
    case K::kTooFewRows: return "TooFewRows";
    case K::kEmptyValue: return "EmptyValue";
    case K::kClassTooSmall: return "ClassTooSmall";
    case K::kSchemaMismatch: return "SchemaMismatch";
    case K::kUnknownCategory: return "UnknownCategory";
  }
  return "DatasetError";
}

std::size_t Dataset::class_count(int cls) const noexcept {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), cls));
}

Table read_table(std::string_view text) {
  using K = DatasetError::Kind;
  if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);

  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    if (line.ends_with('\r')) line.remove_suffix(1);
    lines.push_back(line);
    pos = nl + 1;
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();

  if (lines.empty() || lines.front().empty()) {
    throw DatasetError(K::kMissingHeader, "dataset has no header row", 1);
  }

  Table table;
  table.header = split_fields(lines.front());
  std::set<std::string_view> seen;
  for (const auto& name : table.header) {
    if (name.empty()) {
      throw DatasetError(K::kMissingHeader,
                         "header row contains an empty column name", 1);
    }
    if (!seen.insert(name).second) {
      throw DatasetError(K::kDuplicateColumn,
                         "header names column " + quoted(name) + " twice", 1,
                         name);
    }
  }

  const std::size_t width = table.header.size();
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    auto fields = split_fields(lines[i]);
    if (fields.size() != width) {
      throw DatasetError(K::kRaggedRow,
                         "line " + std::to_string(line_no) + " has " +
                             std::to_string(fields.size()) + " fields, expected " +
                             std::to_string(width),
                         line_no);
    }
    for (std::size_t c = 0; c < width; ++c) {
      if (fields[c].empty()) {
        throw DatasetError(K::kEmptyValue,
                           "line " + std::to_string(line_no) +
                               " has an empty value in column " +
                               quoted(table.header[c]),
                           line_no, table.header[c]);
      }
    }
    table.rows.push_back(std::move(fields));
    table.row_lines.push_back(line_no);
  }
  return table;
}

Dataset parse_csv(std::string_view text, std::string_view label_column) {
  using K = DatasetError::Kind;
  Table table = read_table(text);

  const auto label_it =
      std::find(table.header.begin(), table.header.end(), label_column);
  if (label_it == table.header.end()) {
    throw DatasetError(K::kLabelNotFound,
                       "label column " + quoted(label_column) +
                           " is not in the header",
                       1, std::string(label_column));
  }
  if (table.rows.size() < kMinRows) {
    throw DatasetError(K::kTooFewRows,
                       "dataset has " + std::to_string(table.rows.size()) +
                           " data rows, at least " + std::to_string(kMinRows) +
                           " are required",
                       0, {}, table.rows.size());
  }

  Dataset d;
  d.label_column = std::string(label_column);
  d.label_index = static_cast<std::size_t>(label_it - table.header.begin());

  for (std::size_t c = 0; c < table.header.size(); ++c) {
    std::set<std::string> values;
    for (const auto& row : table.rows) values.insert(row[c]);
    ColumnSchema col;
    col.name = table.header[c];
    col.categories.assign(values.begin(), values.end());
    col.role = c == d.label_index ? ColumnRole::kLabel : ColumnRole::kFeature;
    d.columns.push_back(std::move(col));
  }

  const auto& label_categories = d.columns[d.label_index].categories;
  if (label_categories.size() != 2) {
    throw DatasetError(K::kLabelNotBinary,
                       "label column " + quoted(label_column) + " has " +
                           std::to_string(label_categories.size()) +
                           " distinct values, expected 2",
                       0, std::string(label_column), label_categories.size());
  }
  d.label_values = {label_categories[0], label_categories[1]};
  d.labels.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    d.labels.push_back(row[d.label_index] == d.label_values[0] ? 0 : 1);
  }
  d.rows = std::move(table.rows);
  return d;
}

FeatureEncoder FeatureEncoder::from_dataset(const Dataset& d) {
  std::vector<Column> cols;
  for (const auto& c : d.columns) {
    if (c.role == ColumnRole::kFeature) cols.push_back({c.name, c.categories, 0});
  }
  return from_columns(std::move(cols), d.label_column, d.label_values);
}

FeatureEncoder FeatureEncoder::from_columns(
    std::vector<Column> columns, std::string label_column,
    std::array<std::string, 2> label_values) {
  FeatureEncoder enc;
  std::size_t offset = 0;
  for (auto& c : columns) {
    c.offset = offset;
    offset += c.categories.size();
  }
  enc.columns = std::move(columns);
  enc.label_column = std::move(label_column);
  enc.label_values = std::move(label_values);
  return enc;
}

std::size_t FeatureEncoder::width() const noexcept {
  if (columns.empty()) return 0;
  return columns.back().offset + columns.back().categories.size();
}

void FeatureEncoder::encode_row(std::span<const std::string> values,
                                std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t c = 0; c < columns.size(); ++c) {
    const auto& col = columns[c];
    const auto it = std::lower_bound(col.categories.begin(),
                                     col.categories.end(), values[c]);
    if (it == col.categories.end() || *it != values[c]) {
      throw DatasetError(DatasetError::Kind::kUnknownCategory,
                         "value " + quoted(values[c]) + " is not a category of " +
                             quoted(col.name),
                         0, col.name);
    }
    out[col.offset + static_cast<std::size_t>(it - col.categories.begin())] = 1.0;
  }
}

EncodedMatrix encode(const Dataset& d) {
  EncodedMatrix m;
  m.encoder = FeatureEncoder::from_dataset(d);
  m.rows = d.rows.size();
  m.cols = m.encoder.width();
  m.features.assign(m.rows * m.cols, 0.0);
  m.labels.reserve(m.rows);

  std::vector<std::string> values;
  for (std::size_t r = 0; r < m.rows; ++r) {
    values.clear();
    for (std::size_t c = 0; c < d.columns.size(); ++c) {
      if (c != d.label_index) values.push_back(d.rows[r][c]);
    }
    m.encoder.encode_row(values,
                         std::span<double>(m.features.data() + r * m.cols, m.cols));
    m.labels.push_back(static_cast<double>(d.labels[r]));
  }
  return m;
}

EncodedMatrix encode_table(const Table& table, const FeatureEncoder& encoder) {
  using K = DatasetError::Kind;
  auto column_index = [&](const std::string& name) {
    const auto it = std::find(table.header.begin(), table.header.end(), name);
    if (it == table.header.end()) {
      throw DatasetError(K::kSchemaMismatch,
                         "dataset is missing column " + quoted(name), 1, name);
    }
    return static_cast<std::size_t>(it - table.header.begin());
  };

  std::vector<std::size_t> source;
  for (const auto& col : encoder.columns) source.push_back(column_index(col.name));
  const std::size_t label_src = column_index(encoder.label_column);

  EncodedMatrix m;
  m.encoder = encoder;
  m.rows = table.rows.size();
  m.cols = encoder.width();
  m.features.assign(m.rows * m.cols, 0.0);
  m.labels.reserve(m.rows);

  std::vector<std::string> values(source.size());
  for (std::size_t r = 0; r < m.rows; ++r) {
    const auto& row = table.rows[r];
    const std::size_t line = r < table.row_lines.size() ? table.row_lines[r] : 0;
    for (std::size_t c = 0; c < source.size(); ++c) values[c] = row[source[c]];
    try {
      encoder.encode_row(values,
                         std::span<double>(m.features.data() + r * m.cols, m.cols));
    } catch (const DatasetError& e) {
      throw DatasetError(e.kind(), "line " + std::to_string(line) + ": " + e.what(),
                         line, e.column());
    }
    const auto& label = row[label_src];
    if (label == encoder.label_values[0]) {
      m.labels.push_back(0.0);
    } else if (label == encoder.label_values[1]) {
      m.labels.push_back(1.0);
    } else {
      throw DatasetError(K::kUnknownCategory,
                         "line " + std::to_string(line) + ": label " +
                             quoted(label) + " is neither " +
                             quoted(encoder.label_values[0]) + " nor " +
                             quoted(encoder.label_values[1]),
                         line, encoder.label_column);
    }
  }
  return m;
}

EncodedMatrix select_rows(const EncodedMatrix& m,
                          std::span<const std::size_t> indices) {
  EncodedMatrix out;
  out.encoder = m.encoder;
  out.rows = indices.size();
  out.cols = m.cols;
  out.features.reserve(out.rows * out.cols);
  out.labels.reserve(out.rows);
  for (const std::size_t i : indices) {
    const auto r = m.row(i);
    out.features.insert(out.features.end(), r.begin(), r.end());
    out.labels.push_back(m.labels[i]);
  }
  return out;
}

SplitPlan make_split(const Dataset& d, std::uint64_t seed) {
  return make_split(d.labels, d.label_values, seed);
}

SplitPlan make_split(std::span<const int> labels,
                     const std::array<std::string, 2>& label_values,
                     std::uint64_t seed) {
  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    by_class[labels[i] == 0 ? 0 : 1].push_back(i);
  }
  for (int c = 0; c < 2; ++c) {
    if (by_class[c].size() < 2) {
      throw DatasetError(DatasetError::Kind::kClassTooSmall,
                         "class " + quoted(label_values[c]) + " has " +
                             std::to_string(by_class[c].size()) +
                             " rows, at least 2 are required",
                         0, label_values[c], by_class[c].size());
    }
  }

  Rng rng(mix_seed(seed, kSplitStream, 0));
  SplitPlan plan;
  std::size_t deal = 0;
  for (auto& members : by_class) {
    rng.shuffle(std::span<std::size_t>(members));
    const auto n_validation = static_cast<std::size_t>(
        std::floor(0.2 * static_cast<double>(members.size()) + 0.5));
    for (std::size_t i = 0; i < members.size(); ++i) {
      if (i < n_validation) {
        plan.validation.push_back(members[i]);
      } else {
        plan.train.push_back(members[i]);
        plan.folds[deal % kFoldCount].push_back(members[i]);
        ++deal;
      }
    }
  }
  std::sort(plan.train.begin(), plan.train.end());
  std::sort(plan.validation.begin(), plan.validation.end());
  for (auto& f : plan.folds) std::sort(f.begin(), f.end());
  return plan;
}

}  // namespace imedbot::data
