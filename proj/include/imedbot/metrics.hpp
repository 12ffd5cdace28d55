#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "imedbot/error.hpp"

namespace imedbot::metrics {

class MetricsError : public Error {
 public:
  enum class Kind { kSingleClass, kLengthMismatch, kNonFiniteScore };

  MetricsError(Kind kind, const std::string& message, std::size_t index = 0);
  Kind kind() const noexcept { return kind_; }
  std::size_t index() const noexcept { return index_; }

 private:
  Kind kind_;
  std::size_t index_;
};

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;

  friend bool operator==(const RocPoint&, const RocPoint&) = default;
};

struct RocResult {
  std::vector<RocPoint> points;  // (0,0) first, (1,1) last
  double auc = 0.0;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;

  friend bool operator==(const RocResult&, const RocResult&) = default;
};

// Thresholds sweep the distinct scores in descending order; tied scores move
// the curve in a single diagonal step. The area is accumulated in integer
// units of 1/(2 * n_pos * n_neg), which makes it exactly the tie-aware
// Mann-Whitney statistic.
RocResult roc_curve(std::span<const double> scores, std::span<const double> labels);

// Fixed 640x480 SVG document: ROC polyline, chance diagonal, axes, labels and
// an "AUC = x.xxx" legend. Byte-identical for identical input.
std::string plot_series(const RocResult& r);

}  // namespace imedbot::metrics
