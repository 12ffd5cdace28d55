#include "imedbot/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>

namespace imedbot::metrics {

namespace {

const char* kind_name(MetricsError::Kind k) {
  switch (k) {
    case MetricsError::Kind::kSingleClass: return "SingleClass";
    case MetricsError::Kind::kLengthMismatch: return "LengthMismatch";
    case MetricsError::Kind::kNonFiniteScore: return "NonFiniteScore";
  }
  return "MetricsError";
}

// Plot frame inside the 640x480 canvas.
constexpr double kLeft = 80.0;
constexpr double kRight = 600.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 410.0;

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

double px(double fpr) { return kLeft + fpr * (kRight - kLeft); }
double py(double tpr) { return kBottom - tpr * (kBottom - kTop); }

std::string line(double x1, double y1, double x2, double y2, const char* style) {
  return "<line x1=\"" + fixed6(x1) + "\" y1=\"" + fixed6(y1) + "\" x2=\"" +
         fixed6(x2) + "\" y2=\"" + fixed6(y2) + "\" " + style + "/>\n";
}

std::string text(double x, double y, const std::string& body, const char* attrs) {
  return "<text x=\"" + fixed6(x) + "\" y=\"" + fixed6(y) + "\" " + attrs + ">" +
         body + "</text>\n";
}

}  // namespace

MetricsError::MetricsError(Kind kind, const std::string& message, std::size_t index)
    : Error(kind_name(kind), message), kind_(kind), index_(index) {}

RocResult roc_curve(std::span<const double> scores, std::span<const double> labels) {
  using K = MetricsError::Kind;
  if (scores.size() != labels.size()) {
    throw MetricsError(K::kLengthMismatch,
                       "got " + std::to_string(scores.size()) + " scores and " +
                           std::to_string(labels.size()) + " labels");
  }
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) {
      throw MetricsError(K::kNonFiniteScore,
                         "score at index " + std::to_string(i) + " is not finite", i);
    }
  }

  RocResult r;
  for (double y : labels) (y > 0.5 ? r.n_pos : r.n_neg)++;
  if (r.n_pos == 0 || r.n_neg == 0) {
    throw MetricsError(K::kSingleClass, "ROC needs both classes present");
  }

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  const auto pos = static_cast<double>(r.n_pos);
  const auto neg = static_cast<double>(r.n_neg);
  r.points.push_back({0.0, 0.0});

  // twice the area, in units of one (positive, negative) pair
  std::uint64_t doubled_area = 0;
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double threshold = scores[order[i]];
    std::uint64_t group_tp = 0;
    std::uint64_t group_fp = 0;
    while (i < order.size() && scores[order[i]] == threshold) {
      (labels[order[i]] > 0.5 ? group_tp : group_fp)++;
      ++i;
    }
    doubled_area += group_fp * (2 * tp + group_tp);
    tp += group_tp;
    fp += group_fp;
    r.points.push_back({static_cast<double>(fp) / neg, static_cast<double>(tp) / pos});
  }
  r.auc = static_cast<double>(doubled_area) / (2.0 * pos * neg);
  return r;
}

std::string plot_series(const RocResult& r) {
  std::string svg;
  svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" "
         "width=\"640\" height=\"480\" viewBox=\"0 0 640 480\">\n";

  const char* axis = "stroke=\"#000000\" stroke-width=\"1\"";
  svg += line(kLeft, kBottom, kRight, kBottom, axis);
  svg += line(kLeft, kBottom, kLeft, kTop, axis);
  svg += line(kLeft, kTop, kRight, kTop, "stroke=\"#cccccc\" stroke-width=\"1\"");
  svg += line(kRight, kBottom, kRight, kTop, "stroke=\"#cccccc\" stroke-width=\"1\"");

  for (int t = 0; t <= 4; ++t) {
    const double v = t / 4.0;
    char label[16];
    std::snprintf(label, sizeof label, "%.2f", v);
    svg += line(px(v), kBottom, px(v), kBottom + 5, axis);
    svg += text(px(v), kBottom + 20, label,
                "font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\"");
    svg += line(kLeft - 5, py(v), kLeft, py(v), axis);
    svg += text(kLeft - 8, py(v) + 4, label,
                "font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"end\"");
  }

  svg += line(px(0), py(0), px(1), py(1),
              "stroke=\"#888888\" stroke-width=\"1\" stroke-dasharray=\"6,4\"");

  svg += "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
  for (std::size_t i = 0; i < r.points.size(); ++i) {
    if (i) svg += ' ';
    svg += fixed6(px(r.points[i].fpr)) + "," + fixed6(py(r.points[i].tpr));
  }
  svg += "\"/>\n";

  svg += text((kLeft + kRight) / 2, 450, "False Positive Rate",
              "font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\"");
  svg += text(20, (kTop + kBottom) / 2, "True Positive Rate",
              "font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\" "
              "transform=\"rotate(-90 20.000000 225.000000)\"");
  char legend[32];
  std::snprintf(legend, sizeof legend, "AUC = %.3f", r.auc);
  svg += text(kRight - 10, kBottom - 15, legend,
              "font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"end\"");
  svg += "</svg>\n";
  return svg;
}

}  // namespace imedbot::metrics
