#pragma once

// Margin operator, ramp loss, empirical risks, and the normalized margin
// distribution with its histogram / kernel density summaries.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "margin_auditor/data.hpp"
#include "margin_auditor/errors.hpp"
#include "margin_auditor/linalg.hpp"
#include "margin_auditor/network.hpp"

namespace margin_auditor {

// M(v, y) = v_y - max_{i != y} v_i, with y 1-based.
inline double margin_operator(std::span<const double> v, int y) {
  if (v.size() < 2) throw ParameterError("margin_operator needs at least two classes");
  if (y < 1 || static_cast<std::size_t>(y) > v.size()) throw ParameterError("label out of range");
  const std::size_t target = static_cast<std::size_t>(y - 1);
  double best_other = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < v.size(); ++i)
    if (i != target) best_other = std::max(best_other, v[i]);
  return v[target] - best_other;
}

inline double ramp_loss(double r, double gamma) {
  if (!(gamma > 0.0)) throw ParameterError("ramp_loss: gamma must be positive");
  if (r < -gamma) return 0.0;
  if (r > 0.0) return 1.0;
  return 1.0 + r / gamma;
}

// 1-based argmax; ties go to the lowest index.
inline int predict_label(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return static_cast<int>(best) + 1;
}

inline std::vector<double> raw_margins(const Matrix& outputs, std::span<const int> labels) {
  if (outputs.rows() != labels.size()) throw DimensionError("outputs and labels differ in length");
  std::vector<double> m(outputs.rows());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = margin_operator(outputs.row(i), labels[i]);
  return m;
}

inline double ramp_risk_from_outputs(const Matrix& outputs, std::span<const int> labels, double gamma) {
  if (labels.empty()) throw ParameterError("ramp risk of an empty dataset");
  if (!(gamma > 0.0)) throw ParameterError("gamma must be positive");
  const auto margins = raw_margins(outputs, labels);
  double s = 0.0;
  for (double m : margins) s += ramp_loss(-m, gamma);
  return s / static_cast<double>(margins.size());
}

inline double error_rate_from_outputs(const Matrix& outputs, std::span<const int> labels) {
  if (labels.empty()) throw ParameterError("error rate of an empty dataset");
  if (outputs.rows() != labels.size()) throw DimensionError("outputs and labels differ in length");
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (predict_label(outputs.row(i)) != labels[i]) ++wrong;
  return static_cast<double>(wrong) / static_cast<double>(labels.size());
}

// n^{-1} sum_i ramp_loss(-M(F(x_i), y_i), gamma)
inline double ramp_risk_empirical(const Network& net, const Dataset& ds, double gamma) {
  return ramp_risk_from_outputs(forward(net, ds.x), ds.y, gamma);
}

inline double error_rate(const Network& net, const Dataset& ds) {
  return error_rate_from_outputs(forward(net, ds.x), ds.y);
}

// Median of the positive raw margins, or 1.0 when none is positive.
inline double default_gamma(std::span<const double> raw) {
  std::vector<double> pos;
  for (double m : raw)
    if (m > 0.0) pos.push_back(m);
  if (pos.empty()) return 1.0;
  std::sort(pos.begin(), pos.end());
  const std::size_t n = pos.size();
  return n % 2 == 1 ? pos[n / 2] : 0.5 * (pos[n / 2 - 1] + pos[n / 2]);
}

struct MarginDistribution {
  std::vector<double> raw;
  std::vector<double> normalized;
  double normalizer = 1.0;  // R_A ||X||_2 / n
  std::optional<double> gamma_used;
};

inline MarginDistribution margin_distribution_from_outputs(const Matrix& outputs, std::span<const int> labels,
                                                           double spectral_complexity, double x_norm) {
  if (!(spectral_complexity > 0.0)) throw DegeneracyError("margin normalization needs R_A > 0");
  if (!(x_norm > 0.0)) throw DegeneracyError("margin normalization needs a nonzero data matrix");
  MarginDistribution md;
  md.raw = raw_margins(outputs, labels);
  md.normalizer = spectral_complexity * x_norm / static_cast<double>(labels.size());
  md.normalized.resize(md.raw.size());
  for (std::size_t i = 0; i < md.raw.size(); ++i) md.normalized[i] = md.raw[i] / md.normalizer;
  return md;
}

// Margins normalized by R_A ||X||_2 / n, log terms ignored.
inline MarginDistribution margin_distribution(const Network& net, const Dataset& ds, double spectral_complexity) {
  return margin_distribution_from_outputs(forward(net, ds.x), ds.y, spectral_complexity, data_norm(ds.x));
}

// ---------------------------------------------------------------------------
// Summaries

struct HistogramBin {
  double left;
  double right;
  double density;
};

struct MarginSummary {
  std::vector<HistogramBin> histogram;
  std::vector<double> kde_x;
  std::vector<double> kde_density;
  double bandwidth = 0.0;
};

inline constexpr std::size_t kKdePoints = 256;
inline constexpr double kMinBandwidth = 1e-6;

// Linear-interpolation quantile of sorted data.
inline double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw ParameterError("quantile of empty data");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double stddev_of(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

// Silverman's rule of thumb, floored at kMinBandwidth.
inline double silverman_bandwidth(std::span<const double> values) {
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double sd = stddev_of(sorted);
  const double iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
  double spread = std::min(sd, iqr / 1.34);
  if (!(spread > 0.0)) spread = sd;
  const double h = 0.9 * spread * std::pow(static_cast<double>(sorted.size()), -0.2);
  return std::max(h, kMinBandwidth);
}

// Equal-width histogram over [min, max] (last bin closed) and a Gaussian KDE
// sampled at 256 points on [min - 6h, max + 6h].
inline MarginSummary summarize(std::span<const double> values, std::size_t bins) {
  if (bins < 2) throw ParameterError("summarize needs at least two bins");
  if (values.empty()) throw ParameterError("summarize of an empty distribution");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  const double n = static_cast<double>(values.size());

  MarginSummary s;
  if (hi > lo) {
    const double width = (hi - lo) / static_cast<double>(bins);
    std::vector<std::size_t> counts(bins, 0);
    for (double v : values) {
      auto b = static_cast<std::size_t>((v - lo) / width);
      ++counts[std::min(b, bins - 1)];
    }
    for (std::size_t b = 0; b < bins; ++b) {
      const double left = lo + width * static_cast<double>(b);
      const double right = b + 1 == bins ? hi : lo + width * static_cast<double>(b + 1);
      s.histogram.push_back({left, right, static_cast<double>(counts[b]) / (n * (right - left))});
    }
  } else {
    // Constant distribution: one unit-width bin centered on the value.
    s.histogram.push_back({lo - 0.5, lo + 0.5, 1.0});
  }

  const double h = silverman_bandwidth(values);
  s.bandwidth = h;
  const double a = lo - 6.0 * h;
  const double b = hi + 6.0 * h;
  const double step = (b - a) / static_cast<double>(kKdePoints - 1);
  const double norm = 1.0 / (n * h * std::sqrt(2.0 * std::numbers::pi));
  s.kde_x.resize(kKdePoints);
  s.kde_density.resize(kKdePoints);
  for (std::size_t i = 0; i < kKdePoints; ++i) {
    const double x = a + step * static_cast<double>(i);
    double acc = 0.0;
    for (double v : values) {
      const double z = (x - v) / h;
      acc += std::exp(-0.5 * z * z);
    }
    s.kde_x[i] = x;
    s.kde_density[i] = acc * norm;
  }
  return s;
}

inline MarginSummary summarize(const MarginDistribution& md, std::size_t bins) { return summarize(md.normalized, bins); }

// Scalar digest of a distribution, used in training snapshots.
struct DistributionDigest {
  double mean = 0.0;
  double stddev = 0.0;
  double min = 0.0;
  double q10 = 0.0;
  double median = 0.0;
  double q90 = 0.0;
  double max = 0.0;
};

inline DistributionDigest digest(std::span<const double> values) {
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  DistributionDigest d;
  d.mean = mean_of(values);
  d.stddev = stddev_of(values);
  d.min = sorted.front();
  d.q10 = quantile_sorted(sorted, 0.1);
  d.median = quantile_sorted(sorted, 0.5);
  d.q90 = quantile_sorted(sorted, 0.9);
  d.max = sorted.back();
  return d;
}

}  // namespace margin_auditor
