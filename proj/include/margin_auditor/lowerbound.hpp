#pragma once

// ReLU networks that compute a linear functional exactly, and a Monte-Carlo
// estimate of the empirical Rademacher complexity of bounded linear maps.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "margin_auditor/errors.hpp"
#include "margin_auditor/linalg.hpp"
#include "margin_auditor/network.hpp"
#include "margin_auditor/parallel.hpp"
#include "margin_auditor/random.hpp"

namespace margin_auditor {

// Depth-L network with f(x) = relu(<a,x>) - relu(-<a,x>) = <a,x>. Hidden
// widths default to 2; wider layers carry zero rows and columns. Hidden
// layers use ReLU and the scalar output layer is linear.
inline Network build_linear_network(std::span<const double> a, std::size_t depth,
                                    std::vector<std::size_t> hidden_widths = {}) {
  if (depth < 2) throw ParameterError("build_linear_network: depth must be at least 2");
  if (a.empty()) throw ParameterError("build_linear_network: empty coefficient vector");
  bool nonzero = false;
  for (double v : a) nonzero = nonzero || v != 0.0;
  if (!nonzero) throw ParameterError("build_linear_network: coefficient vector is zero");
  if (a.size() < 2) throw ParameterError("build_linear_network: input dimension must be at least 2");
  if (hidden_widths.empty()) hidden_widths.assign(depth - 1, 2);
  if (hidden_widths.size() != depth - 1)
    throw ParameterError("build_linear_network: need one width per hidden layer");
  for (std::size_t w : hidden_widths)
    if (w < 2) throw ParameterError("build_linear_network: hidden widths must be at least 2");

  const std::size_t d = a.size();
  std::vector<Layer> layers;
  layers.reserve(depth);

  Matrix first(hidden_widths[0], d);
  for (std::size_t c = 0; c < d; ++c) {
    first(0, c) = a[c];
    first(1, c) = -a[c];
  }
  layers.emplace_back(std::move(first), Nonlinearity::relu());

  for (std::size_t k = 1; k + 1 < depth; ++k) {
    Matrix mid(hidden_widths[k], hidden_widths[k - 1]);
    mid(0, 0) = 1.0;
    mid(1, 1) = 1.0;
    layers.emplace_back(std::move(mid), Nonlinearity::relu());
  }

  Matrix last(1, hidden_widths.back());
  last(0, 0) = 1.0;
  last(0, 1) = -1.0;
  layers.emplace_back(std::move(last), Nonlinearity::identity());
  return Network(std::move(layers));
}

struct RademacherEstimate {
  double mean = 0.0;            // r E||sum_t eps_t x_t||_2 / n
  double standard_error = 0.0;  // sample std / sqrt(trials)
  std::size_t trials = 0;
};

// Trial t draws its signs from a generator seeded by (seed, t); the per-trial
// values are reduced in trial order, so the result is independent of threads.
inline RademacherEstimate rademacher_linear_estimate(const Matrix& x, double r, std::size_t trials,
                                                     std::uint64_t seed) {
  if (x.empty()) throw ParameterError("rademacher_linear_estimate: empty data");
  if (!(r > 0.0)) throw ParameterError("rademacher_linear_estimate: r must be positive");
  if (trials < 1) throw ParameterError("rademacher_linear_estimate: trials must be at least 1");
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  std::vector<double> values(trials);
  parallel_for_rows(trials, [&](std::size_t begin, std::size_t end) {
    std::vector<double> acc(d);
    for (std::size_t t = begin; t < end; ++t) {
      std::mt19937_64 rng(derive_seed(seed, 0x5a, t));
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const double sign = (rng() >> 63) != 0 ? 1.0 : -1.0;
        auto row = x.row(i);
        for (std::size_t c = 0; c < d; ++c) acc[c] += sign * row[c];
      }
      double sq = 0.0;
      for (double v : acc) sq += v * v;
      values[t] = r * std::sqrt(sq) / static_cast<double>(n);
    }
  });

  RademacherEstimate out;
  out.trials = trials;
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(trials);
  if (trials > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.standard_error = std::sqrt(ss / static_cast<double>(trials - 1)) / std::sqrt(static_cast<double>(trials));
  }
  return out;
}

}  // namespace margin_auditor
