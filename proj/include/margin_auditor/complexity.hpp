#pragma once

// Spectral complexity, the PAC-Bayes comparator, covering-number bounds,
// Dudley entropy integrals, and the explicit-constant generalization bounds.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "margin_auditor/data.hpp"
#include "margin_auditor/errors.hpp"
#include "margin_auditor/linalg.hpp"
#include "margin_auditor/margins.hpp"
#include "margin_auditor/network.hpp"

namespace margin_auditor {

struct LayerNorms {
  double s = 0.0;    // ||A_i||_sigma
  double b = 0.0;    // ||A_i^T - M_i^T||_{2,1}
  double rho = 1.0;  // Lipschitz constant of sigma_i w.r.t. l2
};

inline std::vector<LayerNorms> layer_norms(const Network& net) {
  std::vector<LayerNorms> out;
  out.reserve(net.depth());
  for (const auto& layer : net.layers()) {
    out.push_back({spectral_norm(layer.weight), norm_2_1_of_transpose(layer.weight - layer.reference), layer.rho()});
  }
  return out;
}

// ||A_i - M_i||_2 (Frobenius) per layer.
inline std::vector<double> frobenius_deltas(const Network& net) {
  std::vector<double> out;
  for (const auto& layer : net.layers()) out.push_back(frobenius_norm(layer.weight - layer.reference));
  return out;
}

namespace detail {

inline void require_positive_spectral(std::span<const LayerNorms> norms) {
  if (norms.empty()) throw ParameterError("no layers");
  for (std::size_t i = 0; i < norms.size(); ++i) {
    if (!(norms[i].s > 0.0)) {
      throw DegeneracyError("layer " + std::to_string(i + 1) + " has zero spectral norm; b_i/s_i is undefined");
    }
    if (norms[i].b < 0.0 || !(norms[i].rho > 0.0)) throw ParameterError("invalid layer norms");
  }
}

inline double product_rho_s(std::span<const LayerNorms> norms) {
  double p = 1.0;
  for (const auto& n : norms) p *= n.rho * n.s;
  return p;
}

// sum_i (b_i / s_i)^{2/3}
inline double ratio_sum(std::span<const LayerNorms> norms) {
  double s = 0.0;
  for (const auto& n : norms) s += std::cbrt((n.b / n.s) * (n.b / n.s));
  return s;
}

}  // namespace detail

inline double product_spectral_norms(std::span<const LayerNorms> norms) {
  double p = 1.0;
  for (const auto& n : norms) p *= n.s;
  return p;
}

// R_A = (prod_i rho_i s_i) (sum_i (b_i/s_i)^{2/3})^{3/2}. Zero when every
// b_i is zero.
inline double spectral_complexity(std::span<const LayerNorms> norms) {
  detail::require_positive_spectral(norms);
  // Factor out the largest ratio t: (sum r_i^{2/3})^{3/2} = t (sum (r_i/t)^{2/3})^{3/2}.
  double t = 0.0;
  for (const auto& n : norms) t = std::max(t, n.b / n.s);
  if (t == 0.0) return 0.0;
  double sum = 0.0;
  for (const auto& n : norms) {
    const double q = (n.b / n.s) / t;
    sum += std::cbrt(q * q);
  }
  return detail::product_rho_s(norms) * t * sum * std::sqrt(sum);
}

// (prod_i rho_i s_i) * L * (sum_i W ||A_i - M_i||_2^2 / s_i^2)^{1/2}
inline double pac_bayes_complexity(std::span<const LayerNorms> norms, std::span<const double> frobenius_delta,
                                   std::size_t width) {
  detail::require_positive_spectral(norms);
  if (frobenius_delta.size() != norms.size()) throw ParameterError("one Frobenius delta per layer required");
  double sum = 0.0;
  for (std::size_t i = 0; i < norms.size(); ++i) {
    const double t = std::sqrt(static_cast<double>(width)) * frobenius_delta[i] / norms[i].s;
    sum += t * t;
  }
  return detail::product_rho_s(norms) * static_cast<double>(norms.size()) * std::sqrt(sum);
}

// ceil(a^2 b^2 m^{2/r} / eps^2) * ln(2 d m): log-cardinality of a cover of
// {XA : ||A||_{q,s} <= a} with ||X||_p <= b.
inline double matrix_cover_logsize(double a, double b, std::size_t m, const NormExponent& r, double eps,
                                   std::size_t d) {
  if (!(eps > 0.0)) throw ParameterError("matrix_cover_logsize: eps must be positive");
  if (!(a > 0.0) || !(b > 0.0)) throw ParameterError("matrix_cover_logsize: a and b must be positive");
  if (m < 1 || d < 1) throw ParameterError("matrix_cover_logsize: d and m must be at least 1");
  validate_exponent(r, "r");
  const double md = static_cast<double>(m);
  const double count = std::ceil(a * a * b * b * std::pow(md, 2.0 * reciprocal(r)) / (eps * eps));
  return count * std::log(2.0 * static_cast<double>(d) * md);
}

// (||X||_2^2 ln(2W^2) / eps^2) (prod_j s_j^2 rho_j^2) (sum_i (b_i/s_i)^{2/3})^3
inline double network_cover_logsize(double x_norm, std::size_t width, std::span<const LayerNorms> norms, double eps) {
  if (!(eps > 0.0)) throw ParameterError("network_cover_logsize: eps must be positive");
  detail::require_positive_spectral(norms);
  const double w = static_cast<double>(width);
  const double prod = detail::product_rho_s(norms);
  const double sum = detail::ratio_sum(norms);
  return x_norm * x_norm * std::log(2.0 * w * w) / (eps * eps) * prod * prod * sum * sum * sum;
}

// The constant R in ln N <= R / eps^2 for the ramp-loss class at margin gamma
// (the margin operator composed with the ramp is 2/gamma-Lipschitz).
inline double ramp_class_cover_constant(double x_norm, std::size_t width, std::span<const LayerNorms> norms,
                                        double gamma) {
  if (!(gamma > 0.0)) throw ParameterError("gamma must be positive");
  return 4.0 / (gamma * gamma) * network_cover_logsize(x_norm, width, norms, 1.0);
}

// tau = sum_j eps_j rho_j prod_{l>j} rho_l c_l
inline double cover_resolution(std::span<const double> eps, std::span<const double> rho, std::span<const double> c) {
  if (eps.size() != rho.size() || eps.size() != c.size()) throw ParameterError("cover_resolution: length mismatch");
  double tau = 0.0;
  for (std::size_t j = 0; j < eps.size(); ++j) {
    double term = eps[j] * rho[j];
    for (std::size_t l = j + 1; l < eps.size(); ++l) term *= rho[l] * c[l];
    tau += term;
  }
  return tau;
}

struct CoverBudget {
  double eps_total = 0.0;
  std::vector<double> eps_per_layer;
  std::vector<double> alpha_weights;
  double alpha_bar = 0.0;
};

// eps_i = alpha_i eps / (rho_i prod_{j>i} rho_j s_j), alpha_i proportional to
// (b_i/s_i)^{2/3}.
inline CoverBudget cover_budget(double eps, std::span<const LayerNorms> norms) {
  if (!(eps > 0.0)) throw ParameterError("cover_budget: eps must be positive");
  detail::require_positive_spectral(norms);
  CoverBudget out;
  out.eps_total = eps;
  out.alpha_bar = detail::ratio_sum(norms);
  if (!(out.alpha_bar > 0.0)) {
    throw DegeneracyError("cover_budget: every layer equals its reference (all b_i = 0)");
  }
  const std::size_t L = norms.size();
  out.alpha_weights.resize(L);
  out.eps_per_layer.resize(L);
  for (std::size_t i = 0; i < L; ++i) {
    const double ratio = norms[i].b / norms[i].s;
    out.alpha_weights[i] = std::cbrt(ratio * ratio) / out.alpha_bar;
    double tail = 1.0;
    for (std::size_t j = i + 1; j < L; ++j) tail *= norms[j].rho * norms[j].s;
    out.eps_per_layer[i] = out.alpha_weights[i] * eps / (norms[i].rho * tail);
  }
  // Rounding can push the composed resolution a few ulps above eps; shrink
  // the per-layer radii until it does not.
  std::vector<double> rho(L), s(L);
  for (std::size_t i = 0; i < L; ++i) {
    rho[i] = norms[i].rho;
    s[i] = norms[i].s;
  }
  for (int pass = 0; pass < 64 && cover_resolution(out.eps_per_layer, rho, s) > eps; ++pass) {
    for (double& e : out.eps_per_layer) e = std::nextafter(e * (1.0 - 1e-15), 0.0);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dudley entropy integral

// 4 alpha / sqrt(n) + (12 sqrt(R) / n) ln(sqrt(n) / alpha), the Dudley bound
// under ln N(eps) <= R / eps^2; the integral vanishes once alpha >= sqrt(n).
inline double dudley_objective(double R, std::size_t n, double alpha) {
  if (!(alpha > 0.0)) throw ParameterError("alpha must be positive");
  const double rn = std::sqrt(static_cast<double>(n));
  double v = 4.0 * alpha / rn;
  if (alpha < rn) v += 12.0 * std::sqrt(R) / static_cast<double>(n) * std::log(rn / alpha);
  return v;
}

struct DudleyResult {
  double bound = 0.0;
  double alpha_star = 0.0;
};

// Minimizer alpha* = 3 sqrt(R/n), clamped to the boundary sqrt(n).
inline DudleyResult dudley_closed_form(double R, std::size_t n) {
  if (!(R > 0.0)) throw ParameterError("dudley_closed_form: R must be positive");
  if (n < 1) throw ParameterError("dudley_closed_form: n must be at least 1");
  const double rn = std::sqrt(static_cast<double>(n));
  DudleyResult out;
  out.alpha_star = 3.0 * std::sqrt(R / static_cast<double>(n));
  if (out.alpha_star >= rn) out.alpha_star = rn;
  out.bound = dudley_objective(R, n, out.alpha_star);
  return out;
}

inline constexpr std::size_t kDudleyNodes = 256;

// 4 alpha / sqrt(n) + (12/n) int_alpha^sqrt(n) sqrt(logN(eps)) d eps.
// The integral is a composite trapezoid rule in u = ln(eps) over 256 equally
// spaced nodes (log-spaced in eps), applied to sqrt(logN(e^u)) e^u.
inline double dudley_numeric(const std::function<double(double)>& log_cover, std::size_t n, double alpha) {
  if (!(alpha > 0.0)) throw ParameterError("dudley_numeric: alpha must be positive");
  if (n < 1) throw ParameterError("dudley_numeric: n must be at least 1");
  const double rn = std::sqrt(static_cast<double>(n));
  const double head = 4.0 * alpha / rn;
  if (alpha >= rn) return head;

  const double u0 = std::log(alpha);
  const double h = (std::log(rn) - u0) / static_cast<double>(kDudleyNodes - 1);
  double prev_log_cover = 0.0;
  double integral = 0.0;
  double prev_g = 0.0;
  for (std::size_t i = 0; i < kDudleyNodes; ++i) {
    const double eps = i + 1 == kDudleyNodes ? rn : std::exp(u0 + h * static_cast<double>(i));
    const double lc = log_cover(eps);
    if (!(lc >= 0.0)) throw ParameterError("dudley_numeric: log covering number must be nonnegative");
    if (i > 0 && lc > prev_log_cover * (1.0 + 1e-12) + 1e-300) {
      throw ParameterError("dudley_numeric: log covering number must be nonincreasing in eps");
    }
    prev_log_cover = lc;
    const double g = std::sqrt(lc) * eps;
    if (i > 0) integral += 0.5 * h * (prev_g + g);
    prev_g = g;
  }
  return head + 12.0 / static_cast<double>(n) * integral;
}

// ---------------------------------------------------------------------------
// Generalization bounds

struct BoundTerms {
  double ramp_risk = 0.0;
  double term_const = 0.0;
  double term_complexity = 0.0;
  double term_confidence = 0.0;
  double total = 0.0;
};

namespace detail {

inline void check_bound_inputs(std::size_t n, double gamma, double delta) {
  if (!(gamma > 0.0)) throw ParameterError("gamma must be positive");
  if (!(delta > 0.0 && delta < 1.0)) throw ParameterError("delta must lie in (0, 1)");
  if (n < 2) throw ParameterError("bounds need n >= 2");
}

}  // namespace detail

// Fixed-norm bound: ramp + 8/n + 72 B ln(2W) ln(n)/(gamma n) R_A +
// 3 sqrt(ln(1/delta)/(2n)).
inline BoundTerms generalization_bound_fixed(double ramp_risk, double data_bound, std::size_t width, std::size_t n,
                                             double gamma, double delta, std::span<const LayerNorms> norms) {
  detail::check_bound_inputs(n, gamma, delta);
  if (!(data_bound > 0.0)) throw ParameterError("data bound B must be positive");
  const double nd = static_cast<double>(n);
  BoundTerms t;
  t.ramp_risk = ramp_risk;
  t.term_const = 8.0 / nd;
  t.term_complexity = 72.0 * data_bound * std::log(2.0 * static_cast<double>(width)) * std::log(nd) / (gamma * nd) *
                      spectral_complexity(norms);
  t.term_confidence = 3.0 * std::sqrt(std::log(1.0 / delta) / (2.0 * nd));
  t.total = t.ramp_risk + t.term_const + t.term_complexity + t.term_confidence;
  return t;
}

struct UniformBoundTerms : BoundTerms {
  // gamma < 2/n: the bound exceeds 1 and carries no information.
  bool vacuous = false;
};

// Bound holding uniformly over all margins and weight norms:
//   ramp + 8/n
//   + 144 ln(n) ln(2W)/(gamma n) (prod rho_i)(1 + ||X||_2)
//       (sum_i ((1/L + b_i) prod_{j!=i} (1/L + s_j))^{2/3})^{3/2}
//   + sqrt(9/(2n)) sqrt(ln(1/delta) + ln(2n/gamma) + 2 ln(2 + ||X||_2)
//       + 2 sum_i ln(2 + L b_i) + 2 sum_i ln(2 + L s_i))
inline UniformBoundTerms generalization_bound_uniform(double ramp_risk, double x_norm, std::size_t width,
                                                      std::size_t n, double gamma, double delta,
                                                      std::span<const LayerNorms> norms) {
  detail::check_bound_inputs(n, gamma, delta);
  if (norms.empty()) throw ParameterError("no layers");
  if (x_norm < 0.0) throw ParameterError("data norm must be nonnegative");
  const double nd = static_cast<double>(n);
  const std::size_t L = norms.size();
  const double inv_l = 1.0 / static_cast<double>(L);

  double prod_rho = 1.0;
  for (const auto& nm : norms) prod_rho *= nm.rho;
  double sum = 0.0;
  for (std::size_t i = 0; i < L; ++i) {
    double term = inv_l + norms[i].b;
    for (std::size_t j = 0; j < L; ++j)
      if (j != i) term *= inv_l + norms[j].s;
    sum += std::cbrt(term * term);
  }

  double radicand = std::log(1.0 / delta) + std::log(2.0 * nd / gamma) + 2.0 * std::log(2.0 + x_norm);
  for (const auto& nm : norms) {
    radicand += 2.0 * std::log(2.0 + static_cast<double>(L) * nm.b);
    radicand += 2.0 * std::log(2.0 + static_cast<double>(L) * nm.s);
  }

  UniformBoundTerms t;
  t.ramp_risk = ramp_risk;
  t.term_const = 8.0 / nd;
  t.term_complexity = 144.0 * std::log(nd) * std::log(2.0 * static_cast<double>(width)) / (gamma * nd) * prod_rho *
                      (1.0 + x_norm) * sum * std::sqrt(sum);
  t.term_confidence = std::sqrt(9.0 / (2.0 * nd)) * std::sqrt(std::max(radicand, 0.0));
  t.total = t.ramp_risk + t.term_const + t.term_complexity + t.term_confidence;
  t.vacuous = gamma < 2.0 / nd;
  return t;
}

// ramp + 2 * rademacher + 3 sqrt(ln(1/delta) / (2n))
inline double margin_bound_assembly(double ramp_risk, double rademacher, std::size_t n, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw ParameterError("delta must lie in (0, 1)");
  if (n < 1) throw ParameterError("n must be at least 1");
  return ramp_risk + 2.0 * rademacher + 3.0 * std::sqrt(std::log(1.0 / delta) / (2.0 * static_cast<double>(n)));
}

// ---------------------------------------------------------------------------
// Report

struct BoundReport {
  std::vector<LayerNorms> layer_norms;
  std::vector<double> frobenius_deltas;
  double R_A = 0.0;
  double R_PB = 0.0;
  double product_spectral_norms = 0.0;
  double data_norm_B = 0.0;
  std::size_t W = 0;
  std::size_t n = 0;
  std::size_t L = 0;
  double gamma = 0.0;
  bool gamma_defaulted = false;
  double delta = 0.0;
  double error_rate = 0.0;
  double ramp_risk = 0.0;
  double term_const = 0.0;
  double term_complexity = 0.0;
  double term_confidence = 0.0;
  double bound_total = 0.0;
  double uniform_term_complexity = 0.0;
  double uniform_term_confidence = 0.0;
  double uniform_bound_total = 0.0;
  bool uniform_vacuous = false;
  // Every layer equals its reference, so R_A = 0 and margins cannot be
  // normalized.
  bool degenerate = false;
};

struct Analysis {
  BoundReport report;
  MarginDistribution margins;  // normalized is empty when the report is degenerate
};

// Evaluates every bound term for a network on a dataset. gamma defaults to
// the median positive raw margin.
inline Analysis analyze(const Network& net, const Dataset& ds, std::optional<double> gamma, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw ParameterError("delta must lie in (0, 1)");
  if (gamma && !(*gamma > 0.0)) throw ParameterError("gamma must be positive");
  if (ds.size() < 2) throw ParameterError("analysis needs at least two examples");

  const Matrix outputs = forward(net, ds.x);
  Analysis a;
  BoundReport& r = a.report;
  r.layer_norms = layer_norms(net);
  r.frobenius_deltas = frobenius_deltas(net);
  r.R_A = spectral_complexity(r.layer_norms);
  r.R_PB = pac_bayes_complexity(r.layer_norms, r.frobenius_deltas, net.width());
  r.product_spectral_norms = product_spectral_norms(r.layer_norms);
  r.data_norm_B = data_norm(ds.x);
  r.W = net.width();
  r.n = ds.size();
  r.L = net.depth();
  r.delta = delta;
  r.degenerate = !(r.R_A > 0.0);
  if (!(r.data_norm_B > 0.0)) throw DegeneracyError("data matrix is zero");

  if (r.degenerate) {
    a.margins.raw = raw_margins(outputs, ds.y);
  } else {
    a.margins = margin_distribution_from_outputs(outputs, ds.y, r.R_A, r.data_norm_B);
  }
  r.gamma_defaulted = !gamma.has_value();
  r.gamma = gamma ? *gamma : default_gamma(a.margins.raw);
  a.margins.gamma_used = r.gamma;

  r.error_rate = error_rate_from_outputs(outputs, ds.y);
  r.ramp_risk = ramp_risk_from_outputs(outputs, ds.y, r.gamma);
  const auto fixed = generalization_bound_fixed(r.ramp_risk, r.data_norm_B, r.W, r.n, r.gamma, delta, r.layer_norms);
  r.term_const = fixed.term_const;
  r.term_complexity = fixed.term_complexity;
  r.term_confidence = fixed.term_confidence;
  r.bound_total = fixed.total;
  const auto uni = generalization_bound_uniform(r.ramp_risk, r.data_norm_B, r.W, r.n, r.gamma, delta, r.layer_norms);
  r.uniform_term_complexity = uni.term_complexity;
  r.uniform_term_confidence = uni.term_confidence;
  r.uniform_bound_total = uni.total;
  r.uniform_vacuous = uni.vacuous;
  return a;
}

}  // namespace margin_auditor
