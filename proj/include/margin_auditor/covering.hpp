#pragma once

// Constructive Maurey sparsification and the matrix cover element it yields
// for products XA with a group-norm constraint on A.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "margin_auditor/errors.hpp"
#include "margin_auditor/linalg.hpp"

namespace margin_auditor {

struct SparsifyResult {
  std::vector<std::size_t> counts;  // k_i, summing to k
  std::vector<double> approximation;  // (||alpha||_1 / k) sum_i k_i V_i
  double approx_error_sq = 0.0;       // ||U - approximation||^2
  double guarantee = 0.0;             // ||alpha||_1^2 / k * max_i ||V_i||^2
  std::size_t attempts = 0;
};

inline constexpr std::size_t kMaureyMaxAttempts = 1000;

// Finds integer counts k_i (sum k) such that U = sum_i alpha_i V_i is
// approximated by (||alpha||_1/k) sum_i k_i V_i within the Maurey guarantee.
// Counts come from k iid draws of atom i with probability alpha_i/||alpha||_1,
// resampled until the guarantee holds.
inline SparsifyResult maurey_sparsify(std::span<const std::vector<double>> atoms, std::span<const double> alpha,
                                      std::size_t k, std::uint64_t seed,
                                      std::size_t max_attempts = kMaureyMaxAttempts) {
  if (atoms.empty()) throw ParameterError("maurey_sparsify: no atoms");
  if (atoms.size() != alpha.size()) throw ParameterError("maurey_sparsify: one weight per atom required");
  if (k < 1) throw ParameterError("maurey_sparsify: k must be at least 1");
  const std::size_t dim = atoms.front().size();
  double beta = 0.0;
  double max_norm_sq = 0.0;
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    if (atoms[i].size() != dim) throw DimensionError("maurey_sparsify: atoms differ in shape");
    if (!(alpha[i] >= 0.0) || !std::isfinite(alpha[i])) throw ParameterError("maurey_sparsify: weights must be nonnegative");
    beta += alpha[i];
    double ns = 0.0;
    for (double v : atoms[i]) ns += v * v;
    max_norm_sq = std::max(max_norm_sq, ns);
  }
  if (!(beta > 0.0)) throw ParameterError("maurey_sparsify: weights are all zero");

  std::vector<double> target(dim, 0.0);
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    if (alpha[i] == 0.0) continue;
    for (std::size_t j = 0; j < dim; ++j) target[j] += alpha[i] * atoms[i][j];
  }

  SparsifyResult out;
  out.guarantee = beta * beta / static_cast<double>(k) * max_norm_sq;
  std::mt19937_64 rng(seed);
  std::discrete_distribution<std::size_t> pick(alpha.begin(), alpha.end());
  const double scale = beta / static_cast<double>(k);
  std::vector<double> approx(dim);
  for (std::size_t attempt = 1; attempt <= max_attempts; ++attempt) {
    std::vector<std::size_t> counts(atoms.size(), 0);
    for (std::size_t draw = 0; draw < k; ++draw) ++counts[pick(rng)];
    std::fill(approx.begin(), approx.end(), 0.0);
    for (std::size_t i = 0; i < atoms.size(); ++i) {
      if (counts[i] == 0) continue;
      const double w = scale * static_cast<double>(counts[i]);
      for (std::size_t j = 0; j < dim; ++j) approx[j] += w * atoms[i][j];
    }
    double err = 0.0;
    for (std::size_t j = 0; j < dim; ++j) err += (target[j] - approx[j]) * (target[j] - approx[j]);
    if (err <= out.guarantee) {
      out.counts = std::move(counts);
      out.approximation = approx;
      out.approx_error_sq = err;
      out.attempts = attempt;
      return out;
    }
  }
  throw DegeneracyError("maurey_sparsify: guarantee not met after " + std::to_string(max_attempts) + " attempts");
}

struct CoverElement {
  Matrix approximation;  // the cover element W ~ XA, n x m
  std::size_t k = 0;     // sparsity level ceil(a^2 b^2 m^{2/r} / eps^2)
  double a = 0.0;        // ||A||_{q,s}
  double b = 0.0;        // ||X||_p (entrywise)
  double a_bar = 0.0;    // a m^{1/r} ||X||_p
  double error = 0.0;    // ||XA - W||_2 (Frobenius)
  double guarantee = 0.0;  // sqrt of the Maurey guarantee, <= eps
  std::size_t attempts = 0;
};

// Builds the cover element for XA (X: n x d, A: d x m). Columns of X are
// rescaled to unit p-norm (p conjugate to q, p <= 2), and XA is written as a
// point of a_bar * conv{+-Y e_i e_j^T} which Maurey sparsifies with k terms.
inline CoverElement cover_element_for(const Matrix& a_mat, const Matrix& x, double eps, const NormExponent& q,
                                      const NormExponent& s, std::uint64_t seed) {
  if (!(eps > 0.0)) throw ParameterError("cover_element_for: eps must be positive");
  if (x.empty() || a_mat.empty()) throw DimensionError("cover_element_for: empty matrix");
  if (x.cols() != a_mat.rows()) throw DimensionError("cover_element_for: X columns must equal A rows");
  validate_exponent(q, "q");
  validate_exponent(s, "s");
  const NormExponent p = conjugate(q);
  if (!is_infinite(p) && std::get<double>(p) > 2.0) throw ParameterError("cover_element_for: needs p <= 2 (q >= 2)");
  if (is_infinite(p)) throw ParameterError("cover_element_for: needs p <= 2 (q >= 2)");
  const NormExponent r = conjugate(s);

  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  const std::size_t m = a_mat.cols();

  CoverElement out;
  out.b = entrywise_norm(x, p);
  if (!(out.b > 0.0)) throw DegeneracyError("cover_element_for: X is all zero");
  out.a = group_norm(a_mat, q, s);
  if (out.a == 0.0) {
    out.approximation = Matrix(n, m);
    return out;
  }
  const double m_pow = std::pow(static_cast<double>(m), reciprocal(r));
  out.a_bar = out.a * m_pow * out.b;
  out.k = static_cast<std::size_t>(std::ceil(out.a * out.a * out.b * out.b * m_pow * m_pow / (eps * eps)));
  out.k = std::max<std::size_t>(out.k, 1);

  // Y = X with unit p-norm columns; zero columns stay zero.
  std::vector<double> col_norm(d);
  Matrix y(n, d);
  for (std::size_t i = 0; i < d; ++i) {
    col_norm[i] = vector_norm(x.column(i), p);
    if (col_norm[i] == 0.0) continue;
    for (std::size_t t = 0; t < n; ++t) y(t, i) = x(t, i) / col_norm[i];
  }

  // Atom (i, j, g) = g * Y e_i e_j^T at index 2 (i m + j) + (g < 0).
  const std::size_t atom_count = 2 * d * m;
  std::vector<std::vector<double>> atoms(atom_count, std::vector<double>(n * m, 0.0));
  std::vector<double> weights(atom_count, 0.0);
  double l1 = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t base = 2 * (i * m + j);
      for (std::size_t t = 0; t < n; ++t) {
        atoms[base][t * m + j] = y(t, i);
        atoms[base + 1][t * m + j] = -y(t, i);
      }
      const double bij = col_norm[i] * a_mat(i, j);  // B = alpha (.) A
      weights[base + (bij < 0.0 ? 1 : 0)] = std::abs(bij);
      l1 += std::abs(bij);
    }
  }
  // ||B||_1 <= a_bar; the slack goes on a +-V pair, which cancels in U.
  const double slack = std::max(0.0, out.a_bar - l1);
  weights[0] += 0.5 * slack;
  weights[1] += 0.5 * slack;

  const auto sparse = maurey_sparsify(atoms, weights, out.k, seed);
  out.attempts = sparse.attempts;
  out.guarantee = std::sqrt(sparse.guarantee);
  out.approximation = Matrix(n, m, sparse.approximation);

  const Matrix exact = matmul(x, a_mat);
  out.error = frobenius_norm(exact - out.approximation);
  return out;
}

}  // namespace margin_auditor
