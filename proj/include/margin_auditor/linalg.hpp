#pragma once

// Dense row-major matrices and the matrix norms used by the bound formulas.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <initializer_list>
#include <istream>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "margin_auditor/errors.hpp"

namespace margin_auditor {

class Matrix {
 public:
  Matrix() = default;

  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {
    check_finite();
  }

  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw DimensionError("matrix data length " + std::to_string(data_.size()) +
                           " does not match " + std::to_string(rows_) + "x" +
                           std::to_string(cols_));
    }
    check_finite();
  }

  // Matrix{{1, 2}, {3, 4}}
  Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& row : rows) {
      if (row.size() != cols_) throw DimensionError("ragged matrix literal");
      data_.insert(data_.end(), row.begin(), row.end());
    }
    check_finite();
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  std::vector<double> column(std::size_t c) const {
    std::vector<double> out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
    return out;
  }

  Matrix transpose() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
  }

  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  Matrix& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }

  friend Matrix operator*(double s, Matrix m) { return m *= s; }
  friend Matrix operator*(Matrix m, double s) { return m *= s; }

  friend Matrix operator+(const Matrix& a, const Matrix& b) { return combine(a, b, 1.0); }
  friend Matrix operator-(const Matrix& a, const Matrix& b) { return combine(a, b, -1.0); }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  static Matrix combine(const Matrix& a, const Matrix& b, double sign) {
    if (!a.same_shape(b)) throw DimensionError("matrix shapes differ");
    Matrix out = a;
    for (std::size_t i = 0; i < out.data_.size(); ++i) out.data_[i] += sign * b.data_[i];
    return out;
  }

  void check_finite() const {
    for (std::size_t i = 0; i < data_.size(); ++i) {
      if (!std::isfinite(data_[i])) {
        throw ParameterError("non-finite matrix entry at flat index " + std::to_string(i));
      }
    }
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Inner product with four interleaved partial sums (fixed summation order).
inline double dot(std::span<const double> a, std::span<const double> b) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  const std::size_t n = a.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

// C = A * B
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw DimensionError("matmul inner dimensions differ");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out = c.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto brow = b.row(k);
      for (std::size_t j = 0; j < out.size(); ++j) out[j] += aik * brow[j];
    }
  }
  return c;
}

inline std::vector<double> matvec(const Matrix& a, std::span<const double> x) {
  if (a.cols() != x.size()) throw DimensionError("matvec dimension mismatch");
  std::vector<double> y(a.rows(), 0.0);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    y[r] = dot(a.row(r), x);
  }
  return y;
}

// ---------------------------------------------------------------------------
// Norm exponents

struct Infinity {
  friend bool operator==(Infinity, Infinity) { return true; }
};
inline constexpr Infinity infinity{};

// A norm exponent p in [1, inf]. Infinity is its own alternative rather than a
// sentinel float.
using NormExponent = std::variant<double, Infinity>;

inline bool is_infinite(const NormExponent& p) { return std::holds_alternative<Infinity>(p); }

inline void validate_exponent(const NormExponent& p, const char* name) {
  if (is_infinite(p)) return;
  const double v = std::get<double>(p);
  if (!(v >= 1.0) || !std::isfinite(v)) {
    throw ParameterError(std::string("norm exponent ") + name + " must be >= 1 or infinity");
  }
}

// Conjugate exponent 1/p + 1/q = 1.
inline NormExponent conjugate(const NormExponent& p) {
  validate_exponent(p, "p");
  if (is_infinite(p)) return 1.0;
  const double v = std::get<double>(p);
  if (v == 1.0) return infinity;
  return v / (v - 1.0);
}

// 1/p, with 1/inf = 0.
inline double reciprocal(const NormExponent& p) {
  return is_infinite(p) ? 0.0 : 1.0 / std::get<double>(p);
}

inline double vector_norm(std::span<const double> v, const NormExponent& p) {
  validate_exponent(p, "p");
  if (is_infinite(p)) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
  }
  const double e = std::get<double>(p);
  if (e == 1.0) {
    double s = 0.0;
    for (double x : v) s += std::abs(x);
    return s;
  }
  if (e == 2.0) {
    // Scaled to avoid overflow on large entries.
    double scale = 0.0;
    for (double x : v) scale = std::max(scale, std::abs(x));
    if (scale == 0.0) return 0.0;
    double s = 0.0;
    for (double x : v) {
      const double t = x / scale;
      s += t * t;
    }
    return scale * std::sqrt(s);
  }
  double scale = 0.0;
  for (double x : v) scale = std::max(scale, std::abs(x));
  if (scale == 0.0) return 0.0;
  double s = 0.0;
  for (double x : v) s += std::pow(std::abs(x) / scale, e);
  return scale * std::pow(s, 1.0 / e);
}

inline void require_nonempty(const Matrix& a, const char* op) {
  if (a.empty()) throw DimensionError(std::string(op) + ": empty matrix");
}

// ||A||_{p,q}: the q-norm of the vector of column p-norms.
inline double group_norm(const Matrix& a, const NormExponent& p, const NormExponent& q) {
  validate_exponent(p, "p");
  validate_exponent(q, "q");
  require_nonempty(a, "group_norm");
  std::vector<double> col_norms(a.cols());
  for (std::size_t c = 0; c < a.cols(); ++c) col_norms[c] = vector_norm(a.column(c), p);
  return vector_norm(col_norms, q);
}

inline double frobenius_norm(const Matrix& a) {
  require_nonempty(a, "frobenius_norm");
  return vector_norm(a.values(), 2.0);
}

// Entrywise p-norm of the flattened matrix.
inline double entrywise_norm(const Matrix& a, const NormExponent& p) {
  require_nonempty(a, "entrywise_norm");
  return vector_norm(a.values(), p);
}

// ||A^T||_{2,1}, i.e. the sum of the row 2-norms of A.
inline double norm_2_1_of_transpose(const Matrix& a) {
  require_nonempty(a, "norm_2_1_of_transpose");
  double s = 0.0;
  for (std::size_t r = 0; r < a.rows(); ++r) s += vector_norm(a.row(r), 2.0);
  return s;
}

// ---------------------------------------------------------------------------
// Spectral norm

struct PowerIterationOptions {
  double tolerance = 1e-12;
  std::size_t max_iterations = 5000;
  std::uint64_t seed = 0x9e3779b97f4a7c15ULL;
};

namespace detail {

// Largest eigenvalue of A^T A by power iteration from a seeded start vector.
// Returns false on non-convergence.
inline bool power_iteration(const Matrix& a, std::uint64_t seed, const PowerIterationOptions& opt,
                            double& lambda_out) {
  const std::size_t n = a.cols();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = unif(rng);
  double nv = vector_norm(v, 2.0);
  for (double& x : v) x /= nv;

  std::vector<double> av(a.rows());
  std::vector<double> u(n);
  double lambda_prev = -1.0;
  for (std::size_t it = 0; it < opt.max_iterations; ++it) {
    for (std::size_t r = 0; r < a.rows(); ++r) {
      av[r] = dot(a.row(r), v);
    }
    std::fill(u.begin(), u.end(), 0.0);
    for (std::size_t r = 0; r < a.rows(); ++r) {
      const double s = av[r];
      if (s == 0.0) continue;
      auto row = a.row(r);
      for (std::size_t c = 0; c < n; ++c) u[c] += s * row[c];
    }
    // Rayleigh quotient v^T A^T A v with ||v|| = 1.
    double lambda = 0.0;
    for (double x : av) lambda += x * x;
    const double nu = vector_norm(u, 2.0);
    if (nu == 0.0) {
      lambda_out = 0.0;
      return true;
    }
    for (std::size_t c = 0; c < n; ++c) v[c] = u[c] / nu;
    if (lambda_prev >= 0.0 && std::abs(lambda - lambda_prev) <= opt.tolerance * lambda) {
      lambda_out = lambda;
      return true;
    }
    lambda_prev = lambda;
  }
  lambda_out = lambda_prev;
  return false;
}

}  // namespace detail

// Largest singular value via power iteration on A^T A. Deterministic; one
// restart with a different seed on non-convergence, then DegeneracyError.
inline double spectral_norm(const Matrix& a, const PowerIterationOptions& opt = {}) {
  require_nonempty(a, "spectral_norm");
  double lambda = 0.0;
  if (!detail::power_iteration(a, opt.seed, opt, lambda) &&
      !detail::power_iteration(a, opt.seed ^ 0xd1b54a32d192ed03ULL, opt, lambda)) {
    throw DegeneracyError("spectral_norm: power iteration did not converge");
  }
  return std::sqrt(lambda);
}

// ---------------------------------------------------------------------------
// MAT1 binary format: "MAT1", u32 rows, u32 cols (little-endian), then
// rows*cols little-endian float64 values in row-major order.

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(b, 4);
}

inline void put_f64(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xffu);
  out.write(b, 8);
}

inline std::uint32_t get_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline double get_f64_le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | p[i];
  return std::bit_cast<double>(bits);
}

inline std::vector<unsigned char> read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace detail

inline void write_mat1(std::ostream& out, const Matrix& m) {
  out.write("MAT1", 4);
  detail::put_u32(out, static_cast<std::uint32_t>(m.rows()));
  detail::put_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (double v : m.values()) detail::put_f64(out, v);
}

inline void write_mat1(const std::string& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write file: " + path);
  write_mat1(out, m);
  if (!out) throw IoError("write failed: " + path);
}

inline Matrix parse_mat1(std::span<const unsigned char> bytes) {
  if (bytes.size() < 12) throw ParseError("MAT1 header truncated", bytes.size());
  if (std::memcmp(bytes.data(), "MAT1", 4) != 0) throw ParseError("bad MAT1 magic", 0);
  const std::uint32_t rows = detail::get_u32_le(bytes.data() + 4);
  const std::uint32_t cols = detail::get_u32_le(bytes.data() + 8);
  const std::size_t count = static_cast<std::size_t>(rows) * cols;
  if (bytes.size() < 12 + 8 * count) throw ParseError("MAT1 payload truncated", bytes.size());
  if (bytes.size() > 12 + 8 * count) throw ParseError("MAT1 trailing bytes", 12 + 8 * count);
  std::vector<double> data(count);
  for (std::size_t i = 0; i < count; ++i) data[i] = detail::get_f64_le(bytes.data() + 12 + 8 * i);
  return Matrix(rows, cols, std::move(data));
}

inline Matrix read_mat1(const std::string& path) {
  const auto bytes = detail::read_all(path);
  return parse_mat1(bytes);
}

}  // namespace margin_auditor
