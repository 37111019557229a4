#pragma once

// Labeled datasets: IDX / MAT1+LBL1 parsing, label and input randomization,
// and synthetic Gaussian blobs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "margin_auditor/errors.hpp"
#include "margin_auditor/linalg.hpp"

namespace margin_auditor {

// Examples are rows of x; labels are 1-based in [1, num_classes].
struct Dataset {
  Matrix x;
  std::vector<int> y;
  int num_classes = 0;

  Dataset() = default;
  Dataset(Matrix features, std::vector<int> labels, int k)
      : x(std::move(features)), y(std::move(labels)), num_classes(k) {
    validate();
  }

  std::size_t size() const noexcept { return y.size(); }
  std::size_t dim() const noexcept { return x.cols(); }

  void validate() const {
    if (y.empty()) throw ParameterError("dataset is empty");
    if (y.size() != x.rows()) {
      throw DimensionError("dataset has " + std::to_string(x.rows()) + " rows but " + std::to_string(y.size()) +
                           " labels");
    }
    if (num_classes < 1) throw ParameterError("dataset needs at least one class");
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y[i] < 1 || y[i] > num_classes) {
        throw ParameterError("label " + std::to_string(y[i]) + " at index " + std::to_string(i) +
                             " outside [1, " + std::to_string(num_classes) + "]");
      }
    }
  }

  // Rows [begin, end) as a new dataset.
  Dataset slice(std::size_t begin, std::size_t end) const {
    std::vector<double> data(x.data().begin() + begin * x.cols(), x.data().begin() + end * x.cols());
    return Dataset(Matrix(end - begin, x.cols(), std::move(data)),
                   std::vector<int>(y.begin() + begin, y.begin() + end), num_classes);
  }
};

// sqrt(sum_i ||x_i||_2^2)
inline double data_norm(const Matrix& x) {
  double s = 0.0;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double row = 0.0;
    for (double v : x.row(r)) row += v * v;
    s += row;
  }
  return std::sqrt(s);
}

// ---------------------------------------------------------------------------
// IDX (big-endian). Images: magic 0x00000803, n, rows, cols, n*rows*cols
// bytes. Labels: magic 0x00000801, n, n bytes.

namespace detail {

inline std::uint32_t get_u32_be(const unsigned char* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

inline void put_u32_be(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * (3 - i))) & 0xffu);
  out.write(b, 4);
}

}  // namespace detail

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

struct IdxImages {
  std::uint32_t count = 0;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  Matrix pixels;  // count x (rows*cols), scaled to [0, 1]
};

inline IdxImages parse_idx_images(std::span<const unsigned char> b) {
  if (b.size() < 4) throw ParseError("IDX images header truncated", b.size());
  if (detail::get_u32_be(b.data()) != kIdxImagesMagic) throw ParseError("bad IDX images magic", 0);
  if (b.size() < 16) throw ParseError("IDX images header truncated", b.size());
  IdxImages out;
  out.count = detail::get_u32_be(b.data() + 4);
  out.rows = detail::get_u32_be(b.data() + 8);
  out.cols = detail::get_u32_be(b.data() + 12);
  const std::size_t d = static_cast<std::size_t>(out.rows) * out.cols;
  const std::size_t need = 16 + static_cast<std::size_t>(out.count) * d;
  if (b.size() < need) throw ParseError("IDX images payload truncated", b.size());
  if (b.size() > need) throw ParseError("IDX images trailing bytes", need);
  std::vector<double> px(static_cast<std::size_t>(out.count) * d);
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<double>(b[16 + i]) / 255.0;
  out.pixels = Matrix(out.count, d, std::move(px));
  return out;
}

// Labels shifted to 1-based.
inline std::vector<int> parse_idx_labels(std::span<const unsigned char> b) {
  if (b.size() < 4) throw ParseError("IDX labels header truncated", b.size());
  if (detail::get_u32_be(b.data()) != kIdxLabelsMagic) throw ParseError("bad IDX labels magic", 0);
  if (b.size() < 8) throw ParseError("IDX labels header truncated", b.size());
  const std::uint32_t count = detail::get_u32_be(b.data() + 4);
  if (b.size() < 8 + static_cast<std::size_t>(count)) throw ParseError("IDX labels payload truncated", b.size());
  if (b.size() > 8 + static_cast<std::size_t>(count)) throw ParseError("IDX labels trailing bytes", 8 + count);
  std::vector<int> y(count);
  for (std::size_t i = 0; i < count; ++i) y[i] = static_cast<int>(b[8 + i]) + 1;
  return y;
}

inline int max_label(const std::vector<int>& y) { return y.empty() ? 0 : *std::max_element(y.begin(), y.end()); }

// num_classes = 0 infers k from the largest label present.
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path, int num_classes = 0) {
  const auto images = parse_idx_images(detail::read_all(images_path));
  auto labels = parse_idx_labels(detail::read_all(labels_path));
  if (labels.size() != images.count) {
    throw ParseError("IDX count mismatch: " + std::to_string(images.count) + " images vs " +
                         std::to_string(labels.size()) + " labels in " + labels_path,
                     4);
  }
  const int k = num_classes > 0 ? num_classes : max_label(labels);
  return Dataset(images.pixels, std::move(labels), k);
}

// Pixels are re-quantized as round(255 * x), clamped to [0, 255].
inline void write_idx(const std::string& images_path, const std::string& labels_path, const Dataset& ds,
                      std::uint32_t rows, std::uint32_t cols) {
  if (static_cast<std::size_t>(rows) * cols != ds.dim()) throw DimensionError("IDX image shape does not match dataset dim");
  std::ofstream img(images_path, std::ios::binary);
  std::ofstream lbl(labels_path, std::ios::binary);
  if (!img) throw IoError("cannot write file: " + images_path);
  if (!lbl) throw IoError("cannot write file: " + labels_path);
  detail::put_u32_be(img, kIdxImagesMagic);
  detail::put_u32_be(img, static_cast<std::uint32_t>(ds.size()));
  detail::put_u32_be(img, rows);
  detail::put_u32_be(img, cols);
  for (double v : ds.x.values()) {
    const double q = std::clamp(std::round(v * 255.0), 0.0, 255.0);
    img.put(static_cast<char>(static_cast<unsigned char>(q)));
  }
  detail::put_u32_be(lbl, kIdxLabelsMagic);
  detail::put_u32_be(lbl, static_cast<std::uint32_t>(ds.size()));
  for (int label : ds.y) {
    if (label < 1 || label > 256) throw ParameterError("label does not fit an IDX byte");
    lbl.put(static_cast<char>(static_cast<unsigned char>(label - 1)));
  }
}

// ---------------------------------------------------------------------------
// LBL1: "LBL1", u32 count, u32 k, count x u32 labels (little-endian).

inline void write_lbl1(const std::string& path, const std::vector<int>& y, int k) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write file: " + path);
  out.write("LBL1", 4);
  detail::put_u32(out, static_cast<std::uint32_t>(y.size()));
  detail::put_u32(out, static_cast<std::uint32_t>(k));
  for (int v : y) detail::put_u32(out, static_cast<std::uint32_t>(v));
}

struct Labels {
  std::vector<int> y;
  int num_classes = 0;
};

inline Labels parse_lbl1(std::span<const unsigned char> b) {
  if (b.size() < 12) throw ParseError("LBL1 header truncated", b.size());
  if (std::memcmp(b.data(), "LBL1", 4) != 0) throw ParseError("bad LBL1 magic", 0);
  const std::uint32_t count = detail::get_u32_le(b.data() + 4);
  const std::uint32_t k = detail::get_u32_le(b.data() + 8);
  const std::size_t need = 12 + 4 * static_cast<std::size_t>(count);
  if (b.size() < need) throw ParseError("LBL1 payload truncated", b.size());
  if (b.size() > need) throw ParseError("LBL1 trailing bytes", need);
  Labels out;
  out.num_classes = static_cast<int>(k);
  out.y.resize(count);
  for (std::size_t i = 0; i < count; ++i) out.y[i] = static_cast<int>(detail::get_u32_le(b.data() + 12 + 4 * i));
  return out;
}

inline void save_dataset(const std::string& features_path, const std::string& labels_path, const Dataset& ds) {
  write_mat1(features_path, ds.x);
  write_lbl1(labels_path, ds.y, ds.num_classes);
}

// Loads either an IDX pair or a MAT1 + LBL1 pair, detected by magic bytes.
inline Dataset load_dataset(const std::string& features_path, const std::string& labels_path, int num_classes = 0) {
  const auto fb = detail::read_all(features_path);
  const auto lb = detail::read_all(labels_path);
  Matrix x;
  if (fb.size() >= 4 && std::memcmp(fb.data(), "MAT1", 4) == 0) {
    x = parse_mat1(fb);
  } else {
    x = parse_idx_images(fb).pixels;
  }
  Labels labels;
  if (lb.size() >= 4 && std::memcmp(lb.data(), "LBL1", 4) == 0) {
    labels = parse_lbl1(lb);
  } else {
    labels.y = parse_idx_labels(lb);
    labels.num_classes = max_label(labels.y);
  }
  if (labels.y.size() != x.rows()) {
    throw ParseError("count mismatch: " + std::to_string(x.rows()) + " examples vs " +
                         std::to_string(labels.y.size()) + " labels in " + labels_path,
                     4);
  }
  const int k = num_classes > 0 ? num_classes : labels.num_classes;
  return Dataset(std::move(x), std::move(labels.y), k);
}

// ---------------------------------------------------------------------------
// Randomization and synthetic data

inline Dataset randomize_labels(const Dataset& ds, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(1, ds.num_classes);
  Dataset out = ds;
  for (int& label : out.y) label = pick(rng);
  return out;
}

namespace detail {

// Lower Cholesky factor of a symmetric positive definite matrix.
inline Matrix cholesky(const Matrix& s) {
  const std::size_t n = s.rows();
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double diag = s(j, j);
    auto lj = l.row(j);
    for (std::size_t k = 0; k < j; ++k) diag -= lj[k] * lj[k];
    if (!(diag > 0.0)) throw DegeneracyError("covariance is not positive definite");
    const double ljj = std::sqrt(diag);
    lj[j] = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      auto li = l.row(i);
      double v = s(i, j);
      for (std::size_t k = 0; k < j; ++k) v -= li[k] * lj[k];
      li[j] = v / ljj;
    }
  }
  return l;
}

}  // namespace detail

// Replaces every input row by a draw from N(mean, cov + lambda I) with the
// empirical mean and covariance, lambda = 1e-6 * trace(cov) / d.
inline Dataset randomize_inputs_gaussian(const Dataset& ds, std::uint64_t seed) {
  const std::size_t n = ds.size();
  const std::size_t d = ds.dim();
  if (n < 2) throw DegeneracyError("randomize_inputs_gaussian needs at least two examples");

  std::vector<double> mean(d, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    auto row = ds.x.row(r);
    for (std::size_t c = 0; c < d; ++c) mean[c] += row[c];
  }
  for (double& m : mean) m /= static_cast<double>(n);

  Matrix cov(d, d);
  std::vector<double> centered(d);
  for (std::size_t r = 0; r < n; ++r) {
    auto row = ds.x.row(r);
    for (std::size_t c = 0; c < d; ++c) centered[c] = row[c] - mean[c];
    for (std::size_t i = 0; i < d; ++i) {
      const double ci = centered[i];
      if (ci == 0.0) continue;
      auto cr = cov.row(i);
      for (std::size_t j = 0; j <= i; ++j) cr[j] += ci * centered[j];
    }
  }
  double trace = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      cov(i, j) /= static_cast<double>(n - 1);
      cov(j, i) = cov(i, j);
    }
    trace += cov(i, i);
  }
  if (!(trace > 0.0)) throw DegeneracyError("inputs have zero variance");
  const double shrink = 1e-6 * trace / static_cast<double>(d);
  for (std::size_t i = 0; i < d; ++i) cov(i, i) += shrink;
  const Matrix l = detail::cholesky(cov);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix x(n, d);
  std::vector<double> z(d);
  for (std::size_t r = 0; r < n; ++r) {
    for (double& v : z) v = normal(rng);
    auto out = x.row(r);
    for (std::size_t i = 0; i < d; ++i) {
      auto li = l.row(i);
      double acc = mean[i];
      for (std::size_t k = 0; k <= i; ++k) acc += li[k] * z[k];
      out[i] = acc;
    }
  }
  return Dataset(std::move(x), ds.y, ds.num_classes);
}

// k unit-covariance Gaussian clusters whose means have norm `separation`,
// labels assigned round-robin (balanced). Means are orthogonal when k <= d.
inline Dataset synth_blobs(std::size_t n, std::size_t d, int k, double separation, std::uint64_t seed) {
  if (k < 1 || d < 1) throw ParameterError("synth_blobs needs k >= 1 and d >= 1");
  if (n < static_cast<std::size_t>(k)) throw ParameterError("synth_blobs needs n >= k");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<std::vector<double>> means;
  for (int c = 0; c < k; ++c) {
    std::vector<double> u(d);
    double norm = 0.0;
    while (norm < 1e-8) {
      for (double& v : u) v = normal(rng);
      if (static_cast<std::size_t>(c) < d) {
        for (const auto& m : means) {
          double dot = 0.0;
          for (std::size_t i = 0; i < d; ++i) dot += m[i] * u[i];
          for (std::size_t i = 0; i < d; ++i) u[i] -= dot * m[i];
        }
      }
      norm = vector_norm(u, 2.0);
    }
    for (double& v : u) v /= norm;
    means.push_back(std::move(u));
  }

  Matrix x(n, d);
  std::vector<int> y(n);
  for (std::size_t r = 0; r < n; ++r) {
    const int c = static_cast<int>(r % static_cast<std::size_t>(k));
    y[r] = c + 1;
    auto row = x.row(r);
    for (std::size_t i = 0; i < d; ++i) row[i] = separation * means[c][i] + normal(rng);
  }
  return Dataset(std::move(x), std::move(y), k);
}

}  // namespace margin_auditor
