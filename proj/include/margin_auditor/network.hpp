#pragma once

// Feedforward networks x -> s_L(A_L s_{L-1}(... s_1(A_1 x))) without biases,
// with per-layer reference matrices M_i used by the complexity measures.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "margin_auditor/errors.hpp"
#include "margin_auditor/linalg.hpp"
#include "margin_auditor/parallel.hpp"

namespace margin_auditor {

struct ReLU {};
struct IdentityMap {};

// Output coordinate i is the max of the input over groups[i].
struct MaxPool {
  std::vector<std::vector<std::size_t>> groups;
};

class Nonlinearity {
 public:
  using Kind = std::variant<ReLU, IdentityMap, MaxPool>;

  static Nonlinearity relu() { return Nonlinearity(ReLU{}); }
  static Nonlinearity identity() { return Nonlinearity(IdentityMap{}); }

  // Groups must be nonempty; coverage of the input range is checked when the
  // nonlinearity is attached to a layer.
  static Nonlinearity max_pool(std::vector<std::vector<std::size_t>> groups) {
    if (groups.empty()) throw ParameterError("max_pool: no groups");
    for (const auto& g : groups)
      if (g.empty()) throw ParameterError("max_pool: empty group");
    return Nonlinearity(MaxPool{std::move(groups)});
  }

  const Kind& kind() const noexcept { return kind_; }
  bool is_relu() const noexcept { return std::holds_alternative<ReLU>(kind_); }
  bool is_identity() const noexcept { return std::holds_alternative<IdentityMap>(kind_); }
  bool is_max_pool() const noexcept { return std::holds_alternative<MaxPool>(kind_); }

  std::string name() const {
    if (is_relu()) return "relu";
    if (is_identity()) return "identity";
    return "maxpool";
  }

  std::size_t output_dim(std::size_t input_dim) const {
    if (const auto* mp = std::get_if<MaxPool>(&kind_)) return mp->groups.size();
    return input_dim;
  }

  // Max number of groups containing any single input coordinate (1 for
  // coordinate-wise maps and for partitions).
  std::size_t multiplicity() const {
    const auto* mp = std::get_if<MaxPool>(&kind_);
    if (!mp) return 1;
    std::size_t max_index = 0;
    for (const auto& g : mp->groups)
      for (std::size_t j : g) max_index = std::max(max_index, j);
    std::vector<std::size_t> counts(max_index + 1, 0);
    for (const auto& g : mp->groups)
      for (std::size_t j : g) ++counts[j];
    return *std::max_element(counts.begin(), counts.end());
  }

  // Throws unless the groups index exactly the coordinates [0, input_dim).
  void validate_for(std::size_t input_dim) const {
    const auto* mp = std::get_if<MaxPool>(&kind_);
    if (!mp) return;
    std::vector<bool> seen(input_dim, false);
    for (const auto& g : mp->groups) {
      for (std::size_t j : g) {
        if (j >= input_dim) {
          throw DimensionError("max_pool index " + std::to_string(j) + " outside layer output of size " +
                               std::to_string(input_dim));
        }
        seen[j] = true;
      }
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
      throw DimensionError("max_pool groups do not cover the layer output");
    }
  }

  void apply(std::span<const double> in, std::span<double> out) const {
    std::visit(
        [&](const auto& k) {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, ReLU>) {
            for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
          } else if constexpr (std::is_same_v<K, IdentityMap>) {
            std::copy(in.begin(), in.end(), out.begin());
          } else {
            for (std::size_t i = 0; i < k.groups.size(); ++i) {
              double m = -std::numeric_limits<double>::infinity();
              for (std::size_t j : k.groups[i]) m = std::max(m, in[j]);
              out[i] = m;
            }
          }
        },
        kind_);
  }

  std::vector<double> apply(std::span<const double> in) const {
    std::vector<double> out(output_dim(in.size()));
    apply(in, out);
    return out;
  }

 private:
  explicit Nonlinearity(Kind k) : kind_(std::move(k)) {}
  Kind kind_;
};

// Lipschitz constant w.r.t. the l_p norm: 1 for ReLU and identity, m^{1/p}
// for max-pooling where m is the coordinate multiplicity.
inline double lipschitz_constant(const Nonlinearity& nl, const NormExponent& p) {
  validate_exponent(p, "p");
  if (!nl.is_max_pool()) return 1.0;
  return std::pow(static_cast<double>(nl.multiplicity()), reciprocal(p));
}

struct Layer {
  Matrix weight;     // d_i x d_{i-1}
  Nonlinearity nonlinearity;
  Matrix reference;  // same shape as weight

  Layer(Matrix w, Nonlinearity nl) : Layer(std::move(w), std::move(nl), Matrix{}) {}

  Layer(Matrix w, Nonlinearity nl, Matrix ref)
      : weight(std::move(w)), nonlinearity(std::move(nl)), reference(std::move(ref)) {
    if (weight.empty()) throw DimensionError("layer weight is empty");
    if (reference.empty()) reference = Matrix(weight.rows(), weight.cols());
    if (!reference.same_shape(weight)) throw DimensionError("reference shape differs from weight shape");
    nonlinearity.validate_for(weight.rows());
  }

  std::size_t input_dim() const noexcept { return weight.cols(); }
  std::size_t output_dim() const { return nonlinearity.output_dim(weight.rows()); }
  double rho() const { return lipschitz_constant(nonlinearity, 2.0); }
};

inline Matrix identity_reference(const Matrix& weight) {
  if (weight.rows() != weight.cols()) throw DimensionError("identity reference needs a square layer");
  return Matrix::identity(weight.rows());
}

class Network {
 public:
  explicit Network(std::vector<Layer> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw ParameterError("network needs at least one layer");
    width_ = layers_.front().input_dim();
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      if (i > 0 && layers_[i].input_dim() != layers_[i - 1].output_dim()) {
        throw DimensionError("layer " + std::to_string(i + 1) + " expects input dim " +
                             std::to_string(layers_[i].input_dim()) + " but previous layer emits " +
                             std::to_string(layers_[i - 1].output_dim()));
      }
      width_ = std::max({width_, layers_[i].weight.rows(), layers_[i].output_dim()});
    }
  }

  const std::vector<Layer>& layers() const noexcept { return layers_; }
  std::vector<Layer>& mutable_layers() noexcept { return layers_; }
  std::size_t depth() const noexcept { return layers_.size(); }
  std::size_t input_dim() const noexcept { return layers_.front().input_dim(); }
  std::size_t output_dim() const { return layers_.back().output_dim(); }
  // W = max{d, d_1, ..., d_L}
  std::size_t width() const noexcept { return width_; }

 private:
  std::vector<Layer> layers_;
  std::size_t width_ = 0;
};

namespace detail {

inline Matrix apply_layer(const Layer& layer, const Matrix& x) {
  const Matrix& a = layer.weight;
  Matrix out(x.rows(), layer.output_dim());
  parallel_for_rows(x.rows(), [&](std::size_t begin, std::size_t end) {
    std::vector<double> pre(a.rows());
    for (std::size_t r = begin; r < end; ++r) {
      auto xr = x.row(r);
      for (std::size_t o = 0; o < a.rows(); ++o) {
        pre[o] = dot(a.row(o), xr);
      }
      layer.nonlinearity.apply(pre, out.row(r));
    }
  });
  return out;
}

inline void check_input(const Network& net, const Matrix& x) {
  if (x.cols() != net.input_dim()) {
    throw DimensionError("data has " + std::to_string(x.cols()) + " columns but network expects " +
                         std::to_string(net.input_dim()));
  }
}

}  // namespace detail

// Row i of the result is F_A(x_i).
inline Matrix forward(const Network& net, const Matrix& x) {
  detail::check_input(net, x);
  Matrix h = x;
  for (const auto& layer : net.layers()) h = detail::apply_layer(layer, h);
  return h;
}

// (X_0, ..., X_L) with X_0 = X and X_i the output of layer i, examples as rows.
inline std::vector<Matrix> forward_images(const Network& net, const Matrix& x) {
  detail::check_input(net, x);
  std::vector<Matrix> images{x};
  images.reserve(net.depth() + 1);
  for (const auto& layer : net.layers()) images.push_back(detail::apply_layer(layer, images.back()));
  return images;
}

// ---------------------------------------------------------------------------
// Manifest: {"layers": [{"weight": "w1.mat", "reference": "zero" | "identity" |
// "<path>", "nonlinearity": {"type": "relu" | "identity" | "maxpool",
// "groups": [[...], ...]}}]}. Paths are relative to the manifest file.

inline Nonlinearity nonlinearity_from_json(const nlohmann::json& j) {
  std::string type;
  if (j.is_string()) {
    type = j.get<std::string>();
  } else if (j.is_object() && j.contains("type")) {
    type = j.at("type").get<std::string>();
  } else {
    throw ParseError("nonlinearity must be a string or an object with a \"type\"", 0);
  }
  if (type == "relu") return Nonlinearity::relu();
  if (type == "identity") return Nonlinearity::identity();
  if (type == "maxpool") {
    if (!j.is_object() || !j.contains("groups")) throw ParseError("maxpool needs \"groups\"", 0);
    return Nonlinearity::max_pool(j.at("groups").get<std::vector<std::vector<std::size_t>>>());
  }
  throw ParseError("unknown nonlinearity \"" + type + "\"", 0);
}

inline nlohmann::json nonlinearity_to_json(const Nonlinearity& nl) {
  nlohmann::json j{{"type", nl.name()}};
  if (const auto* mp = std::get_if<MaxPool>(&nl.kind())) j["groups"] = mp->groups;
  return j;
}

inline Network load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open file: " + path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("manifest is not valid JSON: ") + e.what(), e.byte);
  }
  const auto base = std::filesystem::path(path).parent_path();
  auto resolve = [&](const std::string& rel) { return (base / rel).string(); };

  if (!doc.contains("layers") || !doc.at("layers").is_array()) throw ParseError("manifest needs a \"layers\" array", 0);
  std::vector<Layer> layers;
  try {
    for (const auto& lj : doc.at("layers")) {
      Matrix w = read_mat1(resolve(lj.at("weight").get<std::string>()));
      Nonlinearity nl = lj.contains("nonlinearity") ? nonlinearity_from_json(lj.at("nonlinearity"))
                                                    : Nonlinearity::relu();
      const std::string ref = lj.value("reference", std::string("zero"));
      Matrix m;
      if (ref == "zero") {
        m = Matrix(w.rows(), w.cols());
      } else if (ref == "identity") {
        m = identity_reference(w);
      } else {
        m = read_mat1(resolve(ref));
      }
      layers.emplace_back(std::move(w), std::move(nl), std::move(m));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed manifest: ") + e.what(), 0);
  }
  return Network(std::move(layers));
}

// Writes the manifest plus one MAT1 file per weight (and per nonzero
// reference) next to it.
inline void save_manifest(const std::string& path, const Network& net) {
  const auto base = std::filesystem::path(path).parent_path();
  const auto stem = std::filesystem::path(path).stem().string();
  nlohmann::ordered_json doc;
  doc["layers"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < net.depth(); ++i) {
    const auto& layer = net.layers()[i];
    const std::string wname = stem + "_w" + std::to_string(i + 1) + ".mat";
    write_mat1((base / wname).string(), layer.weight);
    nlohmann::ordered_json lj;
    lj["weight"] = wname;
    bool zero_ref = std::all_of(layer.reference.values().begin(), layer.reference.values().end(),
                                [](double v) { return v == 0.0; });
    if (zero_ref) {
      lj["reference"] = "zero";
    } else {
      const std::string rname = stem + "_m" + std::to_string(i + 1) + ".mat";
      write_mat1((base / rname).string(), layer.reference);
      lj["reference"] = rname;
    }
    lj["nonlinearity"] = nonlinearity_to_json(layer.nonlinearity);
    doc["layers"].push_back(std::move(lj));
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write file: " + path);
  out << doc.dump(2) << '\n';
}

}  // namespace margin_auditor
