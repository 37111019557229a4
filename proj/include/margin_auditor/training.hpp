#pragma once

// Deterministic minibatch SGD for dense ReLU classifiers (softmax
// cross-entropy, optional l2 penalty) with per-epoch snapshots.

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "margin_auditor/complexity.hpp"
#include "margin_auditor/data.hpp"
#include "margin_auditor/errors.hpp"
#include "margin_auditor/linalg.hpp"
#include "margin_auditor/margins.hpp"
#include "margin_auditor/network.hpp"
#include "margin_auditor/random.hpp"

namespace margin_auditor {

enum class LabelMode { true_labels, random_labels };
enum class InputMode { true_inputs, gaussian_moment_matched };

struct TrainConfig {
  std::vector<std::size_t> layer_widths;  // input dim, hidden widths..., class count
  double learning_rate = 0.01;
  std::size_t epochs = 1;
  std::size_t batch_size = 32;
  std::uint64_t seed = 42;
  double l2_coefficient = 0.0;
  LabelMode label_mode = LabelMode::true_labels;
  InputMode input_mode = InputMode::true_inputs;

  void validate() const {
    if (layer_widths.size() < 2) throw ParameterError("layer_widths needs an input and an output width");
    for (std::size_t w : layer_widths)
      if (w == 0) throw ParameterError("layer widths must be positive");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ParameterError("learning_rate must be positive");
    if (epochs < 1) throw ParameterError("epochs must be at least 1");
    if (batch_size < 1) throw ParameterError("batch_size must be at least 1");
    if (!(l2_coefficient >= 0.0) || !std::isfinite(l2_coefficient))
      throw ParameterError("l2_coefficient must be nonnegative");
  }
};

inline std::string to_string(LabelMode m) { return m == LabelMode::true_labels ? "true_labels" : "random_labels"; }
inline std::string to_string(InputMode m) {
  return m == InputMode::true_inputs ? "true_inputs" : "gaussian_moment_matched";
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.layer_widths = j.at("layer_widths").get<std::vector<std::size_t>>();
    c.epochs = j.at("epochs").get<std::size_t>();
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.l2_coefficient = j.value("l2_coefficient", c.l2_coefficient);
    const std::string lm = j.value("label_mode", std::string("true_labels"));
    if (lm == "true_labels") c.label_mode = LabelMode::true_labels;
    else if (lm == "random_labels") c.label_mode = LabelMode::random_labels;
    else throw ParameterError("unknown label_mode: " + lm);
    const std::string im = j.value("input_mode", std::string("true_inputs"));
    if (im == "true_inputs") c.input_mode = InputMode::true_inputs;
    else if (im == "gaussian_moment_matched") c.input_mode = InputMode::gaussian_moment_matched;
    else throw ParameterError("unknown input_mode: " + im);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("training config: ") + e.what(), 0);
  }
  c.validate();
  return c;
}

inline TrainConfig load_train_config(const std::string& path) {
  const auto bytes = detail::read_all(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("training config " + path + ": " + e.what(), e.byte);
  }
  return train_config_from_json(j);
}

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
  return nlohmann::json{{"layer_widths", c.layer_widths},     {"learning_rate", c.learning_rate},
                        {"epochs", c.epochs},                 {"batch_size", c.batch_size},
                        {"seed", c.seed},                     {"l2_coefficient", c.l2_coefficient},
                        {"label_mode", to_string(c.label_mode)}, {"input_mode", to_string(c.input_mode)}};
}

struct EpochSnapshot {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;  // mean minibatch objective over the epoch
  double train_error = 0.0;
  double test_error = 0.0;
  double excess_risk = 0.0;  // test_error - train_error
  double product_spectral_norms = 0.0;
  double spectral_complexity = 0.0;
  DistributionDigest margins;  // normalized training margins
};

// Glorot-uniform weights, zero references, ReLU on hidden layers and a linear
// output layer.
inline Network init_network(const TrainConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(derive_seed(cfg.seed, 0x11));
  std::vector<Layer> layers;
  const std::size_t depth = cfg.layer_widths.size() - 1;
  for (std::size_t l = 0; l < depth; ++l) {
    const std::size_t fan_in = cfg.layer_widths[l];
    const std::size_t fan_out = cfg.layer_widths[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Matrix w(fan_out, fan_in);
    for (double& v : w.values()) v = limit * (2.0 * uniform01(rng) - 1.0);
    layers.emplace_back(std::move(w), l + 1 == depth ? Nonlinearity::identity() : Nonlinearity::relu());
  }
  return Network(std::move(layers));
}

namespace detail {

// Weights stored transposed (fan_in x fan_out) so that both the forward pass
// and the weight gradient are row-wise axpy updates that skip zero inputs.
struct DenseStack {
  std::vector<Matrix> wt;
  std::vector<bool> relu;

  static DenseStack from(const Network& net) {
    DenseStack s;
    for (const auto& layer : net.layers()) {
      if (layer.nonlinearity.is_max_pool()) throw ParameterError("trainer supports ReLU and identity layers only");
      bool zero_ref = true;
      for (double v : layer.reference.values()) zero_ref = zero_ref && v == 0.0;
      if (!zero_ref) throw ParameterError("trainer expects zero reference matrices");
      s.wt.push_back(layer.weight.transpose());
      s.relu.push_back(layer.nonlinearity.is_relu());
    }
    return s;
  }

  Network to_network() const {
    std::vector<Layer> layers;
    for (std::size_t l = 0; l < wt.size(); ++l)
      layers.emplace_back(wt[l].transpose(), relu[l] ? Nonlinearity::relu() : Nonlinearity::identity());
    return Network(std::move(layers));
  }

  bool finite() const {
    for (const auto& m : wt)
      for (double v : m.values())
        if (!std::isfinite(v)) return false;
    return true;
  }
};

struct Workspace {
  std::vector<Matrix> acts;    // acts[0] = batch inputs, acts[l] = output of layer l
  std::vector<Matrix> deltas;  // gradient of the loss w.r.t. pre-activations of layer l
  std::vector<Matrix> grads;   // same shapes as DenseStack::wt
};

// Mean cross-entropy over the batch plus lambda * sum ||W||_F^2; gradients of
// that objective land in ws.grads.
inline double batch_objective(const DenseStack& s, const Matrix& x, std::span<const std::size_t> idx,
                              std::span<const int> labels, double l2, Workspace& ws) {
  const std::size_t L = s.wt.size();
  const std::size_t B = idx.size();
  ws.acts.resize(L + 1);
  ws.deltas.resize(L);
  ws.grads.resize(L);

  ws.acts[0] = Matrix(B, x.cols());
  for (std::size_t b = 0; b < B; ++b) {
    auto src = x.row(idx[b]);
    std::copy(src.begin(), src.end(), ws.acts[0].row(b).begin());
  }
  for (std::size_t l = 0; l < L; ++l) {
    const Matrix& w = s.wt[l];
    Matrix& out = ws.acts[l + 1];
    out = Matrix(B, w.cols());
    for (std::size_t b = 0; b < B; ++b) {
      auto in = ws.acts[l].row(b);
      auto o = out.row(b);
      for (std::size_t c = 0; c < in.size(); ++c) {
        const double v = in[c];
        if (v == 0.0) continue;
        auto wr = w.row(c);
        for (std::size_t j = 0; j < o.size(); ++j) o[j] += v * wr[j];
      }
      if (s.relu[l])
        for (double& v : o) v = v > 0.0 ? v : 0.0;
    }
  }

  // Softmax cross-entropy on the logits.
  const Matrix& logits = ws.acts[L];
  Matrix& top = ws.deltas[L - 1];
  top = Matrix(B, logits.cols());
  double loss = 0.0;
  const double inv_b = 1.0 / static_cast<double>(B);
  for (std::size_t b = 0; b < B; ++b) {
    auto z = logits.row(b);
    const double zmax = *std::max_element(z.begin(), z.end());
    double denom = 0.0;
    for (double v : z) denom += std::exp(v - zmax);
    const std::size_t target = static_cast<std::size_t>(labels[idx[b]] - 1);
    loss += std::log(denom) - (z[target] - zmax);
    auto d = top.row(b);
    for (std::size_t j = 0; j < z.size(); ++j) d[j] = std::exp(z[j] - zmax) / denom * inv_b;
    d[target] -= inv_b;
  }
  loss *= inv_b;

  for (std::size_t l = L; l-- > 0;) {
    const Matrix& in = ws.acts[l];
    const Matrix& delta = ws.deltas[l];
    Matrix& g = ws.grads[l];
    g = Matrix(s.wt[l].rows(), s.wt[l].cols());
    for (std::size_t b = 0; b < B; ++b) {
      auto a = in.row(b);
      auto d = delta.row(b);
      for (std::size_t c = 0; c < a.size(); ++c) {
        const double v = a[c];
        if (v == 0.0) continue;
        auto gr = g.row(c);
        for (std::size_t j = 0; j < d.size(); ++j) gr[j] += v * d[j];
      }
    }
    if (l > 0) {
      Matrix& prev = ws.deltas[l - 1];
      prev = Matrix(B, s.wt[l].rows());
      for (std::size_t b = 0; b < B; ++b) {
        auto a = in.row(b);
        auto d = delta.row(b);
        auto p = prev.row(b);
        for (std::size_t c = 0; c < a.size(); ++c) {
          if (s.relu[l - 1] && a[c] <= 0.0) continue;
          p[c] = dot(s.wt[l].row(c), d);
        }
      }
    }
  }

  if (l2 > 0.0) {
    for (std::size_t l = 0; l < L; ++l) {
      auto w = s.wt[l].values();
      auto g = ws.grads[l].values();
      double sq = 0.0;
      for (std::size_t i = 0; i < w.size(); ++i) {
        sq += w[i] * w[i];
        g[i] += 2.0 * l2 * w[i];
      }
      loss += l2 * sq;
    }
  }
  return loss;
}

}  // namespace detail

struct LossAndGradients {
  double loss = 0.0;
  std::vector<Matrix> gradients;  // one per layer, shaped like the weight
};

// Objective and gradients of the training loss on all rows of x.
inline LossAndGradients loss_and_gradients(const Network& net, const Matrix& x, std::span<const int> labels,
                                           double l2_coefficient = 0.0) {
  if (x.rows() != labels.size()) throw DimensionError("loss_and_gradients: one label per row required");
  if (x.rows() == 0) throw ParameterError("loss_and_gradients: empty batch");
  detail::check_input(net, x);
  const int k = static_cast<int>(net.output_dim());
  for (int y : labels)
    if (y < 1 || y > k) throw ParameterError("loss_and_gradients: label out of range");
  const auto stack = detail::DenseStack::from(net);
  std::vector<std::size_t> idx(x.rows());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  detail::Workspace ws;
  LossAndGradients out;
  out.loss = detail::batch_objective(stack, x, idx, labels, l2_coefficient, ws);
  for (const auto& g : ws.grads) out.gradients.push_back(g.transpose());
  return out;
}

// One SGD step on the given rows; returns the objective before the step.
inline double sgd_step(Network& net, const Matrix& x, std::span<const int> labels, double learning_rate,
                       double l2_coefficient = 0.0) {
  auto lg = loss_and_gradients(net, x, labels, l2_coefficient);
  auto& layers = net.mutable_layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto w = layers[l].weight.values();
    auto g = lg.gradients[l].values();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= learning_rate * g[i];
  }
  return lg.loss;
}

// Per-epoch statistics of a trained network.
inline EpochSnapshot evaluate_snapshot(const Network& net, const Dataset& train_ds, const Dataset& test_ds,
                                       std::size_t epoch, MarginDistribution* margins_out = nullptr) {
  EpochSnapshot snap;
  snap.epoch = epoch;
  const Matrix train_out = forward(net, train_ds.x);
  snap.train_error = error_rate_from_outputs(train_out, train_ds.y);
  snap.test_error = error_rate(net, test_ds);
  snap.excess_risk = snap.test_error - snap.train_error;
  const auto norms = layer_norms(net);
  snap.product_spectral_norms = product_spectral_norms(norms);
  snap.spectral_complexity = spectral_complexity(norms);
  auto md = margin_distribution_from_outputs(train_out, train_ds.y, snap.spectral_complexity, data_norm(train_ds.x));
  snap.margins = digest(md.normalized);
  if (margins_out != nullptr) *margins_out = std::move(md);
  return snap;
}

// Receives each snapshot with the network and normalized margins it came
// from; returning false stops training after that epoch.
using SnapshotHook = std::function<bool(const EpochSnapshot&, const Network&, const MarginDistribution&)>;

struct TrainResult {
  Network network;
  std::vector<EpochSnapshot> snapshots;
};

// Training set after the configured label / input randomization.
inline Dataset prepare_training_set(const TrainConfig& cfg, const Dataset& train_ds) {
  Dataset ds = train_ds;
  if (cfg.input_mode == InputMode::gaussian_moment_matched)
    ds = randomize_inputs_gaussian(ds, derive_seed(cfg.seed, 0x22));
  if (cfg.label_mode == LabelMode::random_labels) ds = randomize_labels(ds, derive_seed(cfg.seed, 0x33));
  return ds;
}

inline TrainResult train(const TrainConfig& cfg, const Dataset& train_ds, const Dataset& test_ds,
                         const SnapshotHook& hook = {}) {
  cfg.validate();
  train_ds.validate();
  test_ds.validate();
  if (cfg.layer_widths.front() != train_ds.dim() || test_ds.dim() != train_ds.dim())
    throw DimensionError("input width does not match the data dimension");
  if (cfg.layer_widths.back() != static_cast<std::size_t>(train_ds.num_classes) ||
      test_ds.num_classes != train_ds.num_classes)
    throw DimensionError("output width does not match the class count");

  const Dataset ds = prepare_training_set(cfg, train_ds);
  Network net = init_network(cfg);
  auto stack = detail::DenseStack::from(net);
  detail::Workspace ws;
  const std::size_t n = ds.size();
  std::vector<std::size_t> order(n);

  TrainResult result{net, {}};
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(derive_seed(cfg.seed, 0x44, epoch));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < n; begin += cfg.batch_size) {
      const std::size_t end = std::min(n, begin + cfg.batch_size);
      const std::span<const std::size_t> idx(order.data() + begin, end - begin);
      const double loss = detail::batch_objective(stack, ds.x, idx, ds.y, cfg.l2_coefficient, ws);
      if (!std::isfinite(loss)) throw DivergenceError("training loss is not finite", epoch);
      for (std::size_t l = 0; l < stack.wt.size(); ++l) {
        auto w = stack.wt[l].values();
        auto g = ws.grads[l].values();
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= cfg.learning_rate * g[i];
      }
      loss_sum += loss;
      ++batches;
    }
    if (!stack.finite()) throw DivergenceError("weights are not finite", epoch);

    result.network = stack.to_network();
    MarginDistribution md;
    EpochSnapshot snap;
    try {
      snap = evaluate_snapshot(result.network, ds, test_ds, epoch, &md);
    } catch (const DegeneracyError& e) {
      throw DivergenceError(std::string("network statistics broke down: ") + e.what(), epoch);
    }
    snap.train_loss = loss_sum / static_cast<double>(batches);
    result.snapshots.push_back(snap);
    if (hook && !hook(snap, result.network, md)) break;
  }
  return result;
}

}  // namespace margin_auditor
