// margin_auditor: command-line driver for spectral complexity analysis,
// margin distributions, training runs and the constructive demos.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "margin_auditor.hpp"

namespace ma = margin_auditor;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::optional<double> gamma;
  double delta = 0.01;
  std::uint64_t seed = 42;
  std::string out = "./out";
};

void print_json(const ma::ordered_json& j) { std::cout << j.dump(2) << '\n'; }

std::string out_path(const Common& c, const std::string& name) { return (fs::path(c.out) / name).string(); }

ma::Matrix gaussian_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  ma::Matrix m(rows, cols);
  for (double& v : m.values()) v = normal(rng);
  return m;
}

std::vector<double> parse_vector(const std::string& text) {
  std::vector<double> v;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const std::string field = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    try {
      std::size_t used = 0;
      v.push_back(std::stod(field, &used));
      if (used != field.size()) throw std::invalid_argument(field);
    } catch (const std::exception&) {
      throw ma::ParameterError("not a number: '" + field + "'");
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return v;
}

void check_delta(double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw ma::ParameterError("--delta must lie in (0, 1)");
}

int run_analyze(const Common& c, const std::string& manifest, const std::string& features,
                const std::string& labels, std::size_t bins, bool write_report) {
  check_delta(c.delta);
  const auto net = ma::load_manifest(manifest);
  const auto ds = ma::load_dataset(features, labels, static_cast<int>(net.output_dim()));
  const auto analysis = ma::analyze(net, ds, c.gamma, c.delta);
  if (write_report) ma::write_json(out_path(c, "bound-report.json"), ma::to_json(analysis.report));
  ma::write_text(out_path(c, "margins.csv"), ma::margins_csv(analysis.margins));
  if (!analysis.report.degenerate) {
    const auto summary = ma::summarize(analysis.margins, bins);
    ma::write_text(out_path(c, "margins-histogram.csv"), ma::histogram_csv(summary));
    ma::write_text(out_path(c, "margins-kde.csv"), ma::kde_csv(summary));
  }
  if (write_report) {
    print_json(ma::to_json(analysis.report));
  } else {
    ma::ordered_json j;
    j["n"] = ds.size();
    j["spectral_complexity"] = analysis.report.R_A;
    j["normalizer"] = analysis.margins.normalizer;
    if (!analysis.margins.normalized.empty()) j["normalized_margins"] = ma::to_json(ma::digest(analysis.margins.normalized));
    j["raw_margins"] = ma::to_json(ma::digest(analysis.margins.raw));
    print_json(j);
  }
  return 0;
}

int run_train(const Common& c, bool seed_given, const std::string& config, const std::string& train_features,
              const std::string& train_labels, const std::string& test_features, const std::string& test_labels) {
  auto cfg = ma::load_train_config(config);
  if (seed_given) cfg.seed = c.seed;
  const int k = static_cast<int>(cfg.layer_widths.back());
  const auto train_ds = ma::load_dataset(train_features, train_labels, k);
  const auto test_ds = ma::load_dataset(test_features, test_labels, k);
  fs::create_directories(c.out);
  ma::write_json(out_path(c, "config.json"), ma::ordered_json::parse(ma::train_config_to_json(cfg).dump()));
  auto result = ma::train(cfg, train_ds, test_ds,
                          [&](const ma::EpochSnapshot& s, const ma::Network&, const ma::MarginDistribution& md) {
                            ma::write_snapshot(c.out, s, md);
                            std::fprintf(stderr, "epoch %zu train_error %.4f test_error %.4f R_A %.6g\n", s.epoch,
                                         s.train_error, s.test_error, s.spectral_complexity);
                            return true;
                          });
  ma::save_manifest(out_path(c, "network.json"), result.network);
  ma::ordered_json j;
  j["epochs"] = result.snapshots.size();
  j["final"] = ma::to_json(result.snapshots.back());
  print_json(j);
  return 0;
}

int run_coverdemo(const Common& c, std::size_t n, std::size_t d, std::size_t m, double q, double s,
                  std::optional<double> eps) {
  std::mt19937_64 rng(ma::derive_seed(c.seed, 0xc0));
  const auto x = gaussian_matrix(n, d, rng);
  const auto a = gaussian_matrix(d, m, rng);
  const double eps_used = eps ? *eps : 0.5 * ma::frobenius_norm(ma::matmul(x, a));
  if (!(eps_used > 0.0)) throw ma::ParameterError("--eps must be positive");
  const ma::NormExponent s_exp = std::isinf(s) ? ma::NormExponent{ma::infinity} : ma::NormExponent{s};
  const ma::NormExponent q_exp = std::isinf(q) ? ma::NormExponent{ma::infinity} : ma::NormExponent{q};
  const auto el = ma::cover_element_for(a, x, eps_used, q_exp, s_exp, ma::derive_seed(c.seed, 0xc1));
  const bool ok = el.error <= eps_used;
  ma::ordered_json j;
  j["k"] = el.k;
  j["error"] = el.error;
  j["guarantee"] = el.guarantee;
  j["eps"] = eps_used;
  j["attempts"] = el.attempts;
  j["satisfied"] = ok;
  print_json(j);
  return ok ? 0 : 4;
}

int run_lowerbound(const Common& c, const std::string& a_text, std::size_t depth, std::size_t n,
                   std::size_t trials) {
  const auto a = parse_vector(a_text);
  const auto net = ma::build_linear_network(a, depth);
  double a_norm = 0.0;
  for (double v : a) a_norm += v * v;
  a_norm = std::sqrt(a_norm);

  std::mt19937_64 rng(ma::derive_seed(c.seed, 0x10));
  const auto x = gaussian_matrix(n, a.size(), rng);
  const auto out = ma::forward(net, x);
  double max_err = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double exact = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) exact += a[j] * x(i, j);
    max_err = std::max(max_err, std::abs(out(i, 0) - exact));
  }
  const double product = ma::product_spectral_norms(ma::layer_norms(net));
  const auto est = ma::rademacher_linear_estimate(x, a_norm, trials, ma::derive_seed(c.seed, 0x11));
  const double floor = a_norm * ma::data_norm(x) / (std::sqrt(2.0) * static_cast<double>(n));
  const bool ok = max_err <= 1e-12 * std::max(1.0, a_norm) && std::abs(product - 2.0 * a_norm) <= 1e-10 * a_norm &&
                  est.mean >= floor - 3.0 * est.standard_error;
  ma::ordered_json j;
  j["a_norm"] = a_norm;
  j["product_spectral_norms"] = product;
  j["max_pointwise_error"] = max_err;
  j["rademacher_estimate"] = est.mean;
  j["standard_error"] = est.standard_error;
  j["khintchine_floor"] = floor;
  j["satisfied"] = ok;
  print_json(j);
  return ok ? 0 : 4;
}

int run_maurey(const Common& c, std::size_t atoms, std::size_t dim, std::size_t k) {
  std::mt19937_64 rng(ma::derive_seed(c.seed, 0x3a));
  std::normal_distribution<double> normal;
  std::vector<std::vector<double>> v(atoms, std::vector<double>(dim));
  std::vector<double> alpha(atoms);
  for (auto& atom : v)
    for (double& e : atom) e = normal(rng);
  for (double& w : alpha) w = ma::uniform01(rng);
  const auto r = ma::maurey_sparsify(v, alpha, k, ma::derive_seed(c.seed, 0x3b));
  const bool ok = r.approx_error_sq <= r.guarantee;
  ma::ordered_json j;
  j["k"] = k;
  j["counts"] = r.counts;
  j["approx_error_sq"] = r.approx_error_sq;
  j["guarantee"] = r.guarantee;
  j["attempts"] = r.attempts;
  j["satisfied"] = ok;
  print_json(j);
  return ok ? 0 : 4;
}

int run_idx_inspect(const std::string& images, const std::string& labels) {
  const auto ds = ma::load_idx(images, labels);
  const auto header = ma::parse_idx_images(ma::detail::read_all(images));
  std::vector<std::size_t> hist(static_cast<std::size_t>(ds.num_classes), 0);
  for (int y : ds.y) ++hist[static_cast<std::size_t>(y - 1)];
  double mean = 0.0;
  for (double v : ds.x.values()) mean += v;
  mean /= static_cast<double>(ds.x.values().size());
  ma::ordered_json j;
  j["count"] = ds.size();
  j["rows"] = header.rows;
  j["cols"] = header.cols;
  j["num_classes"] = ds.num_classes;
  j["label_histogram"] = hist;
  j["pixel_mean"] = mean;
  j["data_norm"] = ma::data_norm(ds.x);
  print_json(j);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral complexity, margin distributions and generalization bounds for ReLU networks"};
  app.require_subcommand(1);
  Common common;
  std::optional<double> gamma;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--gamma", gamma, "Margin scale (default: median positive margin)");
    sub->add_option("--delta", common.delta, "Failure probability in (0, 1)")->capture_default_str();
    sub->add_option("--seed", common.seed, "Seed for all randomness")->capture_default_str();
    sub->add_option("--out", common.out, "Output directory")->capture_default_str();
  };

  std::string manifest, features, labels;
  std::size_t bins = 40;
  auto* analyze = app.add_subcommand("analyze", "Bound report and margins for a network on a dataset");
  analyze->add_option("--network", manifest, "Network manifest (JSON)")->required();
  analyze->add_option("--features", features, "Features (MAT1 or IDX images)")->required();
  analyze->add_option("--labels", labels, "Labels (LBL1 or IDX labels)")->required();
  analyze->add_option("--bins", bins, "Histogram bins")->capture_default_str();
  add_common(analyze);

  auto* margins = app.add_subcommand("margins", "Normalized margin distribution with histogram and KDE");
  margins->add_option("--network", manifest, "Network manifest (JSON)")->required();
  margins->add_option("--features", features, "Features (MAT1 or IDX images)")->required();
  margins->add_option("--labels", labels, "Labels (LBL1 or IDX labels)")->required();
  margins->add_option("--bins", bins, "Histogram bins")->capture_default_str();
  add_common(margins);

  std::string config, train_features, train_labels, test_features, test_labels;
  auto* train = app.add_subcommand("train", "SGD training run with per-epoch snapshots");
  train->add_option("--config", config, "Training configuration (JSON)")->required();
  train->add_option("--train-features", train_features)->required();
  train->add_option("--train-labels", train_labels)->required();
  train->add_option("--test-features", test_features)->required();
  train->add_option("--test-labels", test_labels)->required();
  add_common(train);

  std::size_t n = 8, d = 4, m = 3;
  double q = 2.0, s = 1.0;
  std::optional<double> eps;
  auto* coverdemo = app.add_subcommand("coverdemo", "Construct a matrix cover element for a random XA");
  coverdemo->add_option("--rows", n, "Rows of X")->capture_default_str();
  coverdemo->add_option("--dim", d, "Columns of X / rows of A")->capture_default_str();
  coverdemo->add_option("--outputs", m, "Columns of A")->capture_default_str();
  coverdemo->add_option("--q", q, "Column norm exponent of A (>= 2)")->capture_default_str();
  coverdemo->add_option("--s", s, "Outer norm exponent of A (inf allowed)")->capture_default_str();
  coverdemo->add_option("--eps", eps, "Cover resolution (default: half of ||XA||)");
  add_common(coverdemo);

  std::string a_text = "3,4";
  std::size_t depth = 3, samples = 50, trials = 10000;
  auto* lowerbound = app.add_subcommand("lowerbound", "Linear functional as a ReLU network; Rademacher estimate");
  lowerbound->add_option("--a", a_text, "Comma-separated coefficient vector")->capture_default_str();
  lowerbound->add_option("--depth", depth, "Number of layers (>= 2)")->capture_default_str();
  lowerbound->add_option("--samples", samples, "Rows of the random data matrix")->capture_default_str();
  lowerbound->add_option("--trials", trials, "Monte-Carlo sign vectors")->capture_default_str();
  add_common(lowerbound);

  std::size_t atoms = 6, atom_dim = 5, k = 10;
  auto* maurey = app.add_subcommand("maurey", "Sparsify a random convex combination");
  maurey->add_option("--atoms", atoms, "Number of atoms")->capture_default_str();
  maurey->add_option("--atom-dim", atom_dim, "Atom dimension")->capture_default_str();
  maurey->add_option("--k", k, "Number of terms")->capture_default_str();
  add_common(maurey);

  std::string images;
  auto* idx = app.add_subcommand("idx-inspect", "Summarize an IDX image/label pair");
  idx->add_option("--images", images)->required();
  idx->add_option("--labels", labels)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 3;
  }
  common.gamma = gamma;

  try {
    if (*analyze) return run_analyze(common, manifest, features, labels, bins, true);
    if (*margins) return run_analyze(common, manifest, features, labels, bins, false);
    if (*train) {
      const bool seed_given = train->count("--seed") > 0;
      return run_train(common, seed_given, config, train_features, train_labels, test_features, test_labels);
    }
    if (*coverdemo) return run_coverdemo(common, n, d, m, q, s, eps);
    if (*lowerbound) return run_lowerbound(common, a_text, depth, samples, trials);
    if (*maurey) return run_maurey(common, atoms, atom_dim, k);
    if (*idx) return run_idx_inspect(images, labels);
  } catch (const ma::DivergenceError& e) {
    std::cerr << "error: " << e.what() << " (epoch " << e.epoch() << ")\n";
    return e.exit_code();
  } catch (const ma::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
