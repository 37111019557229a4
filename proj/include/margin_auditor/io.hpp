#pragma once

// CSV and JSON serialization of reports, margin distributions and training
// snapshots. Doubles are written with 17 significant digits so that files
// round-trip exactly.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "margin_auditor/complexity.hpp"
#include "margin_auditor/errors.hpp"
#include "margin_auditor/margins.hpp"
#include "margin_auditor/training.hpp"

namespace margin_auditor {

using ordered_json = nlohmann::ordered_json;

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::ofstream open_output(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  std::error_code ec;
  if (!parent.empty()) std::filesystem::create_directories(parent, ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write file: " + path);
  return out;
}

inline void write_text(const std::string& path, const std::string& text) {
  auto out = open_output(path);
  out << text;
  if (!out) throw IoError("write failed: " + path);
}

inline void write_json(const std::string& path, const ordered_json& j) { write_text(path, j.dump(2) + "\n"); }

inline ordered_json read_json(const std::string& path) {
  const auto bytes = detail::read_all(path);
  try {
    return ordered_json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("invalid JSON in " + path + ": " + e.what(), e.byte);
  }
}

// ---------------------------------------------------------------------------
// CSV

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

// Comma-separated, no quoting (every field written here is numeric).
inline CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      const auto comma = line.find(',', start);
      fields.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (first) {
      t.header = std::move(fields);
      first = false;
    } else {
      if (fields.size() != t.header.size()) throw ParseError("CSV row has the wrong number of fields", 0);
      t.rows.push_back(std::move(fields));
    }
  }
  return t;
}

inline CsvTable read_csv(const std::string& path) {
  const auto bytes = detail::read_all(path);
  return parse_csv(std::string(bytes.begin(), bytes.end()));
}

// index,raw_margin,normalized_margin (normalized left blank when undefined).
inline std::string margins_csv(const MarginDistribution& md) {
  std::string s = "index,raw_margin,normalized_margin\n";
  for (std::size_t i = 0; i < md.raw.size(); ++i) {
    s += std::to_string(i) + "," + format_double(md.raw[i]) + ",";
    if (i < md.normalized.size()) s += format_double(md.normalized[i]);
    s += "\n";
  }
  return s;
}

inline std::string histogram_csv(const MarginSummary& summary) {
  std::string s = "bin_left,bin_right,density\n";
  for (const auto& b : summary.histogram)
    s += format_double(b.left) + "," + format_double(b.right) + "," + format_double(b.density) + "\n";
  return s;
}

inline std::string kde_csv(const MarginSummary& summary) {
  std::string s = "kde_x,kde_density\n";
  for (std::size_t i = 0; i < summary.kde_x.size(); ++i)
    s += format_double(summary.kde_x[i]) + "," + format_double(summary.kde_density[i]) + "\n";
  return s;
}

// ---------------------------------------------------------------------------
// JSON records

inline ordered_json to_json(const BoundReport& r) {
  ordered_json layers = ordered_json::array();
  for (std::size_t i = 0; i < r.layer_norms.size(); ++i) {
    layers.push_back({{"layer", i + 1},
                      {"spectral_norm", r.layer_norms[i].s},
                      {"norm_2_1_deviation", r.layer_norms[i].b},
                      {"frobenius_deviation", r.frobenius_deltas[i]},
                      {"lipschitz", r.layer_norms[i].rho}});
  }
  ordered_json j;
  j["layers"] = layers;
  j["spectral_complexity"] = r.R_A;
  j["pac_bayes_complexity"] = r.R_PB;
  j["product_spectral_norms"] = r.product_spectral_norms;
  j["data_norm"] = r.data_norm_B;
  j["width"] = r.W;
  j["n"] = r.n;
  j["depth"] = r.L;
  j["gamma"] = r.gamma;
  j["gamma_defaulted"] = r.gamma_defaulted;
  j["delta"] = r.delta;
  j["error_rate"] = r.error_rate;
  j["ramp_risk"] = r.ramp_risk;
  j["degenerate"] = r.degenerate;
  j["fixed_bound"] = {{"ramp_risk", r.ramp_risk},
                      {"term_const", r.term_const},
                      {"term_complexity", r.term_complexity},
                      {"term_confidence", r.term_confidence},
                      {"total", r.bound_total}};
  j["uniform_bound"] = {{"ramp_risk", r.ramp_risk},
                        {"term_const", r.term_const},
                        {"term_complexity", r.uniform_term_complexity},
                        {"term_confidence", r.uniform_term_confidence},
                        {"total", r.uniform_bound_total},
                        {"vacuous", r.uniform_vacuous}};
  return j;
}

inline ordered_json to_json(const DistributionDigest& d) {
  return {{"mean", d.mean},     {"stddev", d.stddev}, {"min", d.min}, {"q10", d.q10},
          {"median", d.median}, {"q90", d.q90},       {"max", d.max}};
}

inline ordered_json to_json(const EpochSnapshot& s) {
  ordered_json j;
  j["epoch"] = s.epoch;
  j["train_loss"] = s.train_loss;
  j["train_error"] = s.train_error;
  j["test_error"] = s.test_error;
  j["excess_risk"] = s.excess_risk;
  j["product_spectral_norms"] = s.product_spectral_norms;
  j["spectral_complexity"] = s.spectral_complexity;
  j["normalized_margins"] = to_json(s.margins);
  return j;
}

inline DistributionDigest digest_from_json(const ordered_json& j) {
  DistributionDigest d;
  d.mean = j.at("mean").get<double>();
  d.stddev = j.at("stddev").get<double>();
  d.min = j.at("min").get<double>();
  d.q10 = j.at("q10").get<double>();
  d.median = j.at("median").get<double>();
  d.q90 = j.at("q90").get<double>();
  d.max = j.at("max").get<double>();
  return d;
}

inline EpochSnapshot snapshot_from_json(const ordered_json& j) {
  try {
    EpochSnapshot s;
    s.epoch = j.at("epoch").get<std::size_t>();
    s.train_loss = j.at("train_loss").get<double>();
    s.train_error = j.at("train_error").get<double>();
    s.test_error = j.at("test_error").get<double>();
    s.excess_risk = j.at("excess_risk").get<double>();
    s.product_spectral_norms = j.at("product_spectral_norms").get<double>();
    s.spectral_complexity = j.at("spectral_complexity").get<double>();
    s.margins = digest_from_json(j.at("normalized_margins"));
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("snapshot record: ") + e.what(), 0);
  }
}

inline std::string epoch_tag(std::size_t epoch) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03zu", epoch);
  return buf;
}

// <dir>/epoch_NNN.json and <dir>/margins_epoch_NNN.csv
inline void write_snapshot(const std::string& dir, const EpochSnapshot& s, const MarginDistribution& md) {
  const std::filesystem::path base(dir);
  write_json((base / ("epoch_" + epoch_tag(s.epoch) + ".json")).string(), to_json(s));
  write_text((base / ("margins_epoch_" + epoch_tag(s.epoch) + ".csv")).string(), margins_csv(md));
}

}  // namespace margin_auditor
