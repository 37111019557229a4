#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "margin_auditor/io.hpp"

using namespace margin_auditor;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = MARGIN_AUDITOR_FIXTURES;

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "margin_auditor_test_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run(const std::string& args, const fs::path& stdout_file = "/dev/null") {
  const std::string cmd =
      std::string("\"") + MARGIN_AUDITOR_CLI + "\" " + args + " > \"" + stdout_file.string() + "\" 2>/dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void expect_json_close(const ordered_json& got, const ordered_json& want, const std::string& path) {
  if (want.is_number_float()) {
    ASSERT_TRUE(got.is_number()) << path;
    const double g = got.get<double>(), w = want.get<double>();
    EXPECT_LE(std::abs(g - w), 1e-12 * std::max(1.0, std::abs(w))) << path << ": " << g << " vs " << w;
  } else if (want.is_object()) {
    ASSERT_TRUE(got.is_object()) << path;
    EXPECT_EQ(got.size(), want.size()) << path;
    for (const auto& [k, v] : want.items()) {
      ASSERT_TRUE(got.contains(k)) << path << "." << k;
      expect_json_close(got.at(k), v, path + "." + k);
    }
  } else if (want.is_array()) {
    ASSERT_EQ(got.size(), want.size()) << path;
    for (std::size_t i = 0; i < want.size(); ++i) expect_json_close(got[i], want[i], path + "[" + std::to_string(i) + "]");
  } else {
    EXPECT_EQ(got, want) << path;
  }
}

std::string analyze_args(const fs::path& out) {
  const fs::path t = kFixtures / "tiny";
  return "analyze --network \"" + (t / "network.json").string() + "\" --features \"" + (t / "features.mat").string() +
         "\" --labels \"" + (t / "labels.lbl").string() + "\" --out \"" + out.string() + "\"";
}

void write_blobs(const fs::path& dir) {
  const Dataset all = synth_blobs(160, 4, 3, 3.0, 21);
  save_dataset((dir / "train.mat").string(), (dir / "train.lbl").string(), all.slice(0, 80));
  save_dataset((dir / "test.mat").string(), (dir / "test.lbl").string(), all.slice(80, 160));
}

std::string train_args(const fs::path& data, const fs::path& config, const fs::path& out) {
  return "train --config \"" + config.string() + "\" --train-features \"" + (data / "train.mat").string() +
         "\" --train-labels \"" + (data / "train.lbl").string() + "\" --test-features \"" +
         (data / "test.mat").string() + "\" --test-labels \"" + (data / "test.lbl").string() + "\" --out \"" +
         out.string() + "\"";
}

}  // namespace

TEST(Cli, AnalyzeMatchesGoldenReport) {
  const auto out = scratch("analyze");
  ASSERT_EQ(run(analyze_args(out)), 0);
  const auto got = read_json((out / "bound-report.json").string());
  const auto want = read_json((kFixtures / "tiny" / "expected-bound-report.json").string());
  expect_json_close(got, want, "report");
  ASSERT_TRUE(fs::exists(out / "margins-histogram.csv"));
  ASSERT_TRUE(fs::exists(out / "margins-kde.csv"));

  const auto margins = read_csv((out / "margins.csv").string());
  const auto expected = read_json((kFixtures / "tiny" / "expected-margins.json").string());
  ASSERT_EQ(margins.rows.size(), expected["raw"].size());
  for (std::size_t i = 0; i < margins.rows.size(); ++i) {
    EXPECT_NEAR(std::stod(margins.rows[i][1]), expected["raw"][i].get<double>(), 1e-12);
    EXPECT_NEAR(std::stod(margins.rows[i][2]), expected["normalized"][i].get<double>(), 1e-12);
  }
}

TEST(Cli, MarginsCommandWritesNoReport) {
  const auto out = scratch("margins");
  std::string args = analyze_args(out);
  args.replace(0, 7, "margins");
  ASSERT_EQ(run(args + " --bins 5"), 0);
  EXPECT_FALSE(fs::exists(out / "bound-report.json"));
  EXPECT_EQ(read_csv((out / "margins-histogram.csv").string()).rows.size(), 5u);
}

TEST(Cli, ExitCodes) {
  const auto out = scratch("exit");
  EXPECT_EQ(run("analyze --network /nonexistent/net.json --features x --labels y --out \"" + out.string() + "\""), 2);
  EXPECT_EQ(run(analyze_args(out) + " --delta 1.5"), 3);
  EXPECT_EQ(run(analyze_args(out) + " --gamma -1"), 3);
  EXPECT_EQ(run("analyze --bogus"), 3);
  EXPECT_EQ(run("no-such-command"), 3);
  const fs::path bad = out / "bad.json";
  std::ofstream(bad) << "{ not json";
  EXPECT_EQ(run("analyze --network \"" + bad.string() + "\" --features x --labels y"), 2);
}

TEST(Cli, TrainWritesSnapshotsAndIsReproducible) {
  const auto data = scratch("train-data");
  write_blobs(data);
  const fs::path config = data / "config.json";
  std::ofstream(config) << R"({"layer_widths": [4, 8, 3], "epochs": 3, "batch_size": 4, "learning_rate": 0.05,
                               "label_mode": "random_labels"})";
  const auto a = scratch("train-a");
  const auto b = scratch("train-b");
  ASSERT_EQ(run(train_args(data, config, a)), 0);
  ASSERT_EQ(run(train_args(data, config, b)), 0);

  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(a)) {
    ++files;
    const auto name = entry.path().filename();
    ASSERT_TRUE(fs::exists(b / name)) << name;
    EXPECT_EQ(slurp(entry.path()), slurp(b / name)) << name;
  }
  for (std::size_t e = 1; e <= 3; ++e) {
    const auto tag = epoch_tag(e);
    const auto j = read_json((a / ("epoch_" + tag + ".json")).string());
    const auto snap = snapshot_from_json(j);
    EXPECT_EQ(snap.epoch, e);
    EXPECT_EQ(to_json(snap), j);
    EXPECT_EQ(read_csv((a / ("margins_epoch_" + tag + ".csv")).string()).rows.size(), 80u);
  }
  EXPECT_FALSE(fs::exists(a / "epoch_004.json"));
  EXPECT_TRUE(fs::exists(a / "network.json"));
  EXPECT_GE(files, 8u);

  const auto c = scratch("train-c");
  ASSERT_EQ(run(train_args(data, config, c) + " --seed 7"), 0);
  EXPECT_NE(slurp(a / "epoch_003.json"), slurp(c / "epoch_003.json"));
}

TEST(Cli, TrainedNetworkCanBeAnalyzed) {
  const auto data = scratch("train-then-analyze");
  write_blobs(data);
  const fs::path config = data / "config.json";
  std::ofstream(config) << R"({"layer_widths": [4, 6, 3], "epochs": 2, "batch_size": 8})";
  const auto out = data / "run";
  ASSERT_EQ(run(train_args(data, config, out)), 0);
  const auto report_dir = data / "report";
  ASSERT_EQ(run("analyze --network \"" + (out / "network.json").string() + "\" --features \"" +
                (data / "test.mat").string() + "\" --labels \"" + (data / "test.lbl").string() + "\" --gamma 0.5 --out \"" +
                report_dir.string() + "\""),
            0);
  const auto report = read_json((report_dir / "bound-report.json").string());
  EXPECT_EQ(report["gamma"].get<double>(), 0.5);
  EXPECT_FALSE(report["gamma_defaulted"].get<bool>());
  EXPECT_EQ(report["n"].get<int>(), 80);
}

TEST(Cli, DivergenceExitsFive) {
  const auto data = scratch("diverge");
  write_blobs(data);
  const fs::path config = data / "config.json";
  std::ofstream(config) << R"({"layer_widths": [4, 8, 3], "epochs": 30, "learning_rate": 1e6})";
  EXPECT_EQ(run(train_args(data, config, data / "out")), 5);
}

TEST(Cli, BadTrainConfig) {
  const auto data = scratch("bad-config");
  write_blobs(data);
  const fs::path config = data / "config.json";
  std::ofstream(config) << R"({"layer_widths": [5, 3], "epochs": 1})";
  EXPECT_EQ(run(train_args(data, config, data / "out")), 3);
  std::ofstream(config) << R"({"epochs": 1})";
  EXPECT_EQ(run(train_args(data, config, data / "out")), 2);
}

TEST(Cli, DemosAreSatisfied) {
  const auto out = scratch("demos");
  for (const std::string cmd : {"maurey", "coverdemo", "coverdemo --q inf --s 2", "lowerbound", "lowerbound --a 1,-2,2 --depth 5"}) {
    const fs::path file = out / "stdout.json";
    ASSERT_EQ(run(cmd, file), 0) << cmd;
    const auto j = ordered_json::parse(slurp(file));
    EXPECT_TRUE(j["satisfied"].get<bool>()) << cmd;
  }
  EXPECT_EQ(run("lowerbound --depth 1"), 3);
}

TEST(Cli, IdxInspect) {
  const fs::path dir = MARGIN_AUDITOR_MNIST_DIR;
  const fs::path file = scratch("idx") / "stdout.json";
  ASSERT_EQ(run("idx-inspect --images \"" + (dir / "train-images-idx3-ubyte").string() + "\" --labels \"" +
                    (dir / "train-labels-idx1-ubyte").string() + "\"",
                file),
            0);
  const auto j = ordered_json::parse(slurp(file));
  EXPECT_EQ(j["count"].get<int>(), 5000);
  EXPECT_EQ(j["rows"].get<int>(), 28);
  EXPECT_EQ(j["num_classes"].get<int>(), 10);
}

TEST(Io, CsvAndJsonRoundTrip) {
  MarginDistribution md;
  md.raw = {0.1, -2.5, 1.0 / 3.0};
  md.normalized = {1e-300, -7.25, 2.0 / 3.0};
  const auto t = parse_csv(margins_csv(md));
  ASSERT_EQ(t.header, (std::vector<std::string>{"index", "raw_margin", "normalized_margin"}));
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(std::stod(t.rows[i][1]), md.raw[i]);
    EXPECT_EQ(std::stod(t.rows[i][2]), md.normalized[i]);
  }
  md.normalized.clear();
  EXPECT_EQ(parse_csv(margins_csv(md)).rows[1][2], "");
  EXPECT_THROW(parse_csv("a,b\n1\n"), ParseError);

  EpochSnapshot s;
  s.epoch = 12;
  s.train_loss = 0.1 + 0.2;
  s.test_error = 1.0 / 7.0;
  s.spectral_complexity = 123456.789e10;
  s.margins.q90 = -1e-17;
  const auto back = snapshot_from_json(ordered_json::parse(to_json(s).dump()));
  EXPECT_EQ(back.train_loss, s.train_loss);
  EXPECT_EQ(back.test_error, s.test_error);
  EXPECT_EQ(back.spectral_complexity, s.spectral_complexity);
  EXPECT_EQ(back.margins.q90, s.margins.q90);
  EXPECT_THROW(snapshot_from_json(ordered_json{{"epoch", 1}}), ParseError);
}
