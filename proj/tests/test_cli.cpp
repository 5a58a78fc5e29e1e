#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <algorithm>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "disasterlens/cli.hpp"
#include "disasterlens/data.hpp"
#include "test_support.hpp"

using namespace disasterlens;
using disasterlens::testing::TempDir;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t line_count(const std::string& text) { return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')); }

std::set<std::string> flags_in(const std::string& help) {
  std::set<std::string> flags;
  static const std::regex re("--[a-z][a-z-]*");
  for (auto it = std::sregex_iterator(help.begin(), help.end(), re); it != std::sregex_iterator(); ++it)
    flags.insert(it->str());
  return flags;
}

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("cli");
    auto r = run_cli({"make-synthetic", "--out", data().string(), "--per-class", "4", "--size", "16", "--seed", "2"});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static std::filesystem::path data() { return *dir_ / "data"; }
  static std::filesystem::path path(const std::string& name) { return *dir_ / name; }
  static std::vector<std::string> model_args() {
    return {"--arch", (data() / "backbone.arch").string(), "--weights", (data() / "backbone.cnwf").string(),
            "--manifest", (data() / "manifest.csv").string()};
  }
  static Outcome train(const std::string& out, std::vector<std::string> extra) {
    std::vector<std::string> args{"train"};
    for (auto& a : model_args()) args.push_back(a);
    for (auto& a : std::vector<std::string>{"--out", path(out).string(), "--test-count", "5", "--seed", "7",
                                            "--deterministic"})
      args.push_back(a);
    for (auto& a : extra) args.push_back(a);
    return run_cli(args);
  }

  static TempDir* dir_;
};

TempDir* CliTest::dir_ = nullptr;

}  // namespace

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(run_cli({}).code, 2);
  EXPECT_EQ(run_cli({"bogus"}).code, 2);
  EXPECT_EQ(run_cli({"train", "--no-such-flag"}).code, 2);
  EXPECT_EQ(run_cli({"curve"}).code, 2);
  auto args = model_args();
  args.insert(args.begin(), "train");
  args.push_back("--test-count");
  args.push_back("5");
  args.push_back("--train-fraction");
  args.push_back("0.5");
  EXPECT_EQ(run_cli(args).code, 2);
}

TEST_F(CliTest, HelpListsEveryFlag) {
  const std::set<std::string> common{"--help", "--config", "--arch", "--weights", "--manifest", "--out",
                                     "--seed", "--threads", "--deterministic", "--means"};
  const std::set<std::string> training{"--epochs", "--batch-size", "--lr", "--momentum", "--no-augment",
                                       "--max-translation", "--no-transpose", "--no-hflip", "--no-vflip",
                                       "--rgb-jitter", "--zero-init-head"};
  auto help = [](const std::string& sub) {
    auto r = run_cli({sub, "--help"});
    EXPECT_EQ(r.code, 0) << sub;
    return flags_in(r.out + r.err);
  };
  auto t = help("train");
  for (auto& f : common) EXPECT_TRUE(t.count(f)) << f;
  for (auto& f : training) EXPECT_TRUE(t.count(f)) << f;
  EXPECT_TRUE(t.count("--test-count") && t.count("--train-fraction") && t.count("--stratified"));
  auto s = help("sweep");
  for (auto& f : training) EXPECT_TRUE(s.count(f)) << f;
  EXPECT_TRUE(s.count("--ratios") && s.count("--repeats"));
  EXPECT_TRUE(help("eval").count("--head"));
  EXPECT_TRUE(help("predict").count("--head"));
  EXPECT_TRUE(help("curve").count("--metrics"));
  EXPECT_TRUE(help("validate-weights").count("--arch"));
  EXPECT_TRUE(help("make-synthetic").count("--per-class"));
  auto top = run_cli({"--help"});
  EXPECT_EQ(top.code, 0);
  for (auto sub : {"train", "eval", "predict", "sweep", "curve", "validate-weights"})
    EXPECT_NE(top.out.find(sub), std::string::npos) << sub;
}

TEST_F(CliTest, TrainIsByteReproducible) {
  auto a = train("train_a", {"--epochs", "3"});
  ASSERT_EQ(a.code, 0) << a.err;
  auto b = train("train_b", {"--epochs", "3"});
  ASSERT_EQ(b.code, 0) << b.err;
  for (auto name : {"metrics.csv", "curve.csv", "head.cnwf", "train_split.csv", "test_split.csv"})
    EXPECT_EQ(slurp(path("train_a") / name), slurp(path("train_b") / name)) << name;
  EXPECT_EQ(line_count(slurp(path("train_a") / "metrics.csv")), 4u);
  EXPECT_EQ(line_count(slurp(path("train_a") / "test_split.csv")), 6u);
  EXPECT_NE(a.out.find("best epoch"), std::string::npos);
}

TEST_F(CliTest, ConfigFileLayering) {
  std::ofstream(path("run.cfg")) << "# defaults\nepochs = 2\nlr=0.02\n";
  auto from_file = train("cfg_a", {"--config", path("run.cfg").string()});
  ASSERT_EQ(from_file.code, 0) << from_file.err;
  EXPECT_EQ(line_count(slurp(path("cfg_a") / "metrics.csv")), 3u);
  auto overridden = train("cfg_b", {"--config", path("run.cfg").string(), "--epochs", "1"});
  ASSERT_EQ(overridden.code, 0) << overridden.err;
  EXPECT_EQ(line_count(slurp(path("cfg_b") / "metrics.csv")), 2u);
  std::ofstream(path("bad.cfg")) << "no-such-key=1\n";
  EXPECT_EQ(train("cfg_c", {"--config", path("bad.cfg").string()}).code, 2);
}

TEST_F(CliTest, EvalPredictAndCurve) {
  ASSERT_EQ(train("trained", {"--epochs", "2"}).code, 0);
  const auto head = (path("trained") / "head.cnwf").string();

  auto eval_run = [&](const std::string& out) {
    return run_cli({"eval", "--arch", (data() / "backbone.arch").string(), "--weights", (data() / "backbone.cnwf").string(),
                "--manifest", (path("trained") / "test_split.csv").string(), "--head", head, "--out",
                path(out).string()});
  };
  auto e1 = eval_run("eval_a");
  ASSERT_EQ(e1.code, 0) << e1.err;
  ASSERT_EQ(eval_run("eval_b").code, 0);
  for (auto name : {"confusion.txt", "confusion.csv", "misclassified.csv"})
    EXPECT_EQ(slurp(path("eval_a") / name), slurp(path("eval_b") / name)) << name;

  auto m = load_manifest(data() / "manifest.csv");
  auto p = run_cli({"predict", "--arch", (data() / "backbone.arch").string(), "--weights",
                (data() / "backbone.cnwf").string(), "--head", head, m.samples[0].path});
  ASSERT_EQ(p.code, 0) << p.err;
  std::istringstream lines(p.out);
  std::string line;
  std::getline(lines, line);
  ASSERT_EQ(line.rfind("predicted,", 0), 0u) << line;
  EXPECT_TRUE(parse_class_label(line.substr(10)).has_value());
  double total = 0.0;
  std::size_t rows = 0;
  while (std::getline(lines, line)) {
    const auto comma = line.find(',');
    ASSERT_NE(comma, std::string::npos);
    EXPECT_TRUE(parse_class_label(line.substr(0, comma)).has_value());
    total += std::stod(line.substr(comma + 1));
    ++rows;
  }
  EXPECT_EQ(rows, 5u);
  EXPECT_NEAR(total, 1.0, 1e-4);

  auto c = run_cli({"curve", "--metrics", (path("trained") / "metrics.csv").string(), "--out", path("curve").string()});
  ASSERT_EQ(c.code, 0) << c.err;
  EXPECT_EQ(slurp(path("curve") / "curve.csv"), slurp(path("trained") / "curve.csv"));
}

TEST_F(CliTest, SweepIsByteReproducible) {
  auto run = [&](const std::string& out) {
    std::vector<std::string> args{"sweep"};
    for (auto& a : model_args()) args.push_back(a);
    for (auto& a : std::vector<std::string>{"--out", path(out).string(), "--ratios", "0.7,0.8", "--epochs", "1",
                                            "--seed", "3", "--deterministic"})
      args.push_back(a);
    return run_cli(args);
  };
  ASSERT_EQ(run("sweep_a").code, 0);
  ASSERT_EQ(run("sweep_b").code, 0);
  const auto csv = slurp(path("sweep_a") / "sweep.csv");
  EXPECT_EQ(csv, slurp(path("sweep_b") / "sweep.csv"));
  EXPECT_EQ(line_count(csv), 3u);
}

TEST_F(CliTest, ValidateWeights) {
  const auto file = (data() / "backbone.cnwf").string();
  auto ok = run_cli({"validate-weights", file, "--arch", (data() / "backbone.arch").string()});
  EXPECT_EQ(ok.code, 0) << ok.err;
  EXPECT_NE(ok.out.find("zero mismatches"), std::string::npos);

  auto bytes = slurp(file);
  std::ofstream(path("truncated.cnwf"), std::ios::binary) << bytes.substr(0, bytes.size() - 9);
  auto bad = run_cli({"validate-weights", path("truncated.cnwf").string()});
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.err.find("checksum"), std::string::npos) << bad.err;
  EXPECT_EQ(line_count(bad.err), 1u);

  auto missing = run_cli({"validate-weights", (data() / "backbone.cnwf").string(), "--arch",
                      std::string(DISASTERLENS_DATA_DIR) + "/vgg16.arch"});
  EXPECT_EQ(missing.code, 1);
}

TEST_F(CliTest, BinaryExitCodes) {
  auto status = [](const std::string& args) {
    const int raw = std::system((std::string(DISASTERLENS_CLI) + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  };
  EXPECT_EQ(status("--help"), 0);
  EXPECT_EQ(status("bogus"), 2);
  EXPECT_EQ(status("validate-weights " + path("missing.cnwf").string()), 2);
  std::ofstream(path("garbage.cnwf"), std::ios::binary) << "CNWFgarbage-garbage";
  EXPECT_EQ(status("validate-weights " + path("garbage.cnwf").string()), 1);
}
