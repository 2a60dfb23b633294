#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "json.hpp"

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    std::random_device rd;
    dir_ = fs::temp_directory_path() / ("s2g-cli-" + std::to_string(rd()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  Result run(const std::string& args) {
    const fs::path log = dir_ / "stdout.txt";
    const std::string cmd = std::string(S2G_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    std::ifstream in(log);
    std::stringstream ss;
    ss << in.rdbuf();
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
  }

  json read_json(const fs::path& p) {
    std::ifstream in(p);
    return json::parse(in);
  }

  // Writes a small corpus with `speakers` speakers and returns its path.
  fs::path synth(std::size_t recordings, std::size_t speakers, double duration) {
    const fs::path out = dir_ / ("synth-" + std::to_string(recordings) + "-" + std::to_string(speakers));
    const auto r = run("synth --recordings " + std::to_string(recordings) + " --speakers " +
                       std::to_string(speakers) + " --duration " + std::to_string(duration) + " --out " +
                       out.string());
    EXPECT_EQ(r.code, 0) << r.out;
    return out / "corpus";
  }

  fs::path dir_;
};

const char* kSmall = "--set model.channels=4 --set train.epochs=1 --set cv.baseline_trials=3";

}  // namespace

TEST_F(Cli, UnknownCommandAndFlagAreUsageErrors) {
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("baseline --no-such-flag").code, 2);
  EXPECT_EQ(run("").code, 2);
}

TEST_F(Cli, MissingCorpusIsDataError) {
  const auto r = run("cv --corpus " + (dir_ / "nothing").string() + " --tier existence --out " + (dir_ / "r").string());
  EXPECT_EQ(r.code, 1) << r.out;
  EXPECT_NE(r.out.find("manifest"), std::string::npos);
  // the failed run still leaves a manifest with its exit code
  EXPECT_EQ(read_json(dir_ / "r" / "manifest.json").at("exit_code"), 1);
}

TEST_F(Cli, BaselinePrintsPrevalenceMatchedScore) {
  const auto r = run("baseline --prevalence 0.5 --out " + (dir_ / "b").string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("Macro F1 0.50"), std::string::npos) << r.out;
  const json b = read_json(dir_ / "b" / "baseline.json");
  EXPECT_NEAR(b.at("rows").at(0).at("macro_f1_mean").get<double>(), 0.5, 0.01);
  EXPECT_EQ(run("baseline --prevalence 1.5").code, 2);
}

TEST_F(Cli, ValidateReportsCleanCorpus) {
  const fs::path corpus = synth(2, 2, 8.0);
  const auto r = run("validate " + corpus.string() + " --out " + (dir_ / "v").string());
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(fs::exists(dir_ / "v" / "validation.json"));
  // list a recording whose files do not exist
  json manifest = read_json(corpus / "manifest.json");
  manifest["recordings"].push_back(json::object({{"id", "ghost"}}));
  std::ofstream(corpus / "manifest.json") << manifest.dump();
  EXPECT_EQ(run("validate " + corpus.string() + " --out " + (dir_ / "v2").string()).code, 1);
}

TEST_F(Cli, CrossValidationTwentyFolds) {
  const fs::path corpus = synth(20, 20, 8.0);
  const fs::path out = dir_ / "cv";
  const auto r = run("cv --corpus " + corpus.string() + " --tier category --k 20 --seed 7 " + kSmall + " --out " +
                     out.string());
  ASSERT_EQ(r.code, 0) << r.out;
  const json report = read_json(out / "report.json");
  ASSERT_EQ(report.size(), 1u);
  EXPECT_EQ(report[0].at("tier"), "category");
  EXPECT_EQ(report[0].at("k"), 20);
  EXPECT_EQ(report[0].at("labels").size(), 4u);
  EXPECT_TRUE(fs::exists(out / "report.txt"));
  const json manifest = read_json(out / "manifest.json");
  EXPECT_EQ(manifest.at("exit_code"), 0);
  EXPECT_EQ(manifest.at("seed"), 7);
  EXPECT_FALSE(manifest.at("config_hash").get<std::string>().empty());
}

TEST_F(Cli, RepeatedRunsProduceIdenticalArtifacts) {
  const fs::path corpus = synth(3, 3, 8.0);
  for (const char* name : {"a", "b"}) {
    const auto r = run("train --corpus " + corpus.string() + " --tier existence " + kSmall + " --out " +
                       (dir_ / name).string());
    ASSERT_EQ(r.code, 0) << r.out;
  }
  for (const char* f : {"existence.ckpt", "train_log.jsonl", "config.json"}) {
    std::ifstream a(dir_ / "a" / f, std::ios::binary), b(dir_ / "b" / f, std::ios::binary);
    std::stringstream sa, sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    EXPECT_FALSE(sa.str().empty()) << f;
    EXPECT_EQ(sa.str(), sb.str()) << f;
  }
  const json m = read_json(dir_ / "a" / "manifest.json");
  EXPECT_EQ(m.at("command"), "train");
  EXPECT_FALSE(m.at("inputs").empty());
  EXPECT_FALSE(m.at("outputs").empty());
}

TEST_F(Cli, GenerateWritesFramesForEveryRecording) {
  const fs::path corpus = synth(2, 2, 8.0);
  std::string ckpts;
  for (const char* tier : {"existence", "category", "semantics", "phase", "flow"}) {
    const fs::path out = dir_ / tier;
    const auto r = run(std::string("train --corpus ") + corpus.string() + " --tier " + tier + " " + kSmall +
                       " --set flow.hidden=4 --set flow_train.epochs=1 --out " + out.string());
    ASSERT_EQ(r.code, 0) << r.out;
    ckpts += std::string(" --") + tier + " " + (out / (std::string(tier) + ".ckpt")).string();
  }
  const auto r = run("generate --corpus " + corpus.string() + ckpts + " --threshold 0 " + kSmall +
                     " --set flow.hidden=4 --out " + (dir_ / "gen").string());
  ASSERT_EQ(r.code, 0) << r.out;
  const json summary = read_json(dir_ / "gen" / "generate_summary.json");
  EXPECT_TRUE(fs::exists(dir_ / "gen" / "frames" / "rec000.jsonl"));
  EXPECT_TRUE(fs::exists(dir_ / "gen" / "frames" / "rec001.jsonl"));
  EXPECT_FALSE(summary.dump().empty());
}
