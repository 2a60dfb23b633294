#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "s2g/s2g.h"

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Owns a string returned by the library.
struct Str {
  char* p = nullptr;
  ~Str() { s2g_string_free(p); }
  std::string str() const { return p ? p : ""; }
};

fs::path temp_dir(const std::string& tag) {
  std::random_device rd;
  auto p = fs::temp_directory_path() / ("s2g-capi-" + tag + "-" + std::to_string(rd()));
  fs::create_directories(p);
  return p;
}

const char* kSmallSynth = R"({"prevalences": "reference", "n_recordings": 2, "n_speakers": 2, "duration_s": 12})";
const char* kSmallConfig = R"({"model": {"channels": 4}, "train": {"epochs": 1},
                              "flow": {"hidden": 4, "n_layers": 2, "d_pose": 4},
                              "flow_train": {"epochs": 2}, "cv": {"k": 2, "baseline_trials": 3}})";

}  // namespace

TEST(CApi, StatusNamesAndVersion) {
  EXPECT_STREQ(s2g_status_name(S2G_OK), "ok");
  EXPECT_STREQ(s2g_status_name(S2G_E_INCOMPATIBLE), "incompatible");
  EXPECT_STREQ(s2g_version(), "0.1.0");
  s2g_corpus_free(nullptr);
  s2g_classifier_free(nullptr);
  s2g_flow_free(nullptr);
  s2g_string_free(nullptr);
}

TEST(CApi, NullArgumentsAreRejected) {
  EXPECT_EQ(s2g_corpus_load("/tmp", nullptr, nullptr), S2G_E_INVALID_ARGUMENT);
  EXPECT_NE(std::string(s2g_last_error()).find("NULL"), std::string::npos);
  EXPECT_EQ(s2g_corpus_size(nullptr), 0u);
}

TEST(CApi, MissingCorpusIsIoError) {
  s2g_corpus* c = nullptr;
  EXPECT_EQ(s2g_corpus_load("/nonexistent/s2g", &c, nullptr), S2G_E_IO);
  EXPECT_EQ(c, nullptr);
  EXPECT_NE(std::string(s2g_last_error()).find("manifest"), std::string::npos);
}

TEST(CApi, ConfigResolutionAndErrors) {
  Str resolved, hash, hash2;
  ASSERT_EQ(s2g_config_resolve(nullptr, &resolved.p, &hash.p), S2G_OK);
  EXPECT_EQ(json::parse(resolved.str()).at("fps"), 5.0);
  ASSERT_EQ(s2g_config_resolve("{}", nullptr, &hash2.p), S2G_OK);
  EXPECT_EQ(hash.str(), hash2.str());
  Str bad;
  EXPECT_EQ(s2g_config_resolve("{not json", &bad.p, nullptr), S2G_E_INVALID_ARGUMENT);
  EXPECT_EQ(s2g_config_resolve(R"({"bogus": {}})", &bad.p, nullptr), S2G_E_INVALID_ARGUMENT);
}

TEST(CApi, CorpusSynthesizeSaveLoad) {
  const auto dir = temp_dir("corpus");
  s2g_corpus* c = nullptr;
  ASSERT_EQ(s2g_corpus_synthesize(kSmallSynth, &c), S2G_OK) << s2g_last_error();
  EXPECT_EQ(s2g_corpus_size(c), 2u);
  ASSERT_EQ(s2g_corpus_save(c, dir.c_str()), S2G_OK) << s2g_last_error();
  s2g_corpus* back = nullptr;
  Str issues;
  ASSERT_EQ(s2g_corpus_load(dir.c_str(), &back, &issues.p), S2G_OK) << s2g_last_error();
  EXPECT_EQ(json::parse(issues.str()).size(), 0u);
  EXPECT_EQ(s2g_corpus_size(back), 2u);
  Str id;
  ASSERT_EQ(s2g_corpus_recording_id(back, 1, &id.p), S2G_OK);
  EXPECT_EQ(id.str(), "rec001");
  EXPECT_EQ(s2g_corpus_recording_id(back, 2, &id.p), S2G_E_INVALID_ARGUMENT);
  Str prev;
  ASSERT_EQ(s2g_corpus_prevalence(back, "all", &prev.p), S2G_OK);
  const json p = json::parse(prev.str());
  EXPECT_GT(p.at("gesture").get<double>(), 0.3);
  EXPECT_EQ(s2g_corpus_prevalence(back, "sideways", &prev.p), S2G_E_INVALID_ARGUMENT);
  s2g_corpus_free(c);
  s2g_corpus_free(back);
  fs::remove_all(dir);
}

TEST(CApi, ClassifierTrainSaveLoadPredict) {
  const auto dir = temp_dir("clf");
  s2g_corpus* c = nullptr;
  ASSERT_EQ(s2g_corpus_synthesize(kSmallSynth, &c), S2G_OK);
  s2g_classifier* m = nullptr;
  Str log;
  ASSERT_EQ(s2g_classifier_train(c, "category", kSmallConfig, nullptr, &m, &log.p), S2G_OK) << s2g_last_error();
  EXPECT_FALSE(log.str().empty());
  const auto path = (dir / "cat.ckpt").string();
  ASSERT_EQ(s2g_classifier_save(m, path.c_str()), S2G_OK);
  s2g_classifier* back = nullptr;
  ASSERT_EQ(s2g_classifier_load(path.c_str(), &back), S2G_OK) << s2g_last_error();
  Str info;
  ASSERT_EQ(s2g_classifier_info(back, &info.p), S2G_OK);
  EXPECT_EQ(json::parse(info.str()).at("tier"), "category");
  Str a, b;
  ASSERT_EQ(s2g_classifier_predict(m, c, 0, kSmallConfig, &a.p), S2G_OK) << s2g_last_error();
  ASSERT_EQ(s2g_classifier_predict(back, c, 0, kSmallConfig, &b.p), S2G_OK);
  const json pa = json::parse(a.str());
  EXPECT_EQ(pa.at("labels").size(), 4u);
  EXPECT_EQ(pa.at("probs").size(), 60u);
  EXPECT_EQ(a.str(), b.str());
  s2g_classifier* none = nullptr;
  EXPECT_EQ(s2g_classifier_train(c, "gesture", kSmallConfig, nullptr, &none, nullptr), S2G_E_INVALID_ARGUMENT);
  EXPECT_EQ(s2g_classifier_load((dir / "missing").c_str(), &none), S2G_E_IO);
  s2g_classifier_free(m);
  s2g_classifier_free(back);
  s2g_corpus_free(c);
  fs::remove_all(dir);
}

TEST(CApi, CrossValidateAndRender) {
  s2g_corpus* c = nullptr;
  ASSERT_EQ(s2g_corpus_synthesize(kSmallSynth, &c), S2G_OK);
  Str report, folds, text;
  ASSERT_EQ(s2g_cross_validate(c, "existence", kSmallConfig, nullptr, &report.p, &folds.p), S2G_OK)
      << s2g_last_error();
  const json r = json::parse(report.str());
  EXPECT_EQ(r.at(0).at("tier"), "existence");
  EXPECT_EQ(r.at(0).at("k"), 2);
  ASSERT_EQ(s2g_report_render(report.p, &text.p), S2G_OK);
  EXPECT_NE(text.str().find("gesture"), std::string::npos);
  EXPECT_EQ(s2g_report_render("[{}]", &text.p), S2G_E_PARSE);
  s2g_corpus_free(c);
}

TEST(CApi, RandomBaseline) {
  double f1m, f1s, mm, ms;
  ASSERT_EQ(s2g_random_baseline(0.5, 5000, 50, 1, &f1m, &f1s, &mm, &ms), S2G_OK);
  EXPECT_NEAR(f1m, 0.5, 0.01);
  EXPECT_NEAR(mm, 0.5, 0.01);
  EXPECT_EQ(s2g_random_baseline(-0.1, 10, 1, 1, &f1m, &f1s, &mm, &ms), S2G_E_INVALID_ARGUMENT);
}

TEST(CApi, FlowTrainSampleLikelihood) {
  const std::size_t n = 200, dp = 2, dc = 1;
  std::vector<double> poses(n * dp), cond(n * dc);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 1.0);
  for (double& v : poses) v = g(rng);
  for (double& v : cond) v = g(rng);
  const char* cfg = R"({"flow": {"d_pose": 2, "d_cond": 1, "hidden": 4, "n_layers": 2}, "flow_train": {"epochs": 2}})";
  s2g_flow* f = nullptr;
  ASSERT_EQ(s2g_flow_train(poses.data(), cond.data(), n, cfg, &f, nullptr), S2G_OK) << s2g_last_error();
  std::vector<double> out(3 * dp), again(3 * dp);
  ASSERT_EQ(s2g_flow_sample(f, cond.data(), dc, 3, 9, out.data()), S2G_OK);
  ASSERT_EQ(s2g_flow_sample(f, cond.data(), dc, 3, 9, again.data()), S2G_OK);
  EXPECT_EQ(out, again);
  double ll = 0.0;
  ASSERT_EQ(s2g_flow_log_likelihood(f, poses.data(), dp, cond.data(), dc, &ll), S2G_OK);
  EXPECT_TRUE(std::isfinite(ll));
  EXPECT_EQ(s2g_flow_log_likelihood(f, poses.data(), 3, cond.data(), dc, &ll), S2G_E_INVALID_ARGUMENT);
  const auto dir = temp_dir("flow");
  const auto path = (dir / "f.ckpt").string();
  ASSERT_EQ(s2g_flow_save(f, path.c_str()), S2G_OK);
  s2g_flow* back = nullptr;
  ASSERT_EQ(s2g_flow_load(path.c_str(), &back), S2G_OK);
  double ll2 = 0.0;
  ASSERT_EQ(s2g_flow_log_likelihood(back, poses.data(), dp, cond.data(), dc, &ll2), S2G_OK);
  EXPECT_NEAR(ll, ll2, 1e-4);
  Str info;
  ASSERT_EQ(s2g_flow_info(back, &info.p), S2G_OK);
  EXPECT_EQ(json::parse(info.str()).at("spec").at("d_pose"), 2);
  s2g_flow_free(f);
  s2g_flow_free(back);
  fs::remove_all(dir);
}

TEST(CApi, PipelineRunsFromCheckpoints) {
  const auto dir = temp_dir("pipe");
  s2g_corpus* c = nullptr;
  ASSERT_EQ(s2g_corpus_synthesize(kSmallSynth, &c), S2G_OK);
  json cfg = json::parse(kSmallConfig);
  json ckpts = json::object();
  for (const char* tier : {"existence", "category", "semantics", "phase"}) {
    s2g_classifier* m = nullptr;
    ASSERT_EQ(s2g_classifier_train(c, tier, kSmallConfig, nullptr, &m, nullptr), S2G_OK) << s2g_last_error();
    const auto path = (dir / (std::string(tier) + ".ckpt")).string();
    ASSERT_EQ(s2g_classifier_save(m, path.c_str()), S2G_OK);
    ckpts[tier] = path;
    s2g_classifier_free(m);
  }
  s2g_flow* f = nullptr;
  ASSERT_EQ(s2g_flow_train_planted(c, kSmallConfig, nullptr, &f, nullptr), S2G_OK) << s2g_last_error();
  ckpts["flow"] = (dir / "flow.ckpt").string();
  ASSERT_EQ(s2g_flow_save(f, ckpts["flow"].get<std::string>().c_str()), S2G_OK);
  s2g_flow_free(f);
  cfg["pipeline"] = {{"checkpoints", ckpts}, {"existence_threshold", 0.0}};
  const std::string text = cfg.dump();
  Str frames, frames2;
  double freq = -1.0;
  ASSERT_EQ(s2g_pipeline_run(c, 0, text.c_str(), &frames.p, &freq), S2G_OK) << s2g_last_error();
  EXPECT_EQ(freq, 1.0);
  ASSERT_EQ(s2g_pipeline_run(c, 0, text.c_str(), &frames2.p, nullptr), S2G_OK);
  EXPECT_EQ(frames.str(), frames2.str());
  const auto first = json::parse(frames.str().substr(0, frames.str().find('\n')));
  EXPECT_EQ(first.at("pose").size(), 4u);

  // a phase model in the existence slot is refused
  cfg["pipeline"]["checkpoints"]["existence"] = ckpts["phase"];
  const std::string wrong = cfg.dump();
  Str none;
  EXPECT_EQ(s2g_pipeline_run(c, 0, wrong.c_str(), &none.p, nullptr), S2G_E_INCOMPATIBLE);
  s2g_corpus_free(c);
  fs::remove_all(dir);
}
