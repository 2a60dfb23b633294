#include <gtest/gtest.h>

#include <sstream>

#include "s2g/pipeline.hpp"
#include "support.hpp"

using namespace s2g;

namespace {

constexpr std::size_t kAudio = 4, kText = 3;

DilatedConvSpec tiny() {
  DilatedConvSpec s;
  s.channels = 4;
  return s;
}

PipelineModels models(std::uint64_t seed = 1) {
  PipelineModels m;
  m.existence = init_model(tiny(), WindowSpec{}, kAudio + kText, Tier::Existence, seed);
  m.category = init_model(tiny(), WindowSpec{}, kAudio + kText, Tier::Category, seed + 1);
  m.semantics = init_model(tiny(), WindowSpec{}, kAudio + kText, Tier::Semantics, seed + 2);
  m.phase = init_model(tiny(), WindowSpec{}, kAudio + kText, Tier::Phase, seed + 3);
  // a spread of existence probabilities across frames
  for (double& v : m.existence.view("head.weight")) v *= 8.0;
  FlowSpec fs;
  fs.d_pose = 3;
  fs.d_cond = kAudio + kText + 13;
  fs.hidden = 8;
  fs.n_layers = 2;
  m.flow = init_flow(fs, seed);
  return m;
}

PipelineConfig config(double tau) {
  PipelineConfig c;
  c.existence_threshold = tau;
  return c;
}

}  // namespace

TEST(Pipeline, ThresholdAboveOneClampsToNoGestures) {
  const auto f = test::random_features(40, kAudio, kText, 1);
  const auto recs = run(f, models(), config(1.7));
  ASSERT_EQ(recs.size(), 40u);
  for (const auto& r : recs) {
    EXPECT_FALSE(r.gesturing);
    EXPECT_FALSE(r.pose.has_value());
    EXPECT_TRUE(r.property_probs.empty());
  }
  EXPECT_EQ(gesture_frequency(recs), 0.0);
}

TEST(Pipeline, ZeroThresholdGesturesEverywhere) {
  const auto f = test::random_features(40, kAudio, kText, 1);
  const auto recs = run(f, models(), config(0.0));
  for (const auto& r : recs) {
    EXPECT_TRUE(r.gesturing);
    ASSERT_TRUE(r.pose.has_value());
    EXPECT_EQ(r.pose->size(), 3u);
    EXPECT_EQ(r.property_probs.size(), 13u);
    EXPECT_EQ(r.property_bits.size(), 13u);
  }
  EXPECT_EQ(gesture_frequency(recs), 1.0);
  EXPECT_EQ(run(f, models(), config(-3.0)).size(), 40u);
}

TEST(Pipeline, FrequencyFallsMonotonicallyWithThreshold) {
  const auto f = test::random_features(200, kAudio, kText, 2);
  const auto m = models();
  double prev = 2.0;
  for (int i = 0; i <= 20; ++i) {
    const double tau = i / 20.0;
    const auto recs = run(f, m, config(tau));
    const double freq = gesture_frequency(recs);
    EXPECT_LE(freq, prev) << tau;
    prev = freq;
    // recount from the reported probabilities
    std::size_t n = 0;
    for (const auto& r : recs) {
      n += r.existence_prob >= tau;
      EXPECT_EQ(r.gesturing, r.existence_prob >= tau);
      EXPECT_EQ(r.pose.has_value(), r.gesturing);
    }
    EXPECT_DOUBLE_EQ(freq, static_cast<double>(n) / recs.size());
  }
}

TEST(Pipeline, GestureFrequencyExamples) {
  std::vector<FrameRecord> recs(4);
  EXPECT_DOUBLE_EQ(gesture_frequency(recs), 0.0);
  recs[1].gesturing = true;
  EXPECT_DOUBLE_EQ(gesture_frequency(recs), 0.25);
  for (auto& r : recs) r.gesturing = true;
  EXPECT_DOUBLE_EQ(gesture_frequency(recs), 1.0);
  EXPECT_THROW(gesture_frequency({}), Error);
}

TEST(Pipeline, ExistenceIsDecoupledFromPropertyModels) {
  const auto f = test::random_features(60, kAudio, kText, 3);
  auto a = models(1);
  auto b = models(1);
  b.category = init_model(tiny(), WindowSpec{}, kAudio + kText, Tier::Category, 99);
  b.phase = init_model(tiny(), WindowSpec{}, kAudio + kText, Tier::Phase, 98);
  const auto ra = run(f, a, config(0.5));
  const auto rb = run(f, b, config(0.5));
  for (std::size_t t = 0; t < ra.size(); ++t) {
    EXPECT_EQ(ra[t].existence_prob, rb[t].existence_prob);
    EXPECT_EQ(ra[t].gesturing, rb[t].gesturing);
  }
}

TEST(Pipeline, RepeatRunsAreByteIdentical) {
  const auto f = test::random_features(60, kAudio, kText, 4);
  const auto m = models();
  EXPECT_EQ(frames_jsonl(run(f, m, config(0.3)), "x"), frames_jsonl(run(f, m, config(0.3)), "x"));
  PipelineConfig other = config(0.3);
  other.seed = 2;
  EXPECT_NE(frames_jsonl(run(f, m, config(0.3)), "x"), frames_jsonl(run(f, m, other), "x"));
}

TEST(Pipeline, TierMismatchFailsBeforeProcessing) {
  const auto f = test::random_features(10, kAudio, kText, 5);
  auto m = models();
  m.existence = m.category;
  try {
    run(f, m, config(0.5));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Incompatible);
  }
  auto w = models();
  w.flow.spec.d_cond += 1;
  EXPECT_THROW(run(f, w, config(0.5)), Error);
  const auto narrow = test::random_features(10, kAudio - 1, kText, 5);
  EXPECT_THROW(run(narrow, models(), config(0.5)), Error);
}

TEST(Pipeline, JsonLinesCarrySchemaAndRecording) {
  const auto f = test::random_features(5, kAudio, kText, 6);
  const std::string out = frames_jsonl(run(f, models(), config(0.0)), "rec7");
  std::istringstream in(out);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    const json j = json::parse(line);
    EXPECT_EQ(j.at("schema"), kFramesSchema);
    EXPECT_EQ(j.at("recording_id"), "rec7");
    EXPECT_EQ(j.at("frame"), n);
    EXPECT_NEAR(j.at("time_s").get<double>(), n / 5.0, 1e-12);
    ++n;
  }
  EXPECT_EQ(n, 5u);
}

TEST(Pipeline, SoftPropertiesChangeConditioningOnly) {
  const auto f = test::random_features(30, kAudio, kText, 7);
  auto m = models();
  // non-zero conditioner output so that the property input matters
  for (double& v : m.flow.view("layer0.w2")) v = 0.3;
  PipelineConfig soft = config(0.0);
  soft.soft_properties = true;
  const auto hard = run(f, m, config(0.0));
  const auto sft = run(f, m, soft);
  bool differs = false;
  for (std::size_t t = 0; t < hard.size(); ++t) {
    EXPECT_EQ(hard[t].property_probs, sft[t].property_probs);
    differs = differs || *hard[t].pose != *sft[t].pose;
  }
  EXPECT_TRUE(differs);
}
