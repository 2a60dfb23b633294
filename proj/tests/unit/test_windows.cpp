#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>

#include "s2g/windows.hpp"
#include "support.hpp"

using namespace s2g;

namespace {

PreparedRecording prepared(const std::string& id, const std::string& speaker, double seconds,
                           std::vector<IntervalAnnotation> ann, std::uint64_t seed) {
  AnnotatedRecording r = test::silent_recording(id, seconds);
  r.speaker_id = speaker;
  r.annotations = std::move(ann);
  PreparedRecording p;
  p.recording_id = id;
  p.speaker_id = speaker;
  p.grid = rasterize(r, 5.0);
  p.features = test::random_features(p.grid.n_frames, 4, 3, seed);
  return p;
}

}  // namespace

TEST(Windows, OneExamplePerFrame) {
  const auto rec = prepared("r", "s", 10.0, {}, 1);
  const auto ex = build_examples({rec}, WindowSpec{}, Tier::Existence, FrameFilter::All);
  ASSERT_EQ(ex.size(), 50u);
  EXPECT_EQ(ex[0].features.rows(), 11u);
  EXPECT_EQ(ex[0].features.cols(), 7u);
  for (std::size_t t = 0; t < 50; ++t) EXPECT_EQ(ex[t].center_frame, t);
}

TEST(Windows, EdgesAreReplicated) {
  const auto f = test::random_features(6, 2, 1, 4);
  const Matrix w = window_at(f, 0, WindowSpec{});
  for (std::size_t r = 0; r <= 5; ++r) EXPECT_EQ(w(r, 0), f.audio(0, 0)) << r;
  EXPECT_EQ(w(6, 0), f.audio(1, 0));
  const Matrix last = window_at(f, 5, WindowSpec{});
  for (std::size_t r = 5; r < 11; ++r) EXPECT_EQ(last(r, 1), f.audio(5, 1));
  EXPECT_EQ(last(0, 2), f.text(0, 0));
}

TEST(Windows, GestureOnlyKeepsExistenceFrames) {
  const auto rec = prepared("r", "s", 10.0, {{"phase", "stroke", 1.0, 2.0}, {"category", "beat", 1.0, 2.0}}, 1);
  const auto ex = build_examples({rec}, WindowSpec{}, Tier::Category, FrameFilter::GestureOnly);
  ASSERT_EQ(ex.size(), 5u);
  for (const auto& e : ex) {
    EXPECT_GE(e.center_frame, 5u);
    EXPECT_LT(e.center_frame, 10u);
    EXPECT_EQ(e.target, (std::vector<std::uint8_t>{0, 1, 0, 0}));
  }
  EXPECT_EQ(default_filter(Tier::Existence), FrameFilter::All);
  EXPECT_EQ(default_filter(Tier::Phase), FrameFilter::GestureOnly);
}

TEST(Windows, ExampleCountIndependentOfWindowSpec) {
  const auto rec = prepared("r", "s", 7.0, {{"phase", "stroke", 1.0, 3.3}}, 2);
  for (Tier tier : schema::tiers()) {
    const auto a = build_examples({rec}, WindowSpec{}, tier, default_filter(tier));
    const auto b = build_examples({rec}, WindowSpec{2, 9}, tier, default_filter(tier));
    EXPECT_EQ(a.size(), b.size());
  }
}

TEST(Windows, LengthMismatchNamesRecording) {
  auto rec = prepared("broken", "s", 4.0, {}, 3);
  rec.features = test::random_features(7, 4, 3, 3);
  try {
    build_examples({rec}, WindowSpec{}, Tier::Existence, FrameFilter::All);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Data);
    EXPECT_NE(std::string(e.what()).find("broken"), std::string::npos);
  }
}

TEST(Folds, RoundRobinSizes) {
  std::vector<std::string> speakers;
  for (int i = 0; i < 25; ++i) speakers.push_back("s" + std::to_string(i));
  const FoldPlan plan = plan_folds(speakers, 20, 7);
  ASSERT_EQ(plan.k(), 20u);
  for (std::size_t f = 0; f < 20; ++f) EXPECT_EQ(plan.folds[f].size(), f < 5 ? 2u : 1u);
}

TEST(Folds, DisjointCoveringAndDeterministic) {
  std::vector<std::string> speakers;
  for (int i = 0; i < 13; ++i) speakers.push_back("spk" + std::to_string(i));
  for (std::size_t k : {1u, 2u, 5u, 13u}) {
    const FoldPlan a = plan_folds(speakers, k, 99);
    const FoldPlan b = plan_folds(speakers, k, 99);
    EXPECT_EQ(a.folds, b.folds);
    std::multiset<std::string> all;
    for (const auto& f : a.folds) all.insert(f.begin(), f.end());
    EXPECT_EQ(all, std::multiset<std::string>(speakers.begin(), speakers.end()));
  }
  EXPECT_EQ(plan_folds(speakers, 1, 3).folds[0].size(), 13u);
}

TEST(Folds, InputOrderDoesNotMatter) {
  std::vector<std::string> speakers{"a", "b", "c", "d", "e", "f"};
  const FoldPlan a = plan_folds(speakers, 3, 5);
  std::reverse(speakers.begin(), speakers.end());
  speakers.push_back("c");
  EXPECT_EQ(plan_folds(speakers, 3, 5).folds, a.folds);
}

TEST(Folds, TooManyFoldsIsRejected) {
  EXPECT_THROW(plan_folds({"a", "b"}, 3, 1), Error);
  EXPECT_THROW(plan_folds({"a", "b"}, 0, 1), Error);
}

TEST(Folds, SplitsAreSpeakerDisjoint) {
  std::vector<PreparedRecording> recs;
  for (int i = 0; i < 6; ++i)
    recs.push_back(prepared("r" + std::to_string(i), "spk" + std::to_string(i % 4), 2.0, {}, i));
  const auto ex = build_examples(recs, WindowSpec{}, Tier::Existence, FrameFilter::All);
  const FoldPlan plan = plan_folds({"spk0", "spk1", "spk2", "spk3"}, 2, 11);
  std::vector<int> seen_in_test(ex.size(), 0);
  for (std::size_t f = 0; f < plan.k(); ++f) {
    const FoldSplit s = split_examples(plan, f, ex);
    EXPECT_EQ(s.train.size() + s.test.size(), ex.size());
    std::set<std::string> train_spk, test_spk;
    for (auto i : s.train) train_spk.insert(ex[i].speaker_id);
    for (auto i : s.test) {
      test_spk.insert(ex[i].speaker_id);
      ++seen_in_test[i];
    }
    for (const auto& sp : test_spk) EXPECT_EQ(train_spk.count(sp), 0u);
  }
  for (int c : seen_in_test) EXPECT_EQ(c, 1);
}
