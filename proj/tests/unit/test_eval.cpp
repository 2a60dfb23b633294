#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "s2g/config.hpp"
#include "s2g/eval.hpp"
#include "support.hpp"

using namespace s2g;

namespace {

// Exact expectation of F1 and Macro F1 over all label/guess pairs of length n
// with both drawn independently at prevalence pi.
std::pair<double, double> exact_expectation(double pi, int n) {
  double ef1 = 0.0, emacro = 0.0;
  const unsigned lim = 1u << n;
  for (unsigned a = 0; a < lim; ++a) {
    for (unsigned b = 0; b < lim; ++b) {
      double prob = 1.0;
      int tp = 0, fp = 0, fn = 0, tn = 0;
      for (int i = 0; i < n; ++i) {
        const bool y = (a >> i) & 1u, p = (b >> i) & 1u;
        prob *= (y ? pi : 1 - pi) * (p ? pi : 1 - pi);
        tp += y && p;
        fp += !y && p;
        fn += y && !p;
        tn += !y && !p;
      }
      const double pos = (2 * tp + fp + fn) ? 2.0 * tp / (2 * tp + fp + fn) : 0.0;
      const double neg = (2 * tn + fp + fn) ? 2.0 * tn / (2 * tn + fp + fn) : 0.0;
      ef1 += prob * pos;
      emacro += prob * 0.5 * (pos + neg);
    }
  }
  return {ef1, emacro};
}

}  // namespace

TEST(Baseline, ZeroPrevalenceIsExactlyZeroF1) {
  const auto s = random_guess_baseline(0.0, 500, 20, 1);
  EXPECT_EQ(s.f1_mean, 0.0);
  EXPECT_EQ(s.f1_std, 0.0);
  // both classes are always negative: negative F1 is 1, Macro F1 0.5
  EXPECT_DOUBLE_EQ(s.macro_f1_mean, 0.5);
}

TEST(Baseline, MonteCarloMatchesExactEnumeration) {
  for (double pi : {0.1, 0.3, 0.5}) {
    const auto [ef1, emacro] = exact_expectation(pi, 8);
    const auto s = random_guess_baseline(pi, 8, 40000, 17);
    EXPECT_NEAR(s.f1_mean, ef1, 0.01) << pi;
    EXPECT_NEAR(s.macro_f1_mean, emacro, 0.01) << pi;
  }
}

TEST(Baseline, LargeSampleApproachesPrevalence) {
  const auto s = random_guess_baseline(0.409, 5000, 50, 3);
  EXPECT_NEAR(s.f1_mean, 0.41, 0.01);
  EXPECT_NEAR(s.macro_f1_mean, 0.5, 0.01);
  EXPECT_GT(s.f1_std, 0.0);
  EXPECT_EQ(s.f1_trials.size(), 50u);
}

TEST(Baseline, SameSeedSameTrials) {
  EXPECT_EQ(random_guess_baseline(0.2, 100, 5, 9).f1_trials, random_guess_baseline(0.2, 100, 5, 9).f1_trials);
  EXPECT_THROW(random_guess_baseline(1.5, 10, 1, 1), Error);
}

TEST(Baseline, MatchedAgainstFixedTruth) {
  std::vector<std::uint8_t> truth(4000, 0);
  for (std::size_t i = 0; i < truth.size(); i += 5) truth[i] = 1;
  const auto s = random_guess_against(truth, 0.2, 30, 4);
  EXPECT_NEAR(s.f1_mean, 0.2, 0.02);
}

TEST(Stats, MeanAndSampleStd) {
  const std::vector<double> xs{1.0, 2.0, 3.0, 4.0};
  EXPECT_DOUBLE_EQ(mean_of(xs), 2.5);
  EXPECT_NEAR(sample_std(xs), std::sqrt(5.0 / 3.0), 1e-12);
  const std::vector<double> one{3.0};
  EXPECT_EQ(sample_std(one), 0.0);
}

TEST(Flagging, PooledStandardDeviationRule) {
  // pooled = sqrt((0.03^2 + 0.04^2)/2) = 0.0354
  EXPECT_TRUE(beats_baseline(0.60, 0.03, 0.50, 0.04));
  EXPECT_FALSE(beats_baseline(0.53, 0.03, 0.50, 0.04));
  EXPECT_FALSE(beats_baseline(0.40, 0.0, 0.50, 0.0));
}

TEST(Scores, TierMetricChoice) {
  EXPECT_EQ(score_kind(Tier::Existence), ScoreKind::MacroF1);
  EXPECT_EQ(score_kind(Tier::Category), ScoreKind::MacroF1);
  EXPECT_EQ(score_kind(Tier::Semantics), ScoreKind::MacroF1);
  EXPECT_EQ(score_kind(Tier::Phase), ScoreKind::PositiveF1);
}

namespace {

FoldResult fake_fold(std::size_t fold, std::vector<std::optional<double>> scores) {
  FoldResult f;
  f.fold = fold;
  f.score = scores;
  f.f1 = scores;
  f.macro_f1 = scores;
  f.counts.resize(scores.size());
  f.test_prevalence.assign(scores.size(), 0.1 * (fold + 1));
  f.baseline_trials.assign(scores.size(), {0.4, 0.5});
  return f;
}

}  // namespace

TEST(Summary, MeanOverDefinedFoldsOnly) {
  std::vector<FoldResult> folds{fake_fold(0, {0.8, std::nullopt, 0.1, 0.2}), fake_fold(1, {0.6, 0.7, 0.3, 0.2}),
                                fake_fold(2, {0.7, std::nullopt, 0.2, 0.2})};
  const CvSummary s = summarize(Tier::Category, 3, folds);
  ASSERT_EQ(s.labels.size(), 4u);
  EXPECT_NEAR(s.labels[0].mean, 0.7, 1e-12);
  EXPECT_NEAR(s.labels[0].std, 0.1, 1e-12);
  EXPECT_EQ(s.labels[1].n_defined_folds, 1u);
  EXPECT_EQ(s.labels[1].n_undefined_folds, 2u);
  EXPECT_NEAR(s.labels[1].mean, 0.7, 1e-12);
  EXPECT_NEAR(s.labels[0].baseline_mean, 0.45, 1e-12);
  EXPECT_TRUE(s.labels[0].flagged);
  EXPECT_FALSE(s.labels[2].flagged);
}

TEST(Summary, FlagsOnlyLabelsClearOfTheBaseline) {
  // every fold at the baseline mean: nothing flagged
  std::vector<FoldResult> flat{fake_fold(0, {0.45, 0.45, 0.45, 0.45}), fake_fold(1, {0.45, 0.45, 0.45, 0.45})};
  for (const auto& l : summarize(Tier::Category, 2, flat).labels) EXPECT_FALSE(l.flagged) << l.name;
  // one label three pooled deviations above: baseline trials {0.4, 0.5} have sd 0.0707
  const double lift = 0.45 + 3 * std::sqrt(0.5 * (0.0 + 0.005));
  std::vector<FoldResult> one{fake_fold(0, {0.45, lift, 0.45, 0.45}), fake_fold(1, {0.45, lift, 0.45, 0.45})};
  const auto s = summarize(Tier::Category, 2, one);
  for (std::size_t l = 0; l < 4; ++l) EXPECT_EQ(s.labels[l].flagged, l == 1) << l;
}

TEST(CrossValidation, SingleFoldLeavesNoTrainingData) {
  RunConfig cfg;
  cfg.model.channels = 4;
  cfg.train.epochs = 1;
  SyntheticSpec spec;
  spec.prevalences = reference_prevalences();
  spec.n_recordings = 2;
  spec.duration_s = 6.0;
  const auto recs = make_synthetic_corpus(spec);
  const auto prepared = prepare_corpus(recs, cfg, std::nullopt);
  std::vector<std::string> speakers;
  for (const auto& r : recs) speakers.push_back(r.speaker_id);
  const FoldPlan plan = plan_folds(speakers, 1, 1);
  EXPECT_EQ(plan.folds[0].size(), 2u);
  EXPECT_THROW(cross_validate(prepared, Tier::Existence, plan, cfg.cv_config()), Error);
}

TEST(Report, JsonRoundTripAndValidation) {
  std::vector<FoldResult> folds{fake_fold(0, {0.8}), fake_fold(1, {0.6})};
  const CvSummary s = summarize(Tier::Existence, 2, folds);
  const json doc = report_json({s});
  EXPECT_TRUE(validate_report(doc).empty());
  EXPECT_EQ(report_json(summaries_from_json(doc)), doc);
  json broken = doc;
  broken[0].erase("labels");
  EXPECT_FALSE(validate_report(broken).empty());
  EXPECT_FALSE(validate_report(json::object()).empty());
  const std::string text = report_text({s});
  EXPECT_NE(text.find("gesture"), std::string::npos);
}

TEST(CrossValidation, SpeakerDisjointAndSummariesConsistent) {
  RunConfig cfg;
  cfg.model.channels = 4;
  cfg.train.epochs = 2;
  cfg.train.batch_size = 32;
  cfg.cv.baseline_trials = 5;
  SyntheticSpec spec;
  spec.prevalences = reference_prevalences();
  spec.n_recordings = 4;
  spec.n_speakers = 4;
  spec.duration_s = 20.0;
  const auto recs = make_synthetic_corpus(spec);
  const auto prepared = prepare_corpus(recs, cfg, std::nullopt);
  std::vector<std::string> speakers;
  for (const auto& r : recs) speakers.push_back(r.speaker_id);
  const FoldPlan plan = plan_folds(speakers, 2, 3);
  const CvResult res = cross_validate(prepared, Tier::Existence, plan, cfg.cv_config());
  ASSERT_EQ(res.folds.size(), 2u);
  std::set<std::string> seen;
  std::size_t frames = 0;
  for (const auto& f : res.folds) {
    for (const auto& s : f.test_speakers) EXPECT_TRUE(seen.insert(s).second) << s;
    frames += f.n_test_frames;
  }
  EXPECT_EQ(seen.size(), 4u);
  EXPECT_EQ(frames, 4u * 100u);
  std::vector<double> defined;
  for (const auto& f : res.folds)
    if (f.score[0]) defined.push_back(*f.score[0]);
  EXPECT_NEAR(res.summary.labels[0].mean, mean_of(defined), 1e-12);
  // deterministic given the same inputs
  const CvResult again = cross_validate(prepared, Tier::Existence, plan, cfg.cv_config());
  EXPECT_EQ(report_json({again.summary}), report_json({res.summary}));
}
