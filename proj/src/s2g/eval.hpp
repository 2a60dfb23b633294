#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "s2g/metrics.hpp"
#include "s2g/models.hpp"
#include "s2g/windows.hpp"

namespace s2g {

// Which score a tier is reported with: two-class Macro F1 for existence,
// category and semantics; positive-class F1 for phase.
enum class ScoreKind { MacroF1, PositiveF1 };
ScoreKind score_kind(Tier tier);
double score(ScoreKind kind, const ConfusionCounts& c);
std::string_view score_name(ScoreKind kind);

// ---------------------------------------------------------------------------
// prevalence-matched random guessing

enum class BaselineMode {
  Independent,  // labels and guesses both drawn at the prevalence
  Matched,      // guesses drawn at the prevalence against supplied labels
};
std::string_view baseline_mode_name(BaselineMode mode);

struct BaselineStats {
  double f1_mean = 0.0;
  double f1_std = 0.0;
  double macro_f1_mean = 0.0;
  double macro_f1_std = 0.0;
  std::vector<double> f1_trials;
  std::vector<double> macro_f1_trials;
};

BaselineStats random_guess_baseline(double prevalence, std::size_t n_frames, std::size_t n_trials,
                                    std::uint64_t seed);
BaselineStats random_guess_against(std::span<const std::uint8_t> truth, double prevalence, std::size_t n_trials,
                                   std::uint64_t seed);

struct LabelBaseline {
  std::string name;
  double prevalence = 0.0;
  BaselineStats stats;
};
std::vector<LabelBaseline> random_guess_baseline(const std::vector<std::pair<std::string, double>>& prevalences,
                                                 std::size_t n_frames, std::size_t n_trials, std::uint64_t seed);

double mean_of(std::span<const double> xs);
double sample_std(std::span<const double> xs);  // n-1 denominator, 0 for n < 2

// ---------------------------------------------------------------------------
// cross-validation

struct CvConfig {
  TrainConfig train;
  DilatedConvSpec spec;
  WindowSpec window;
  std::size_t baseline_trials = 50;
  std::uint64_t baseline_seed = 12345;
};

struct FoldResult {
  std::size_t fold = 0;
  std::vector<std::string> test_speakers;
  std::size_t n_train_examples = 0;
  std::size_t n_test_frames = 0;
  std::vector<ConfusionCounts> counts;        // per label
  std::vector<std::optional<double>> f1;      // positive-class, undefined without test positives
  std::vector<std::optional<double>> macro_f1;
  std::vector<std::optional<double>> score;   // per the tier's ScoreKind
  std::vector<double> test_prevalence;
  std::vector<std::vector<double>> baseline_trials;  // per label, matched random-guess scores
};

struct LabelSummary {
  std::string name;
  double mean = 0.0;
  double std = 0.0;
  double baseline_mean = 0.0;
  double baseline_std = 0.0;
  double prevalence = 0.0;
  std::size_t n_defined_folds = 0;
  std::size_t n_undefined_folds = 0;
  bool flagged = false;
};

struct CvSummary {
  Tier tier = Tier::Existence;
  ScoreKind metric = ScoreKind::MacroF1;
  BaselineMode baseline_mode = BaselineMode::Matched;
  std::size_t k = 0;
  std::vector<LabelSummary> labels;
};

struct CvResult {
  std::vector<FoldResult> folds;
  CvSummary summary;
};

// Flag rule: mean beats baseline_mean by more than one pooled standard
// deviation, pooled = sqrt((std^2 + baseline_std^2) / 2).
bool beats_baseline(double mean, double std, double baseline_mean, double baseline_std);

// Trains a fresh model per fold on the training speakers and scores the test
// speakers at the configured threshold. Folds without a positive test frame
// for a label leave that label undefined for the fold.
CvResult cross_validate(const std::vector<PreparedRecording>& recordings, Tier tier, const FoldPlan& plan,
                        const CvConfig& config);

CvSummary summarize(Tier tier, std::size_t k, const std::vector<FoldResult>& folds);

// ---------------------------------------------------------------------------
// reports

json report_json(const std::vector<CvSummary>& summaries);
std::string report_text(const std::vector<CvSummary>& summaries);

// Problems found in a report document; empty means it conforms.
std::vector<std::string> validate_report(const json& doc);
std::vector<CvSummary> summaries_from_json(const json& doc);

json fold_results_json(const std::vector<FoldResult>& folds, Tier tier);

}  // namespace s2g
