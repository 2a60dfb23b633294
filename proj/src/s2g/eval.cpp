#include "s2g/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace s2g {

ScoreKind score_kind(Tier tier) { return tier == Tier::Phase ? ScoreKind::PositiveF1 : ScoreKind::MacroF1; }

double score(ScoreKind kind, const ConfusionCounts& c) { return kind == ScoreKind::MacroF1 ? macro_f1(c) : f1(c); }

std::string_view score_name(ScoreKind kind) { return kind == ScoreKind::MacroF1 ? "macro_f1" : "f1"; }

std::string_view baseline_mode_name(BaselineMode mode) {
  return mode == BaselineMode::Matched ? "matched" : "independent";
}

double mean_of(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double sample_std(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

namespace {

void finish(BaselineStats& s) {
  s.f1_mean = mean_of(s.f1_trials);
  s.f1_std = sample_std(s.f1_trials);
  s.macro_f1_mean = mean_of(s.macro_f1_trials);
  s.macro_f1_std = sample_std(s.macro_f1_trials);
}

}  // namespace

BaselineStats random_guess_baseline(double prevalence, std::size_t n_frames, std::size_t n_trials,
                                    std::uint64_t seed) {
  require(prevalence >= 0.0 && prevalence <= 1.0, ErrorCode::InvalidArgument, "prevalence outside [0,1]");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  BaselineStats s;
  for (std::size_t trial = 0; trial < n_trials; ++trial) {
    ConfusionCounts c;
    for (std::size_t i = 0; i < n_frames; ++i) {
      const bool y = u(rng) < prevalence;
      const bool p = u(rng) < prevalence;
      c.tp += y && p;
      c.fp += !y && p;
      c.fn += y && !p;
      c.tn += !y && !p;
    }
    s.f1_trials.push_back(f1(c));
    s.macro_f1_trials.push_back(macro_f1(c));
  }
  finish(s);
  return s;
}

BaselineStats random_guess_against(std::span<const std::uint8_t> truth, double prevalence, std::size_t n_trials,
                                   std::uint64_t seed) {
  require(prevalence >= 0.0 && prevalence <= 1.0, ErrorCode::InvalidArgument, "prevalence outside [0,1]");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  BaselineStats s;
  for (std::size_t trial = 0; trial < n_trials; ++trial) {
    ConfusionCounts c;
    for (std::uint8_t y : truth) {
      const bool p = u(rng) < prevalence;
      c.tp += y && p;
      c.fp += !y && p;
      c.fn += y && !p;
      c.tn += !y && !p;
    }
    s.f1_trials.push_back(f1(c));
    s.macro_f1_trials.push_back(macro_f1(c));
  }
  finish(s);
  return s;
}

std::vector<LabelBaseline> random_guess_baseline(const std::vector<std::pair<std::string, double>>& prevalences,
                                                 std::size_t n_frames, std::size_t n_trials, std::uint64_t seed) {
  std::vector<LabelBaseline> out;
  for (std::size_t i = 0; i < prevalences.size(); ++i) {
    const auto& [name, pi] = prevalences[i];
    out.push_back({name, pi, random_guess_baseline(pi, n_frames, n_trials, seed + 7919 * i)});
  }
  return out;
}

bool beats_baseline(double mean, double std, double baseline_mean, double baseline_std) {
  const double pooled = std::sqrt(0.5 * (std * std + baseline_std * baseline_std));
  return mean - baseline_mean > pooled;
}

// ---------------------------------------------------------------------------

CvResult cross_validate(const std::vector<PreparedRecording>& recordings, Tier tier, const FoldPlan& plan,
                        const CvConfig& config) {
  {
    std::set<std::string> planned;
    for (const auto& f : plan.folds) planned.insert(f.begin(), f.end());
    for (const auto& r : recordings)
      if (!planned.count(r.speaker_id))
        fail(ErrorCode::InvalidArgument, "speaker '" + r.speaker_id + "' of " + r.recording_id + " is not in the fold plan");
  }
  const std::vector<Example> examples = build_examples(recordings, config.window, tier, default_filter(tier));
  const std::size_t n_labels = schema::labels(tier).size();
  const ScoreKind kind = score_kind(tier);

  CvResult result;
  for (std::size_t fold = 0; fold < plan.k(); ++fold) {
    const FoldSplit split = split_examples(plan, fold, examples);
    if (split.train.empty())
      fail(ErrorCode::Data, "fold " + std::to_string(fold) + " has an empty training set");
    std::vector<Example> train_set;
    train_set.reserve(split.train.size());
    for (auto i : split.train) train_set.push_back(examples[i]);

    TrainConfig tc = config.train;
    tc.seed = config.train.seed + fold;
    const TrainResult trained = train(train_set, {}, tc, config.spec, config.window, tier);

    FoldResult fr;
    fr.fold = fold;
    fr.test_speakers = plan.folds[fold];
    fr.n_train_examples = train_set.size();
    fr.n_test_frames = split.test.size();
    fr.counts.assign(n_labels, {});
    std::vector<std::vector<std::uint8_t>> truth(n_labels);
    for (auto i : split.test) {
      const Example& ex = examples[i];
      const auto p = forward(trained.params, ex.features);
      for (std::size_t l = 0; l < n_labels; ++l) {
        const std::uint8_t y = ex.target[l];
        const std::uint8_t yhat = p[l] >= config.train.threshold;
        fr.counts[l] += confusion(std::span(&y, 1), std::span(&yhat, 1));
        truth[l].push_back(y);
      }
    }
    for (std::size_t l = 0; l < n_labels; ++l) {
      const auto& c = fr.counts[l];
      const bool defined = c.tp + c.fn > 0;
      fr.f1.push_back(defined ? std::optional(f1(c)) : std::nullopt);
      fr.macro_f1.push_back(defined ? std::optional(macro_f1(c)) : std::nullopt);
      fr.score.push_back(defined ? std::optional(score(kind, c)) : std::nullopt);
      const double pi = fr.n_test_frames ? static_cast<double>(c.tp + c.fn) / static_cast<double>(fr.n_test_frames) : 0.0;
      fr.test_prevalence.push_back(pi);
      const BaselineStats b =
          random_guess_against(truth[l], pi, config.baseline_trials, config.baseline_seed + 1000 * fold + l);
      fr.baseline_trials.push_back(kind == ScoreKind::MacroF1 ? b.macro_f1_trials : b.f1_trials);
    }
    result.folds.push_back(std::move(fr));
  }
  result.summary = summarize(tier, plan.k(), result.folds);
  return result;
}

CvSummary summarize(Tier tier, std::size_t k, const std::vector<FoldResult>& folds) {
  CvSummary s;
  s.tier = tier;
  s.metric = score_kind(tier);
  s.baseline_mode = BaselineMode::Matched;
  s.k = k;
  const auto& names = schema::labels(tier);
  for (std::size_t l = 0; l < names.size(); ++l) {
    LabelSummary ls;
    ls.name = names[l];
    std::vector<double> scores, baseline, prev;
    for (const auto& f : folds) {
      if (!f.score.at(l)) {
        ++ls.n_undefined_folds;
        continue;
      }
      scores.push_back(*f.score[l]);
      baseline.insert(baseline.end(), f.baseline_trials[l].begin(), f.baseline_trials[l].end());
      prev.push_back(f.test_prevalence[l]);
    }
    ls.n_defined_folds = scores.size();
    ls.mean = mean_of(scores);
    ls.std = sample_std(scores);
    ls.baseline_mean = mean_of(baseline);
    ls.baseline_std = sample_std(baseline);
    ls.prevalence = mean_of(prev);
    ls.flagged = ls.n_defined_folds > 0 && beats_baseline(ls.mean, ls.std, ls.baseline_mean, ls.baseline_std);
    s.labels.push_back(ls);
  }
  return s;
}

// ---------------------------------------------------------------------------
// reports

json report_json(const std::vector<CvSummary>& summaries) {
  json doc = json::array();
  for (const auto& s : summaries) {
    json labels = json::array();
    for (const auto& l : s.labels)
      labels.push_back({{"name", l.name},
                        {"mean", l.mean},
                        {"std", l.std},
                        {"baseline_mean", l.baseline_mean},
                        {"baseline_std", l.baseline_std},
                        {"prevalence", l.prevalence},
                        {"n_defined_folds", l.n_defined_folds},
                        {"n_undefined_folds", l.n_undefined_folds},
                        {"flagged", l.flagged}});
    doc.push_back({{"tier", std::string(schema::tier_name(s.tier))},
                   {"metric", std::string(score_name(s.metric))},
                   {"baseline_mode", std::string(baseline_mode_name(s.baseline_mode))},
                   {"k", s.k},
                   {"labels", labels}});
  }
  return doc;
}

std::vector<std::string> validate_report(const json& doc) {
  std::vector<std::string> errs;
  if (!doc.is_array()) return {"report must be an array of tier objects"};
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const json& t = doc[i];
    const std::string at = "[" + std::to_string(i) + "]";
    if (!t.is_object()) {
      errs.push_back(at + " is not an object");
      continue;
    }
    if (!t.contains("tier") || !t["tier"].is_string() || !schema::parse_tier(t["tier"].get<std::string>())) {
      errs.push_back(at + ".tier missing or unknown");
      continue;
    }
    if (!t.contains("labels") || !t["labels"].is_array()) {
      errs.push_back(at + ".labels missing");
      continue;
    }
    const auto tier = *schema::parse_tier(t["tier"].get<std::string>());
    const auto& expected = schema::labels(tier);
    if (t["labels"].size() != expected.size()) errs.push_back(at + ".labels has the wrong number of entries");
    for (std::size_t j = 0; j < t["labels"].size(); ++j) {
      const json& l = t["labels"][j];
      const std::string lat = at + ".labels[" + std::to_string(j) + "]";
      if (!l.is_object()) {
        errs.push_back(lat + " is not an object");
        continue;
      }
      if (!l.contains("name") || !l["name"].is_string()) {
        errs.push_back(lat + ".name missing");
      } else if (j < expected.size() && l["name"].get<std::string>() != expected[j]) {
        errs.push_back(lat + ".name is not '" + expected[j] + "'");
      }
      for (const char* key : {"mean", "std", "baseline_mean", "baseline_std"}) {
        if (!l.contains(key) || !l[key].is_number()) {
          errs.push_back(lat + "." + key + " missing");
          continue;
        }
        const double v = l[key].get<double>();
        if (!(v >= 0.0 && v <= 1.0)) errs.push_back(lat + "." + key + " outside [0,1]");
      }
      if (!l.contains("n_defined_folds") || !l["n_defined_folds"].is_number_unsigned())
        errs.push_back(lat + ".n_defined_folds missing");
      if (!l.contains("flagged") || !l["flagged"].is_boolean()) errs.push_back(lat + ".flagged missing");
    }
  }
  return errs;
}

std::vector<CvSummary> summaries_from_json(const json& doc) {
  const auto errs = validate_report(doc);
  if (!errs.empty()) fail(ErrorCode::Parse, "invalid report: " + errs.front());
  std::vector<CvSummary> out;
  for (const auto& t : doc) {
    CvSummary s;
    s.tier = *schema::parse_tier(t["tier"].get<std::string>());
    s.metric = t.value("metric", "macro_f1") == "f1" ? ScoreKind::PositiveF1 : ScoreKind::MacroF1;
    s.baseline_mode = t.value("baseline_mode", "matched") == "independent" ? BaselineMode::Independent
                                                                           : BaselineMode::Matched;
    s.k = t.value("k", std::size_t{0});
    for (const auto& l : t["labels"]) {
      LabelSummary ls;
      ls.name = l["name"].get<std::string>();
      ls.mean = l["mean"].get<double>();
      ls.std = l["std"].get<double>();
      ls.baseline_mean = l["baseline_mean"].get<double>();
      ls.baseline_std = l["baseline_std"].get<double>();
      ls.prevalence = l.value("prevalence", 0.0);
      ls.n_defined_folds = l["n_defined_folds"].get<std::size_t>();
      ls.n_undefined_folds = l.value("n_undefined_folds", std::size_t{0});
      ls.flagged = l["flagged"].get<bool>();
      s.labels.push_back(ls);
    }
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

std::string pct(double v, int decimals = 0) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f%%", decimals, 100.0 * v);
  return buf;
}

std::string pad(std::string s, std::size_t w) {
  if (s.size() < w) s.append(w - s.size(), ' ');
  return s;
}

}  // namespace

std::string report_text(const std::vector<CvSummary>& summaries) {
  std::ostringstream out;
  for (const auto& s : summaries) {
    const std::size_t w0 = 20, w = 18;
    out << "tier: " << schema::tier_name(s.tier) << " [" << (s.metric == ScoreKind::MacroF1 ? "Macro F1" : "F1")
        << "], k=" << s.k << ", baseline: " << baseline_mode_name(s.baseline_mode) << " random guess\n";
    out << pad("Label", w0);
    for (const auto& l : s.labels) out << pad(l.name, w);
    out << "\n" << pad("Relative frequency", w0);
    for (const auto& l : s.labels) out << pad(pct(l.prevalence, 1), w);
    out << "\n" << pad("RandomGuess", w0);
    for (const auto& l : s.labels) out << pad(pct(l.baseline_mean) + " ± " + pct(l.baseline_std, 1), w + 1);
    out << "\n" << pad("Model", w0);
    for (const auto& l : s.labels) {
      std::string cell = l.n_defined_folds ? pct(l.mean) + " ± " + pct(l.std, 1) : "undefined";
      if (l.flagged) cell += " *";
      out << pad(cell, w + 1);
    }
    out << "\n";
    bool any_undefined = false;
    for (const auto& l : s.labels) any_undefined |= l.n_undefined_folds > 0;
    if (any_undefined) {
      out << "undefined folds (no positive test frames):";
      for (const auto& l : s.labels)
        if (l.n_undefined_folds) out << " " << l.name << "=" << l.n_undefined_folds;
      out << "\n";
    }
    out << "* beats the random baseline by more than one pooled std\n\n";
  }
  return out.str();
}

json fold_results_json(const std::vector<FoldResult>& folds, Tier tier) {
  json out = json::array();
  const auto& names = schema::labels(tier);
  for (const auto& f : folds) {
    json labels = json::array();
    for (std::size_t l = 0; l < names.size(); ++l) {
      const auto& c = f.counts[l];
      json e{{"name", names[l]}, {"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn},
             {"baseline_mean", mean_of(f.baseline_trials[l])}};
      e["score"] = f.score[l] ? json(*f.score[l]) : json(nullptr);
      labels.push_back(e);
    }
    out.push_back({{"fold", f.fold}, {"test_speakers", f.test_speakers}, {"n_train_examples", f.n_train_examples},
                   {"n_test_frames", f.n_test_frames}, {"labels", labels}});
  }
  return out;
}

}  // namespace s2g
