#include "s2g/windows.hpp"

#include <algorithm>
#include <random>
#include <set>

namespace s2g {

WindowSpec WindowSpec::from_json(const json& j) {
  WindowSpec w;
  w.past_frames = j.value("past_frames", w.past_frames);
  w.future_frames = j.value("future_frames", w.future_frames);
  return w;
}

Matrix window_at(const FrameFeatures& features, std::size_t center, const WindowSpec& spec) {
  const std::size_t n = features.n_frames();
  const std::size_t da = features.audio.cols();
  const std::size_t dt = features.text.cols();
  Matrix w(spec.length(), da + dt);
  for (std::size_t r = 0; r < spec.length(); ++r) {
    const auto offset = static_cast<std::ptrdiff_t>(center) + static_cast<std::ptrdiff_t>(r) -
                        static_cast<std::ptrdiff_t>(spec.past_frames);
    const auto src = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(offset, 0, static_cast<std::ptrdiff_t>(n) - 1));
    auto row = w.row(r);
    std::copy(features.audio.row(src).begin(), features.audio.row(src).end(), row.begin());
    std::copy(features.text.row(src).begin(), features.text.row(src).end(), row.begin() + static_cast<std::ptrdiff_t>(da));
  }
  return w;
}

std::vector<Matrix> all_windows(const FrameFeatures& features, const WindowSpec& spec) {
  std::vector<Matrix> out;
  out.reserve(features.n_frames());
  for (std::size_t t = 0; t < features.n_frames(); ++t) out.push_back(window_at(features, t, spec));
  return out;
}

FrameFilter default_filter(Tier tier) { return tier == Tier::Existence ? FrameFilter::All : FrameFilter::GestureOnly; }

std::vector<Example> build_examples(const std::vector<PreparedRecording>& recordings, const WindowSpec& spec,
                                    Tier tier, FrameFilter filter) {
  std::vector<const PreparedRecording*> order;
  for (const auto& r : recordings) order.push_back(&r);
  std::stable_sort(order.begin(), order.end(),
                   [](const auto* a, const auto* b) { return a->recording_id < b->recording_id; });

  std::vector<Example> out;
  for (const auto* rec : order) {
    if (rec->grid.n_frames != rec->features.n_frames())
      fail(ErrorCode::Data, rec->recording_id + ": grid has " + std::to_string(rec->grid.n_frames) +
                                " frames but features have " + std::to_string(rec->features.n_frames()));
    for (std::size_t t = 0; t < rec->grid.n_frames; ++t) {
      if (filter == FrameFilter::GestureOnly && !rec->grid.existence[t]) continue;
      Example ex;
      ex.features = window_at(rec->features, t, spec);
      ex.target = rec->grid.tier_targets(t, tier);
      ex.recording_id = rec->recording_id;
      ex.speaker_id = rec->speaker_id;
      ex.center_frame = t;
      out.push_back(std::move(ex));
    }
  }
  return out;
}

std::size_t FoldPlan::fold_of(const std::string& speaker) const {
  for (std::size_t f = 0; f < folds.size(); ++f)
    if (std::find(folds[f].begin(), folds[f].end(), speaker) != folds[f].end()) return f;
  fail(ErrorCode::Data, "speaker '" + speaker + "' is not in the fold plan");
}

FoldPlan plan_folds(std::vector<std::string> speakers, std::size_t k, std::uint64_t seed) {
  std::sort(speakers.begin(), speakers.end());
  speakers.erase(std::unique(speakers.begin(), speakers.end()), speakers.end());
  require(k >= 1, ErrorCode::InvalidArgument, "k must be >= 1");
  if (k > speakers.size())
    fail(ErrorCode::InvalidArgument, "k=" + std::to_string(k) + " exceeds the number of speakers (" +
                                         std::to_string(speakers.size()) + ")");
  std::mt19937_64 rng(seed);
  // Fisher-Yates with our own index draws so the plan does not depend on the
  // standard library's shuffle implementation.
  for (std::size_t i = speakers.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(speakers[i - 1], speakers[j]);
  }
  FoldPlan plan;
  plan.folds.resize(k);
  for (std::size_t i = 0; i < speakers.size(); ++i) plan.folds[i % k].push_back(speakers[i]);
  return plan;
}

FoldSplit split_examples(const FoldPlan& plan, std::size_t fold, const std::vector<Example>& examples) {
  require(fold < plan.k(), ErrorCode::InvalidArgument, "fold index out of range");
  const std::set<std::string> test_speakers(plan.folds[fold].begin(), plan.folds[fold].end());
  FoldSplit split;
  for (std::size_t i = 0; i < examples.size(); ++i)
    (test_speakers.count(examples[i].speaker_id) ? split.test : split.train).push_back(i);
  return split;
}

}  // namespace s2g
