#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "s2g/corpus.hpp"
#include "s2g/features.hpp"

namespace s2g {

struct WindowSpec {
  std::size_t past_frames = 5;
  std::size_t future_frames = 5;

  std::size_t length() const { return past_frames + 1 + future_frames; }
  json to_json() const { return {{"past_frames", past_frames}, {"future_frames", future_frames}}; }
  static WindowSpec from_json(const json& j);
  bool operator==(const WindowSpec&) const = default;
};

struct Example {
  Matrix features;                  // window.length() x (d_audio + d_text)
  std::vector<std::uint8_t> target;  // tier labels of the centre frame
  std::string recording_id;
  std::string speaker_id;
  std::size_t center_frame = 0;
};

enum class FrameFilter { All, GestureOnly };

// Everything the example builder needs about one recording.
struct PreparedRecording {
  std::string recording_id;
  std::string speaker_id;
  FrameGrid grid;
  FrameFeatures features;
};

// Window of feature rows centred on `center`, edge-replicated at the borders.
Matrix window_at(const FrameFeatures& features, std::size_t center, const WindowSpec& spec);

// All frames of a feature sequence stacked into a window each (prediction input).
std::vector<Matrix> all_windows(const FrameFeatures& features, const WindowSpec& spec);

FrameFilter default_filter(Tier tier);

// One example per retained frame, ordered by (recording_id, frame).
std::vector<Example> build_examples(const std::vector<PreparedRecording>& recordings, const WindowSpec& spec,
                                    Tier tier, FrameFilter filter);

struct FoldPlan {
  std::vector<std::vector<std::string>> folds;  // speaker ids per fold

  std::size_t k() const { return folds.size(); }
  std::size_t fold_of(const std::string& speaker) const;  // throws if unknown
};

// Speakers shuffled by seed, then dealt round-robin into k folds.
FoldPlan plan_folds(std::vector<std::string> speakers, std::size_t k, std::uint64_t seed);

struct FoldSplit {
  std::vector<std::size_t> train;  // example indices
  std::vector<std::size_t> test;
};

FoldSplit split_examples(const FoldPlan& plan, std::size_t fold, const std::vector<Example>& examples);

}  // namespace s2g
