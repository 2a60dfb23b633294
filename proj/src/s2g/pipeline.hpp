#pragma once

// Speech -> gesture existence -> gesture properties -> conditioned pose.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "s2g/features.hpp"
#include "s2g/flow.hpp"
#include "s2g/models.hpp"
#include "s2g/windows.hpp"

namespace s2g {

struct PipelineConfig {
  double existence_threshold = 0.5;  // clamped to [0, 1]
  double property_threshold = 0.5;   // clamped to [0, 1]
  bool soft_properties = false;      // feed probabilities instead of bits to the flow
  std::uint64_t seed = 1;
  double fps = 5.0;
  WindowSpec window;
  AudioFeatureConfig audio;

  std::filesystem::path existence_checkpoint;
  std::filesystem::path category_checkpoint;
  std::filesystem::path semantics_checkpoint;
  std::filesystem::path phase_checkpoint;
  std::filesystem::path flow_checkpoint;

  json to_json() const;
  static PipelineConfig from_json(const json& j, double sample_rate_hz);
};

struct PipelineModels {
  ModelParams existence;
  ModelParams category;
  ModelParams semantics;
  ModelParams phase;
  FlowParams flow;
};

PipelineModels load_pipeline_models(const PipelineConfig& config);

// Throws Incompatible when a model has the wrong tier, window or input width,
// or when the flow's conditioning width disagrees with the features.
void check_pipeline(const PipelineModels& models, const PipelineConfig& config, std::size_t d_audio,
                    std::size_t d_text);

struct FrameRecord {
  std::size_t frame = 0;
  double time_s = 0.0;
  double existence_prob = 0.0;
  bool gesturing = false;
  std::vector<double> property_probs;       // 13 entries on gesturing frames, else empty
  std::vector<std::uint8_t> property_bits;  // likewise
  std::optional<std::vector<double>> pose;  // present iff gesturing

  json to_json() const;
};

std::vector<FrameRecord> run(const FrameFeatures& features, const PipelineModels& models,
                             const PipelineConfig& config);
std::vector<FrameRecord> run(const AnnotatedRecording& recording, const PipelineModels& models,
                             const PipelineConfig& config, const TextEmbeddingProvider& provider);

// Fraction of records with gesturing = true. Throws on empty input.
double gesture_frequency(const std::vector<FrameRecord>& records);

inline constexpr const char* kFramesSchema = "s2g.frames/1";

// One JSON object per line; each carries the schema tag and recording id.
std::string frames_jsonl(const std::vector<FrameRecord>& records, const std::string& recording_id);

}  // namespace s2g
