#pragma once

// One declarative JSON document configures every command. Missing sections
// and keys take defaults; unknown sections are rejected.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <vector>
#include <string>

#include "s2g/corpus.hpp"
#include "s2g/eval.hpp"
#include "s2g/features.hpp"
#include "s2g/flow.hpp"
#include "s2g/models.hpp"
#include "s2g/pipeline.hpp"
#include "s2g/windows.hpp"

namespace s2g {

struct TextProviderConfig {
  std::string kind = "hashing";
  std::size_t dim = 32;

  std::unique_ptr<TextEmbeddingProvider> make() const;
};

struct CvSettings {
  std::size_t k = 5;
  std::uint64_t seed = 1;  // fold assignment
  std::size_t baseline_trials = 50;
  std::uint64_t baseline_seed = 12345;
};

struct BaselineSettings {
  std::size_t n_frames = 5000;
  std::size_t trials = 200;
  std::uint64_t seed = 1;
};

struct RunConfig {
  double fps = 5.0;
  AudioFeatureConfig audio;
  TextProviderConfig text_provider;
  WindowSpec window;
  DilatedConvSpec model;
  TrainConfig train;
  FlowSpec flow;
  FlowTrainConfig flow_train;
  CvSettings cv;
  BaselineSettings baseline;
  PipelineConfig pipeline;
  SyntheticSpec synth = [] {
    SyntheticSpec s;
    s.prevalences = reference_prevalences();
    return s;
  }();

  // Fully resolved document; its hash identifies the configuration.
  json to_json() const;
  static RunConfig from_json(const json& j);
  std::string hash() const { return json_hash(to_json()); }

  // Feature settings for a corpus recorded at `sample_rate_hz`.
  AudioFeatureConfig audio_for(double sample_rate_hz) const;
  CvConfig cv_config() const;
};

RunConfig load_config(const std::filesystem::path& path);

// Rasterised labels and features for each recording. Features are rounded to
// float32 so that cached and freshly computed values agree exactly. With a
// cache directory, features are read from and written to
// <cache_dir>/<feature config hash>/<recording id>-<content hash>.feat.
std::vector<PreparedRecording> prepare_corpus(const std::vector<AnnotatedRecording>& recordings,
                                              const RunConfig& config,
                                              const std::optional<std::filesystem::path>& cache_dir);

std::filesystem::path feature_cache_path(const std::filesystem::path& cache_dir, const AnnotatedRecording& rec,
                                         const std::string& config_hash);

json synthetic_spec_to_json(const SyntheticSpec& s);

}  // namespace s2g
