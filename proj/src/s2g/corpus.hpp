#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "s2g/common.hpp"

namespace s2g {

// ---------------------------------------------------------------------------
// Gesture-property schema
// ---------------------------------------------------------------------------

enum class Tier { Existence, Category, Semantics, Phase };

namespace schema {

inline constexpr std::size_t kPropertyCount = 13;

const std::vector<Tier>& tiers();  // fixed order: existence, category, semantics, phase
std::string_view tier_name(Tier tier);
std::optional<Tier> parse_tier(std::string_view name);
const std::vector<std::string>& labels(Tier tier);

// Offset of a property tier inside the 13-entry property vector
// (category, semantics, phase). Throws for the existence tier.
std::size_t property_offset(Tier tier);

// The 13 property label names in property-vector order.
const std::vector<std::string>& property_labels();

struct LabelRef {
  Tier tier;
  std::size_t index;  // index within the tier
};
std::optional<LabelRef> find_label(std::string_view tier_name, std::string_view label);
std::optional<LabelRef> find_label(std::string_view label);  // labels are unique across tiers

}  // namespace schema

// ---------------------------------------------------------------------------
// Recordings
// ---------------------------------------------------------------------------

struct Word {
  std::string token;
  double start_s = 0.0;
  double end_s = 0.0;
  bool operator==(const Word&) const = default;
};

struct IntervalAnnotation {
  std::string tier_name;
  std::string label;
  double start_s = 0.0;
  double end_s = 0.0;
  bool operator==(const IntervalAnnotation&) const = default;
};

struct AnnotatedRecording {
  std::string recording_id;
  std::string speaker_id;
  double sample_rate_hz = 16000.0;
  std::vector<float> audio;  // mono PCM
  std::vector<Word> words;
  std::vector<IntervalAnnotation> annotations;

  double duration_s() const { return static_cast<double>(audio.size()) / sample_rate_hz; }
  bool operator==(const AnnotatedRecording&) const = default;
};

struct CorpusIssue {
  std::string recording_id;
  std::string field;
  std::string message;
};

// Checks every invariant of a recording. An empty result means valid.
std::vector<CorpusIssue> validate_recording(const AnnotatedRecording& rec);

struct CorpusLoadResult {
  std::vector<AnnotatedRecording> recordings;  // valid recordings, sorted by id
  std::vector<CorpusIssue> issues;             // per-record problems, recoverable
  double fps = 5.0;
};

// Loads a corpus directory (manifest.json + per-recording files). A missing or
// unreadable manifest throws; problems inside one recording are collected in
// `issues` and that recording is skipped.
CorpusLoadResult load_corpus(const std::filesystem::path& dir);

void save_corpus(const std::filesystem::path& dir, const std::vector<AnnotatedRecording>& recordings,
                 double fps = 5.0);

// ---------------------------------------------------------------------------
// Frame grid
// ---------------------------------------------------------------------------

struct FrameGrid {
  double fps = 5.0;
  std::size_t n_frames = 0;
  std::vector<std::uint8_t> labels;     // n_frames x 13, property-vector order
  std::vector<std::uint8_t> existence;  // n_frames

  std::uint8_t label(std::size_t frame, std::size_t property) const {
    return labels[frame * schema::kPropertyCount + property];
  }
  // Binary target of one tier at a frame (existence tier yields one entry).
  std::vector<std::uint8_t> tier_targets(std::size_t frame, Tier tier) const;
  bool operator==(const FrameGrid&) const = default;
};

// Frame t spans [t/fps, (t+1)/fps). A label is on at t iff one of its intervals
// overlaps that span by a positive duration. existence[t] = OR of phase labels.
FrameGrid rasterize(const AnnotatedRecording& rec, double fps);

// OR-pools pairs of frames; used to relate grids at fps and fps/2.
FrameGrid downsample_or(const FrameGrid& grid);

enum class PrevalenceScope { AllFrames, GestureFrames };

std::optional<PrevalenceScope> parse_scope(std::string_view s);

// Fraction of frames on which each label is on, in schema order
// ("gesture" first, then the 13 property labels).
std::vector<std::pair<std::string, double>> prevalence(const std::vector<FrameGrid>& grids,
                                                       PrevalenceScope scope);

// ---------------------------------------------------------------------------
// Synthetic planted corpora
// ---------------------------------------------------------------------------

struct SyntheticSpec {
  std::map<std::string, double> prevalences;  // property label -> fraction of all frames
  std::size_t n_recordings = 4;
  std::size_t n_speakers = 0;  // 0: one speaker per recording
  double duration_s = 60.0;    // per recording
  std::uint64_t seed = 1;
  double sample_rate_hz = 16000.0;
  double fps = 5.0;
  double tone_amplitude = 0.05;
  double noise_std = 0.01;
  std::size_t min_interval_frames = 3;
  std::size_t max_interval_frames = 10;
  double filler_word_rate = 0.5;
};

SyntheticSpec synthetic_spec_from_json(const json& j);

// Reference relative frequencies of the gesture labels, keyed by property label.
std::map<std::string, double> reference_prevalences();

// Frequency of the tone planted for a property label (index in property order).
// Tones sit at the centres of alternating mel bands of the default 26-band
// front end so that every label lights up its own band.
double planted_tone_hz(std::size_t property_index, double sample_rate_hz);
std::string planted_keyword(std::string_view label);

// Each label is planted as frame-aligned intervals covering (in expectation)
// the requested fraction of all frames; while active, the label's tone is
// mixed into the audio and its keyword is spoken at the first free word slot.
std::vector<AnnotatedRecording> make_synthetic_corpus(const SyntheticSpec& spec);

}  // namespace s2g
