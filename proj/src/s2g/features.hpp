#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "s2g/common.hpp"
#include "s2g/corpus.hpp"

namespace s2g {

struct AudioFeatureConfig {
  double sample_rate_hz = 16000.0;
  double window_length_s = 0.025;
  double hop_s = 0.010;
  std::size_t n_mels = 26;
  double fmin_hz = 20.0;
  double fmax_hz = 0.0;  // 0: Nyquist
  double log_floor = 1e-10;

  double effective_fmax() const { return fmax_hz > 0.0 ? fmax_hz : sample_rate_hz / 2.0; }
  std::size_t window_samples() const;
  std::size_t hop_samples() const;
  std::size_t fft_size() const;  // next power of two >= window_samples
  void validate() const;

  json to_json() const;
  static AudioFeatureConfig from_json(const json& j, double sample_rate_hz);
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// n_mels + 2 edge frequencies equally spaced on the mel scale over [fmin, fmax];
// band k rises from edge k, peaks at edge k+1 and falls to edge k+2.
std::vector<double> mel_band_edges_hz(const AudioFeatureConfig& cfg);

// n_mels x (fft_size/2 + 1) triangular filterbank.
Matrix mel_filterbank(const AudioFeatureConfig& cfg);

struct SpectralFrames {
  Matrix values;  // n_spec x n_mels
  double hop_s = 0.0;
  double window_s = 0.0;
  double duration_s = 0.0;
};

// Hann-windowed power spectra through the mel filterbank, natural log with a
// floor. Frame i covers samples [i*hop, i*hop + window).
SpectralFrames log_mel(std::span<const float> audio, const AudioFeatureConfig& cfg);

// Mean of the spectral frames whose centres fall in each [t/fps, (t+1)/fps);
// bins that receive no centre copy the nearest non-empty bin.
Matrix pool_to_fps(const SpectralFrames& spec, double fps);

// Maps tokens to fixed-size vectors. Implementations must be deterministic for
// a fixed state; the pipeline only calls a provider from one thread at a time.
class TextEmbeddingProvider {
 public:
  virtual ~TextEmbeddingProvider() = default;
  virtual std::size_t dim() const = 0;
  virtual std::string name() const = 0;
  virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& tokens) const = 0;
};

// Signed feature hashing of boundary-marked character trigrams, L2-normalised.
// Stateless and safe to share between threads.
class HashingTextProvider final : public TextEmbeddingProvider {
 public:
  explicit HashingTextProvider(std::size_t dim = 32) : dim_(dim) {}
  std::size_t dim() const override { return dim_; }
  std::string name() const override { return "hashing-trigram-" + std::to_string(dim_); }
  std::vector<std::vector<double>> embed(const std::vector<std::string>& tokens) const override;

 private:
  std::size_t dim_;
};

// Row t holds the embedding of the word whose interval contains the centre of
// frame t (later-starting word wins on overlap); uncovered frames are zero.
Matrix align_text(const std::vector<Word>& words, const TextEmbeddingProvider& provider, std::size_t n_frames,
                  double fps);

struct FrameFeatures {
  double fps = 5.0;
  Matrix audio;  // n_frames x d_audio
  Matrix text;   // n_frames x d_text

  std::size_t n_frames() const { return audio.rows(); }
  std::size_t dim() const { return audio.cols() + text.cols(); }
  // Row t: [audio row t, text row t].
  std::vector<double> frame(std::size_t t) const;
  bool operator==(const FrameFeatures&) const = default;
};

FrameFeatures extract_features(const AnnotatedRecording& rec, const AudioFeatureConfig& cfg,
                               const TextEmbeddingProvider& provider, double fps);

std::string feature_config_hash(const AudioFeatureConfig& cfg, const TextEmbeddingProvider& provider, double fps);

// Feature cache: blob header {kind, n_frames, d_audio, d_text, fps, config_hash},
// payload = audio block then text block, row-major float32.
void save_feature_cache(const std::filesystem::path& path, const FrameFeatures& f, const std::string& config_hash);
FrameFeatures load_feature_cache(const std::filesystem::path& path, const std::string& expected_hash);

}  // namespace s2g
