#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "s2g/corpus.hpp"
#include "s2g/features.hpp"

namespace s2g::test {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("s2g-test-" + tag + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

inline AnnotatedRecording silent_recording(const std::string& id, double seconds, double sr = 16000.0) {
  AnnotatedRecording r;
  r.recording_id = id;
  r.speaker_id = "spk_" + id;
  r.sample_rate_hz = sr;
  r.audio.assign(static_cast<std::size_t>(std::llround(seconds * sr)), 0.0f);
  return r;
}

inline FrameFeatures random_features(std::size_t n, std::size_t da, std::size_t dt, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  FrameFeatures f;
  f.audio = Matrix(n, da);
  f.text = Matrix(n, dt);
  for (double& v : f.audio.data()) v = g(rng);
  for (double& v : f.text.data()) v = g(rng);
  return f;
}

}  // namespace s2g::test
