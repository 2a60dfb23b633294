#pragma once

// Shared plumbing for the s2g core: error type, a dense row-major matrix,
// stable hashing, and the "JSON header line + float32 payload" container
// used by checkpoints and feature caches.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace s2g {

using json = nlohmann::json;

enum class ErrorCode {
  InvalidArgument,  // caller misuse, bad config
  Io,               // file missing / unreadable / unwritable
  Parse,            // malformed file contents
  Data,             // recoverable problem with input data
  Incompatible,     // checkpoint or cache does not match the requested spec
  Numeric,          // divergence, overflow
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// FNV-1a, 64 bit. Stable across processes and platforms.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

// Hash of the canonical (sorted-key, compact) serialization of a JSON value.
std::string json_hash(const json& j);

// Hash of a file's bytes; throws Io if unreadable.
std::string file_hash(const std::filesystem::path& path);

double round_to_float(double v);

// Blob container: one line of JSON (the header), '\n', then a little-endian
// float32 payload whose length in floats is header["payload_floats"].
struct Blob {
  json header;
  std::vector<float> payload;
};

void write_blob(const std::filesystem::path& path, json header, std::span<const float> payload);
Blob read_blob(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

std::vector<float> read_f32_file(const std::filesystem::path& path);
void write_f32_file(const std::filesystem::path& path, std::span<const float> values);

// Number of frames of a duration on a grid; tolerant to representation error
// so that ceil(10.0 * 5) is 50 and not 51.
std::size_t frames_for_duration(double duration_s, double fps);

}  // namespace s2g
