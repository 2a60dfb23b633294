#include "s2g/common.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace s2g {

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
  return v;
}

void append_f32(std::string& out, std::span<const float> values) {
  const std::size_t base = out.size();
  out.resize(base + values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::uint32_t bits = to_le(std::bit_cast<std::uint32_t>(values[i]));
    std::memcpy(out.data() + base + i * 4, &bits, 4);
  }
}

std::vector<float> decode_f32(std::string_view bytes) {
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, bytes.data() + i * 4, 4);
    out[i] = std::bit_cast<float>(to_le(bits));
  }
  return out;
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string json_hash(const json& j) { return hex64(fnv1a64(j.dump())); }

std::string file_hash(const std::filesystem::path& path) { return hex64(fnv1a64(read_text_file(path))); }

double round_to_float(double v) { return static_cast<double>(static_cast<float>(v)); }

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) fail(ErrorCode::Io, "short write to " + path.string());
}

std::vector<float> read_f32_file(const std::filesystem::path& path) {
  const std::string bytes = read_text_file(path);
  if (bytes.size() % 4 != 0)
    fail(ErrorCode::Parse, path.filename().string() + ": size is not a multiple of 4 bytes");
  return decode_f32(bytes);
}

void write_f32_file(const std::filesystem::path& path, std::span<const float> values) {
  std::string bytes;
  append_f32(bytes, values);
  write_text_file(path, bytes);
}

void write_blob(const std::filesystem::path& path, json header, std::span<const float> payload) {
  header["payload_floats"] = payload.size();
  std::string bytes = header.dump();
  bytes.push_back('\n');
  append_f32(bytes, payload);
  write_text_file(path, bytes);
}

Blob read_blob(const std::filesystem::path& path) {
  const std::string bytes = read_text_file(path);
  const auto nl = bytes.find('\n');
  if (nl == std::string::npos) fail(ErrorCode::Parse, path.string() + ": missing header line");
  Blob blob;
  try {
    blob.header = json::parse(std::string_view(bytes).substr(0, nl));
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, path.string() + ": bad header: " + e.what());
  }
  if (!blob.header.is_object() || !blob.header.contains("payload_floats"))
    fail(ErrorCode::Parse, path.string() + ": header lacks payload_floats");
  const auto n = blob.header["payload_floats"].get<std::size_t>();
  const std::string_view payload = std::string_view(bytes).substr(nl + 1);
  if (payload.size() != n * 4)
    fail(ErrorCode::Parse, path.string() + ": payload is " + std::to_string(payload.size()) +
                               " bytes, header promises " + std::to_string(n * 4));
  blob.payload = decode_f32(payload);
  return blob;
}

std::size_t frames_for_duration(double duration_s, double fps) {
  if (duration_s <= 0.0) return 0;
  return static_cast<std::size_t>(std::ceil(duration_s * fps - 1e-9));
}

}  // namespace s2g
