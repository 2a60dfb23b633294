#include <gtest/gtest.h>

#include <fstream>

#include "s2g/common.hpp"
#include "support.hpp"

using namespace s2g;

TEST(Fnv, KnownVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
  EXPECT_EQ(hex64(0xabcULL), "0000000000000abc");
}

TEST(JsonHash, IndependentOfKeyInsertionOrder) {
  json a = json::object();
  a["x"] = 1;
  a["y"] = {1, 2};
  json b = json::object();
  b["y"] = {1, 2};
  b["x"] = 1;
  EXPECT_EQ(json_hash(a), json_hash(b));
  b["x"] = 2;
  EXPECT_NE(json_hash(a), json_hash(b));
}

TEST(Blob, RoundTripIsBitExact) {
  test::TempDir dir("blob");
  const std::vector<float> payload{0.0f, -1.5f, 3.25e-7f, 1e30f};
  write_blob(dir / "b.bin", {{"kind", "demo"}}, payload);
  const Blob b = read_blob(dir / "b.bin");
  EXPECT_EQ(b.header.at("kind"), "demo");
  EXPECT_EQ(b.header.at("payload_floats"), payload.size());
  EXPECT_EQ(b.payload, payload);
}

TEST(Blob, TruncatedFileIsParseError) {
  test::TempDir dir("blobtrunc");
  write_blob(dir / "b.bin", {{"kind", "demo"}}, std::vector<float>(10, 1.0f));
  const auto size = std::filesystem::file_size(dir / "b.bin");
  std::filesystem::resize_file(dir / "b.bin", size - 3);
  try {
    read_blob(dir / "b.bin");
    FAIL() << "expected a parse error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Parse);
  }
}

TEST(Blob, MissingFileIsIoError) {
  try {
    read_blob("/nonexistent/s2g/blob.bin");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Io);
  }
}

TEST(F32File, LittleEndianRoundTrip) {
  test::TempDir dir("f32");
  const std::vector<float> v{1.0f, -2.0f, 0.5f};
  write_f32_file(dir / "a.raw", v);
  EXPECT_EQ(std::filesystem::file_size(dir / "a.raw"), 12u);
  std::ifstream f(dir / "a.raw", std::ios::binary);
  unsigned char bytes[4];
  f.read(reinterpret_cast<char*>(bytes), 4);
  // 1.0f = 0x3f800000, least significant byte first
  EXPECT_EQ(bytes[0], 0x00);
  EXPECT_EQ(bytes[3], 0x3f);
  EXPECT_EQ(read_f32_file(dir / "a.raw"), v);
}

TEST(Frames, DurationToFrameCount) {
  EXPECT_EQ(frames_for_duration(10.0, 5.0), 50u);
  EXPECT_EQ(frames_for_duration(10.01, 5.0), 51u);
  EXPECT_EQ(frames_for_duration(0.0, 5.0), 0u);
  EXPECT_EQ(frames_for_duration(0.1 * 3, 10.0), 3u);
}

TEST(Matrix, RowViewsAliasStorage) {
  Matrix m(2, 3);
  m.row(1)[2] = 7.0;
  EXPECT_EQ(m(1, 2), 7.0);
  EXPECT_EQ(m.data()[5], 7.0);
}

TEST(RoundToFloat, MatchesFloatCast) {
  EXPECT_EQ(round_to_float(0.1), static_cast<double>(0.1f));
  EXPECT_EQ(round_to_float(1.0), 1.0);
}
