// Copyright 2026 The EALM Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>

#include <gtest/gtest.h>

#include "ealm/half.hpp"
#include "ealm/pack.hpp"
#include "ealm/quant.hpp"
#include "ealm/tensors.hpp"
#include "ealm/tinylm.hpp"
#include "oracles.hpp"

namespace ealm {
namespace {

std::filesystem::path temp_file(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "ealm_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected an ealm::Error";
  return ErrorKind::kInvariant;
}

TEST(Tensor, RejectsLengthMismatchAndZeroDims) {
  EXPECT_EQ(kind_of([] { Tensor({2, 3}, std::vector<float>(5)); }), ErrorKind::kShape);
  EXPECT_EQ(kind_of([] { Tensor({2, 0}, {}); }), ErrorKind::kShape);
}

TEST(PayloadBytes, MatchesStorageWidths) {
  Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(payload_bytes(StoredTensor{t}), 24u);
  EXPECT_EQ(payload_bytes(quant::quantize(t, {16})), 12u);
  quant::QuantSpec s4{4, quant::Granularity::kPerTensor};
  EXPECT_EQ(payload_bytes(quant::quantize(t, s4)), 7u);
}

TEST(PayloadBytes, MonotoneInPrecision) {
  LmConfig c;
  c.d_model = 16;
  c.d_ff = 32;
  const ModelBundle b = lm::init_model(c);
  std::size_t prev = 0;
  for (int bits : {4, 8, 16, 32}) {
    const std::size_t n = payload_bytes(quant::quantize_bundle(b, {bits}));
    EXPECT_GT(n, prev) << bits;
    prev = n;
  }
}

TEST(Bundle, RoundTripsBitExactly) {
  LmConfig c;
  c.d_model = 8;
  c.n_heads = 2;
  c.d_ff = 16;
  c.max_seq = 16;
  ModelBundle b = quant::quantize_bundle(lm::init_model(c), {4});
  b.lineage.epochs_trained = 3;
  b.lineage.parent_id = "q4-e3";
  const auto path = temp_file("roundtrip.ealm");
  save_bundle(b, path.string());
  EXPECT_TRUE(bundles_equal(load_bundle(path.string()), b));
}

TEST(Bundle, SingleTensorRoundTrip) {
  ModelBundle b;
  b.add("w", Tensor({3}, {1.5f, -0.0f, 3e-41f}));
  const auto path = temp_file("single.ealm");
  save_bundle(b, path.string());
  const ModelBundle back = load_bundle(path.string());
  EXPECT_TRUE(bitwise_equal(back.at("w"), b.at("w")));
}

TEST(Bundle, EmptyMapRoundTrip) {
  ModelBundle b;
  const auto path = temp_file("empty.ealm");
  save_bundle(b, path.string());
  EXPECT_TRUE(load_bundle(path.string()).tensors.empty());
}

TEST(Bundle, DuplicateNameRejected) {
  ModelBundle b;
  b.add("w", Tensor({1}, {1.0f}));
  EXPECT_EQ(kind_of([&] { b.add("w", Tensor({1}, {2.0f})); }), ErrorKind::kInvariant);
  ModelBundle raw;
  raw.tensors.push_back({"w", Tensor({1}, {1.0f})});
  raw.tensors.push_back({"w", Tensor({1}, {1.0f})});
  EXPECT_THROW(save_bundle(raw, temp_file("dup.ealm").string()), Error);
}

TEST(Bundle, HeaderLayoutIsLittleEndian) {
  ModelBundle b;
  b.add("ab", Tensor({2}, {1.0f, 2.0f}));
  const std::vector<char> bytes = encode_bundle(b);
  ASSERT_GE(bytes.size(), 10u);
  EXPECT_EQ(std::memcmp(bytes.data(), "EALM", 4), 0);
  EXPECT_EQ(bytes[4], 1);  // version u16
  EXPECT_EQ(bytes[5], 0);
  EXPECT_EQ(bytes[6], 1);  // count u32
  EXPECT_EQ(bytes[10], 2);  // name length u16
  EXPECT_EQ(bytes[12], 'a');
  EXPECT_EQ(bytes[14], 0);  // dtype f32
  EXPECT_EQ(bytes[15], 1);  // rank
}

TEST(Bundle, BadMagicIsFormatError) {
  ModelBundle b;
  b.add("w", Tensor({1}, {1.0f}));
  std::vector<char> bytes = encode_bundle(b);
  bytes[0] = 'X';
  EXPECT_EQ(kind_of([&] { decode_bundle(bytes); }), ErrorKind::kFormat);
  bytes[0] = 'E';
  bytes[4] = 9;
  EXPECT_EQ(kind_of([&] { decode_bundle(bytes); }), ErrorKind::kFormat);
}

TEST(Bundle, TruncationNamesTensor) {
  ModelBundle b;
  b.add("first", Tensor({4}, {1, 2, 3, 4}));
  b.add("second.weight", Tensor({64}, std::vector<float>(64, 0.5f)));
  std::vector<char> bytes = encode_bundle(b);
  // Cut inside the second payload: drop the metadata block, its length and
  // 100 payload bytes.
  bytes.resize(bytes.size() - bundle_metadata(b).dump().size() - 8 - 100);
  try {
    decode_bundle(bytes);
    FAIL() << "expected corruption error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kCorruption);
    EXPECT_NE(std::string(e.what()).find("second.weight"), std::string::npos) << e.what();
  }
}

TEST(Bundle, PrecisionMustMatchStorage) {
  LmConfig c;
  c.d_model = 8;
  c.n_heads = 2;
  c.d_ff = 8;
  ModelBundle b = quant::quantize_bundle(lm::init_model(c), {8});
  b.lineage.precision_bits = 4;
  EXPECT_EQ(kind_of([&] { validate_bundle(b); }), ErrorKind::kInvariant);
}

TEST(Half, MatchesOracleOnEdgeValues) {
  const float cases[] = {0.0f,      -0.0f,      1.0f,       65504.0f,  65519.0f, 65520.0f,
                         1e-8f,     2.98e-8f,   5.96e-8f,   6.1e-5f,   1.0009765625f,
                         1.00048828125f, 1.00146484375f, 3.14159f, -2.5e-6f, 1e9f};
  for (float x : cases) {
    EXPECT_EQ(float_to_half_bits(x), oracle::to_half(x)) << x;
  }
  EXPECT_TRUE(std::isnan(half_bits_to_float(float_to_half_bits(std::nanf("")))));
}

TEST(Pack4, ExampleVectors) {
  const std::int8_t a[] = {3, -1};
  EXPECT_EQ(pack4(a), std::vector<std::uint8_t>{0xF3});
  EXPECT_TRUE(pack4({}).empty());
  const std::int8_t b[] = {5};
  EXPECT_EQ(pack4(b), std::vector<std::uint8_t>{0x05});
}

TEST(Pack4, ScalarNibbleOracle) {
  // Two's-complement nibble of c is (c + 16) % 16.
  for (int lo = -7; lo <= 7; ++lo) {
    for (int hi = -7; hi <= 7; ++hi) {
      const std::int8_t codes[] = {static_cast<std::int8_t>(lo), static_cast<std::int8_t>(hi)};
      const auto bytes = pack4(codes);
      ASSERT_EQ(bytes.size(), 1u);
      EXPECT_EQ(bytes[0], ((hi + 16) % 16) << 4 | ((lo + 16) % 16));
      EXPECT_EQ(unpack4(bytes, 2), std::vector<std::int8_t>(codes, codes + 2));
    }
  }
}

TEST(Pack4, RejectsOutOfRange) {
  const std::int8_t bad[] = {8};
  EXPECT_EQ(kind_of([&] { pack4(bad); }), ErrorKind::kEncoding);
  const std::uint8_t minus_eight[] = {0x08};
  EXPECT_EQ(kind_of([&] { unpack4(minus_eight, 1); }), ErrorKind::kEncoding);
}

}  // namespace
}  // namespace ealm
