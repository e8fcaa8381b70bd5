#include <cmath>
#include <cstring>
#include <limits>

#include "chronovec/half.hpp"
#include "support.hpp"

using namespace chronovec;
using cvtest::TempDir;

namespace {

// Reference decode of IEEE binary16 built from ldexp, independent of the
// bit-twiddling under test.
double f16_reference(std::uint16_t h) {
  const int sign = (h >> 15) ? -1 : 1;
  const int exp = (h >> 10) & 0x1f;
  const int mant = h & 0x3ff;
  if (exp == 0) return sign * std::ldexp(mant, -24);
  if (exp == 31) return mant ? std::numeric_limits<double>::quiet_NaN() : sign * HUGE_VAL;
  return sign * std::ldexp(1024 + mant, exp - 25);
}

std::string le64(std::uint64_t v) {
  std::string s(8, '\0');
  for (int i = 0; i < 8; ++i) s[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  return s;
}

std::string f32_bytes(std::initializer_list<float> values) {
  std::string s;
  for (float f : values) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    for (int i = 0; i < 4; ++i) s += static_cast<char>((bits >> (8 * i)) & 0xff);
  }
  return s;
}

std::string container(const std::string& header, const std::string& data) {
  return le64(header.size()) + header + data;
}

void expect_error_containing(const std::function<void()>& fn, const std::string& needle) {
  try {
    fn();
    FAIL() << "expected an error containing \"" << needle << "\"";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
  }
}

}  // namespace

TEST(Half, F16DecodeMatchesReferenceForAllPatterns) {
  for (std::uint32_t h = 0; h < 0x10000; ++h) {
    const double want = f16_reference(static_cast<std::uint16_t>(h));
    const float got = half::f16_to_f32(static_cast<std::uint16_t>(h));
    if (std::isnan(want)) {
      EXPECT_TRUE(std::isnan(got)) << h;
    } else {
      ASSERT_EQ(static_cast<double>(got), want) << h;
    }
  }
}

TEST(Half, F16EncodeRoundTripsAndTiesToEven) {
  for (std::uint32_t h = 0; h < 0x7c00; ++h) {
    const auto bits = static_cast<std::uint16_t>(h);
    ASSERT_EQ(half::f32_to_f16(half::f16_to_f32(bits)), bits);
    ASSERT_EQ(half::f32_to_f16(-half::f16_to_f32(bits)), bits | 0x8000);
    if (h + 1 < 0x7c00) {
      // The exact midpoint is representable in F32 and must round to the even neighbour.
      const double mid = (f16_reference(bits) + f16_reference(static_cast<std::uint16_t>(h + 1))) / 2.0;
      const auto even = (h % 2 == 0) ? h : h + 1;
      ASSERT_EQ(half::f32_to_f16(static_cast<float>(mid)), even) << h;
    }
  }
  EXPECT_EQ(half::f32_to_f16(1.0f / 3.0f), 0x3555);
}

TEST(Half, F16SaturatesFiniteOverflowAndPassesInfinity) {
  bool sat = false;
  EXPECT_EQ(half::f32_to_f16(1e6f, &sat), 0x7bff);
  EXPECT_TRUE(sat);
  sat = false;
  EXPECT_EQ(half::f32_to_f16(-1e6f, &sat), 0xfbff);
  EXPECT_TRUE(sat);
  sat = false;
  EXPECT_EQ(half::f32_to_f16(65504.0f, &sat), 0x7bff);
  EXPECT_FALSE(sat);
  EXPECT_EQ(half::f32_to_f16(std::numeric_limits<float>::infinity(), &sat), 0x7c00);
  EXPECT_FALSE(sat);
  EXPECT_TRUE(std::isnan(half::f16_to_f32(half::f32_to_f16(std::nanf("")))));
}

TEST(Half, Bf16IsRoundedUpperHalf) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::uint32_t> bits_dist;
  for (int i = 0; i < 100000; ++i) {
    std::uint32_t bits = bits_dist(rng) & 0xbfffffffu;  // clear the exponent MSB: always finite, never overflows
    float f;
    std::memcpy(&f, &bits, 4);
    const std::uint32_t upper = bits >> 16;
    const std::uint32_t lower = bits & 0xffff;
    std::uint32_t want = upper;
    if (lower > 0x8000 || (lower == 0x8000 && (upper & 1))) ++want;
    ASSERT_EQ(half::f32_to_bf16(f), want) << std::hex << bits;
  }
  EXPECT_EQ(half::bf16_to_f32(0x3f80), 1.0f);
  bool sat = false;
  EXPECT_EQ(half::f32_to_bf16(std::numeric_limits<float>::max(), &sat), 0x7f7f);
  EXPECT_TRUE(sat);
}

TEST(Tensor, ValidatesByteLengthAndShape) {
  EXPECT_THROW(Tensor(DType::F32, {2}, std::vector<std::byte>(4)), Error);
  EXPECT_EQ(Tensor(DType::F16, {3}, std::vector<std::byte>(6)).numel(), 3u);
  EXPECT_EQ(Tensor::zeros({}).numel(), 1u);
  EXPECT_EQ(Tensor::zeros({0, 4}).numel(), 0u);
  EXPECT_THROW(parse_dtype("I8"), Error);
}

TEST(Checkpoint, DecodesHandBuiltFile) {
  const auto bytes = container(R"({"w":{"dtype":"F32","shape":[2],"data_offsets":[0,8]}})", f32_bytes({1.0f, 2.0f}));
  const auto c = decode_checkpoint(bytes);
  ASSERT_EQ(c.tensors.size(), 1u);
  EXPECT_EQ(c.at("w").shape(), Shape{2});
  EXPECT_EQ(c.at("w").to_f32(), (std::vector<float>{1.0f, 2.0f}));
  EXPECT_TRUE(c.metadata.empty());
}

TEST(Checkpoint, RejectsMalformedInput) {
  const std::string header = R"({"w":{"dtype":"F32","shape":[2],"data_offsets":[0,8]}})";
  expect_error_containing([&] { decode_checkpoint(le64(1000) + header + f32_bytes({1, 2})); }, "malformed header");
  expect_error_containing([&] { decode_checkpoint("abc"); }, "malformed header");
  expect_error_containing([&] { decode_checkpoint(container("{not json", "")); }, "malformed header");
  expect_error_containing(
      [&] { decode_checkpoint(container(R"({"w":{"dtype":"F32","shape":[2],"data_offsets":[0,16]}})", f32_bytes({1, 2}))); },
      "out of bounds");
  expect_error_containing(
      [&] {
        decode_checkpoint(container(R"({"a":{"dtype":"F32","shape":[2],"data_offsets":[0,8]},)"
                                    R"("b":{"dtype":"F32","shape":[1],"data_offsets":[4,8]}})",
                                    f32_bytes({1, 2})));
      },
      "overlapping");
  expect_error_containing(
      [&] { decode_checkpoint(container(R"({"w":{"dtype":"I64","shape":[1],"data_offsets":[0,8]}})", f32_bytes({1, 2}))); },
      "unsupported dtype");
  expect_error_containing(
      [&] {
        decode_checkpoint(container(R"({"w":{"dtype":"F32","shape":[1],"data_offsets":[0,4]},)"
                                    R"("w":{"dtype":"F32","shape":[1],"data_offsets":[4,8]}})",
                                    f32_bytes({1, 2})));
      },
      "duplicate");
  expect_error_containing(
      [&] { decode_checkpoint(container(R"({"w":{"dtype":"F32","shape":[3],"data_offsets":[0,8]}})", f32_bytes({1, 2}))); },
      "w");
}

TEST(Checkpoint, RejectsBadNames) {
  Checkpoint c;
  EXPECT_THROW(c.insert("", Tensor::zeros({1})), Error);
  EXPECT_THROW(c.insert("a\nb", Tensor::zeros({1})), Error);
  c.insert("a", Tensor::zeros({1}));
  EXPECT_THROW(c.insert("a", Tensor::zeros({1})), Error);
}

TEST(Checkpoint, EmptyCheckpointRoundTrips) {
  TempDir dir;
  write_checkpoint(Checkpoint{}, dir / "e.st");
  const auto bytes = cvtest::read_file(dir / "e.st");
  EXPECT_EQ(bytes.size() % 8, 0u);
  EXPECT_EQ(load_checkpoint(dir / "e.st"), Checkpoint{});
}

TEST(Checkpoint, CanonicalLayout) {
  Checkpoint c;
  c.insert("b", Tensor::from_f32({1}, {3.0f}));
  c.insert("a", Tensor::from_f32({2}, {1.0f, 2.0f}));
  c.metadata["k"] = "v";
  const auto bytes = encode_checkpoint(c);
  std::string header =
      R"({"__metadata__":{"k":"v"},"a":{"dtype":"F32","shape":[2],"data_offsets":[0,8]},)"
      R"("b":{"dtype":"F32","shape":[1],"data_offsets":[8,12]}})";
  header.append((8 - header.size() % 8) % 8, ' ');
  EXPECT_EQ(bytes, container(header, f32_bytes({1.0f, 2.0f, 3.0f})));
}

TEST(Checkpoint, RandomRoundTripIsBitExact) {
  TempDir dir;
  std::mt19937_64 rng(11);
  for (int i = 0; i < 20; ++i) {
    auto c = cvtest::random_checkpoint(rng, 50, 2000);
    c.metadata["seed"] = std::to_string(i);
    write_checkpoint(c, dir / "c.st");
    const auto loaded = load_checkpoint(dir / "c.st");
    ASSERT_EQ(loaded, c);
    ASSERT_EQ(encode_checkpoint(loaded), cvtest::read_file(dir / "c.st"));
  }
}

TEST(Checkpoint, ShuffledFileCanonicalizes) {
  // Tensors stored in reverse order with a gap, metadata last.
  const std::string header =
      R"({"b":{"dtype":"F32","shape":[1],"data_offsets":[0,4]},)"
      R"("a":{"dtype":"F32","shape":[2],"data_offsets":[8,16]},"__metadata__":{"x":"1"}})";
  const auto shuffled = decode_checkpoint(container(header, f32_bytes({3.0f, 0.0f, 1.0f, 2.0f})));
  Checkpoint sorted;
  sorted.insert("a", Tensor::from_f32({2}, {1.0f, 2.0f}));
  sorted.insert("b", Tensor::from_f32({1}, {3.0f}));
  sorted.metadata["x"] = "1";
  EXPECT_EQ(encode_checkpoint(shuffled), encode_checkpoint(sorted));
}

TEST(Checkpoint, F16OverrideStaysWithinRounding) {
  TempDir dir;
  std::mt19937_64 rng(5);
  auto values = cvtest::random_values(rng, 500, 10.0f);
  Checkpoint c;
  c.insert("w", Tensor::from_f32({500}, values));
  const auto report = write_checkpoint(c, dir / "h.st", DType::F16);
  EXPECT_EQ(report.saturated, 0u);
  const auto loaded = load_checkpoint(dir / "h.st");
  ASSERT_EQ(loaded.at("w").dtype(), DType::F16);
  const auto back = loaded.at("w").to_f32();
  for (std::size_t i = 0; i < values.size(); ++i) {
    EXPECT_LE(std::abs(back[i] - values[i]), std::ldexp(1.0, -11) * std::abs(values[i]) + 1e-7) << i;
  }
  // Re-writing the F16 file needs no override to stay byte-identical.
  EXPECT_EQ(encode_checkpoint(loaded), cvtest::read_file(dir / "h.st"));
}

TEST(Checkpoint, DowncastCountsSaturation) {
  Checkpoint c;
  c.insert("w", Tensor::from_f32({4}, {1e5f, -1e5f, 1.0f, std::numeric_limits<float>::infinity()}));
  WriteReport report;
  const auto loaded = decode_checkpoint(encode_checkpoint(c, DType::F16, &report));
  EXPECT_EQ(report.saturated, 2u);
  const auto v = loaded.at("w").to_f32();
  EXPECT_EQ(v[0], 65504.0f);
  EXPECT_EQ(v[1], -65504.0f);
  EXPECT_TRUE(std::isinf(v[3]));
}

TEST(Fingerprint, MatchesExternalDigest) {
  EXPECT_EQ(fingerprint(cvtest::single("w", {2}, {1, 2})).hex,
            "bd1aad35eeb7344a052f0260f567964f48639aaf471fe3e713d37ad0cf006cd0");
  EXPECT_EQ(fingerprint(Checkpoint{}).hex, "4f53cda18c2baa0c0354bb5f9a3ecbe5ed12ab4d8e11ba873c2f11161202b945");
  Checkpoint c;
  c.insert("b", Tensor(DType::BF16, {}, std::vector<std::byte>(2)));
  c.insert("a", Tensor(DType::F16, {2, 3}, std::vector<std::byte>(12)));
  EXPECT_EQ(fingerprint(c).hex, "842bbd6f984f59d735d19a802705de9c1f35a0d07b26b1c767c5a5d42e1fe967");
}

TEST(Fingerprint, DependsOnInventoryOnly) {
  std::mt19937_64 rng(2);
  const auto a = cvtest::random_checkpoint(rng, 6);
  const auto b = cvtest::perturbed(rng, a);
  EXPECT_EQ(fingerprint(a), fingerprint(b));

  Checkpoint renamed = a;
  auto node = renamed.tensors.extract(renamed.tensors.begin());
  node.key() = "renamed";
  renamed.tensors.insert(std::move(node));
  EXPECT_NE(fingerprint(a), fingerprint(renamed));

  Checkpoint reordered;
  auto names = a.names();
  std::reverse(names.begin(), names.end());
  for (const auto& n : names) reordered.insert(n, a.at(n));
  EXPECT_EQ(fingerprint(a), fingerprint(reordered));

  Checkpoint recast = a;
  recast.tensors.begin()->second = recast.tensors.begin()->second.cast(DType::BF16);
  EXPECT_NE(fingerprint(a), fingerprint(recast));
}
