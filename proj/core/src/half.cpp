#include "chronovec/half.hpp"

#include <bit>
#include <cmath>

namespace chronovec::half {

float f16_to_f32(std::uint16_t bits) {
  const std::uint32_t sign = static_cast<std::uint32_t>(bits & 0x8000u) << 16;
  const std::uint32_t exponent = (bits >> 10) & 0x1Fu;
  const std::uint32_t mantissa = bits & 0x3FFu;
  if (exponent == 0) {
    // zero or subnormal: mantissa * 2^-24
    const float magnitude = std::ldexp(static_cast<float>(mantissa), -24);
    return sign ? -magnitude : magnitude;
  }
  if (exponent == 31) {
    return std::bit_cast<float>(sign | 0x7F800000u | (mantissa << 13));
  }
  return std::bit_cast<float>(sign | ((exponent + 112) << 23) | (mantissa << 13));
}

float bf16_to_f32(std::uint16_t bits) {
  return std::bit_cast<float>(static_cast<std::uint32_t>(bits) << 16);
}

std::uint16_t f32_to_f16(float value, bool* saturated) {
  const std::uint32_t x = std::bit_cast<std::uint32_t>(value);
  const auto sign = static_cast<std::uint16_t>((x >> 16) & 0x8000u);
  const std::uint32_t abs_bits = x & 0x7FFFFFFFu;

  if (abs_bits >= 0x7F800000u) {
    if (abs_bits > 0x7F800000u) {
      return static_cast<std::uint16_t>(sign | 0x7E00u | ((abs_bits >> 13) & 0x3FFu));
    }
    return static_cast<std::uint16_t>(sign | 0x7C00u);
  }
  // 65520 and above round to infinity under RNE.
  if (abs_bits >= 0x477FF000u) {
    if (saturated) *saturated = true;
    return static_cast<std::uint16_t>(sign | 0x7BFFu);
  }
  if (abs_bits >= 0x38800000u) {
    std::uint32_t rebased = abs_bits - 0x38000000u;
    rebased += 0xFFFu + ((rebased >> 13) & 1u);
    return static_cast<std::uint16_t>(sign | (rebased >> 13));
  }
  // Subnormal target: scale by 2^24 (exact) and round to nearest even.
  const float scaled = std::bit_cast<float>(abs_bits) * 16777216.0f;
  return static_cast<std::uint16_t>(sign | static_cast<std::uint16_t>(std::nearbyint(scaled)));
}

std::uint16_t f32_to_bf16(float value, bool* saturated) {
  const std::uint32_t x = std::bit_cast<std::uint32_t>(value);
  const std::uint32_t abs_bits = x & 0x7FFFFFFFu;
  const auto sign = static_cast<std::uint16_t>((x >> 16) & 0x8000u);
  if (abs_bits > 0x7F800000u) {
    return static_cast<std::uint16_t>((x >> 16) | 0x0040u);
  }
  if (abs_bits == 0x7F800000u) {
    return static_cast<std::uint16_t>(x >> 16);
  }
  if (abs_bits >= 0x7F7F8000u) {
    if (saturated) *saturated = true;
    return static_cast<std::uint16_t>(sign | 0x7F7Fu);
  }
  const std::uint32_t rounded = x + 0x7FFFu + ((x >> 16) & 1u);
  return static_cast<std::uint16_t>(rounded >> 16);
}

}  // namespace chronovec::half
