#pragma once

#include <cstdint>

namespace chronovec::half {

float f16_to_f32(std::uint16_t bits);
float bf16_to_f32(std::uint16_t bits);

// Round-to-nearest-even. Finite values beyond the target range saturate to
// the largest finite magnitude and set *saturated. Infinities and NaNs pass
// through.
std::uint16_t f32_to_f16(float value, bool* saturated = nullptr);
std::uint16_t f32_to_bf16(float value, bool* saturated = nullptr);

}  // namespace chronovec::half
