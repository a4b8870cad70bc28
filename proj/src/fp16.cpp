#include "segrun/fp16.hpp"

#include <bit>
#include <cmath>

namespace segrun::fp16 {

std::uint16_t from_float(float value, bool saturate) {
  std::uint32_t bits = std::bit_cast<std::uint32_t>(value);
  const auto sign = static_cast<std::uint16_t>((bits >> 16) & 0x8000u);
  bits &= 0x7fffffffu;

  if (bits >= 0x7f800000u) {  // Inf or NaN
    return static_cast<std::uint16_t>(sign | (bits > 0x7f800000u ? 0x7e00u : 0x7c00u));
  }
  if (bits > 0x477fe000u) {  // |x| > 65504
    if (saturate) return static_cast<std::uint16_t>(sign | 0x7bffu);
    // values that still round down to 65504 stay finite
    if (bits >= 0x477ff000u) return static_cast<std::uint16_t>(sign | 0x7c00u);
  }
  if (bits < 0x38800000u) {
    // Half subnormal range: let the FPU round by adding a magic constant that
    // aligns the half's least significant bit with the float's.
    const float magic = std::bit_cast<float>(126u << 23);
    const float sum = std::bit_cast<float>(bits) + magic;
    return static_cast<std::uint16_t>(sign | (std::bit_cast<std::uint32_t>(sum) - (126u << 23)));
  }
  const std::uint32_t mantissa_odd = (bits >> 13) & 1u;
  bits += (static_cast<std::uint32_t>(15 - 127) << 23) + 0xfffu + mantissa_odd;
  return static_cast<std::uint16_t>(sign | (bits >> 13));
}

float to_float(std::uint16_t half) {
  const std::uint32_t sign = static_cast<std::uint32_t>(half & 0x8000u) << 16;
  const std::uint32_t exponent = (half >> 10) & 0x1fu;
  std::uint32_t mantissa = half & 0x3ffu;
  if (exponent == 0x1f) {
    return std::bit_cast<float>(sign | 0x7f800000u | (mantissa << 13));
  }
  if (exponent == 0) {
    if (mantissa == 0) return std::bit_cast<float>(sign);
    // subnormal: value = mantissa * 2^-24
    const float magnitude = static_cast<float>(mantissa) * 0x1p-24f;
    return sign ? -magnitude : magnitude;
  }
  return std::bit_cast<float>(sign | ((exponent + 112u) << 23) | (mantissa << 13));
}

bool overflows(float value) { return std::isfinite(value) && std::fabs(value) > kMaxFinite; }

}  // namespace segrun::fp16
