#pragma once

#include <cstdint>

namespace segrun::fp16 {

inline constexpr float kMaxFinite = 65504.0f;

/// IEEE 754 binary32 -> binary16, round-to-nearest-even. Finite values beyond
/// the half range saturate to +/-65504 when `saturate` is set, otherwise they
/// become infinities. NaN stays NaN.
std::uint16_t from_float(float value, bool saturate = true);
float to_float(std::uint16_t half);

/// Value after a float -> half -> float trip (saturating).
inline float round_trip(float value) { return to_float(from_float(value)); }

/// True when a finite float lies outside the half range and would be clamped.
bool overflows(float value);

}  // namespace segrun::fp16
