#pragma once

namespace segrun {
inline constexpr const char* kVersion = "0.1.0";
}
