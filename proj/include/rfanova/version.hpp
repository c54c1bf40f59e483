#pragma once

namespace rfanova {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace rfanova
