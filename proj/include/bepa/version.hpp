#pragma once

namespace bepa {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace bepa
