#pragma once

namespace cloudfusion {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace cloudfusion
