#pragma once

namespace shiftfuse {

inline constexpr const char* kToolName = "shiftfuse";
inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace shiftfuse
