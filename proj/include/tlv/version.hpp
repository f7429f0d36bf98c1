#pragma once

namespace tlv {

inline constexpr const char* kVersion = "0.1.0";

} // namespace tlv
