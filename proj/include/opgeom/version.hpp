#pragma once

namespace opgeom {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace opgeom
