// version.hpp
#pragma once

namespace qnd {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace qnd
