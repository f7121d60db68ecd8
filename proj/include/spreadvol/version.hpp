#pragma once

namespace spreadvol {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace spreadvol
