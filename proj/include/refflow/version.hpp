#pragma once

namespace refflow {

inline constexpr const char* kVersion = "0.1.0";

// Style version stamped into emitted SVGs; bump when plot geometry changes.
inline constexpr int kPlotStyleVersion = 1;

}  // namespace refflow
