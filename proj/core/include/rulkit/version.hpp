#pragma once

namespace rulkit {

inline constexpr const char* kVersion = "0.1.0";

// Bumped whenever the layout of report CSV/JSON files changes.
inline constexpr int kReportSchemaVersion = 1;

// Bumped whenever the binary container layout changes.
inline constexpr unsigned kContainerVersion = 1;

}  // namespace rulkit
