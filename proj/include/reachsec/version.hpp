#pragma once

namespace reachsec {

inline constexpr const char* kArtifactName = "reachsec";
inline constexpr const char* kArtifactVersion = "1.0.0";

}  // namespace reachsec
