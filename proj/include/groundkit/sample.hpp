#pragma once

#include <string>

#include "groundkit/errors.hpp"
#include "groundkit/geometry.hpp"

namespace groundkit {

enum class Platform { kMobile, kDesktop, kWeb, kOther };

inline std::string to_string(Platform p) {
  switch (p) {
    case Platform::kMobile: return "mobile";
    case Platform::kDesktop: return "desktop";
    case Platform::kWeb: return "web";
    case Platform::kOther: return "other";
  }
  return "other";
}

inline Platform platform_from_string(const std::string& s) {
  if (s == "mobile") return Platform::kMobile;
  if (s == "desktop") return Platform::kDesktop;
  if (s == "web") return Platform::kWeb;
  if (s == "other") return Platform::kOther;
  throw ArgumentError("unknown platform '" + s + "' (expected mobile, desktop, web or other)");
}

// One benchmark item: a screenshot, an instruction and the target element's
// box in original-image pixels.
struct GroundingSample {
  std::string id;
  std::string image_ref;
  std::string instruction;
  BBox gt;
  Platform platform = Platform::kOther;
  std::string source;
};

}  // namespace groundkit
