#pragma once

#include <cmath>
#include <cstdint>

namespace dualband {

inline constexpr double kSpeedOfLight = 299792458.0;  // m/s

// The log-distance path-loss model is undefined below this reference
// distance; generators never emit positions closer to the BS.
inline constexpr double kMinDistanceM = 1.0;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline double distance(const Vec2& a, const Vec2& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

inline double norm(const Vec2& a) { return std::hypot(a.x, a.y); }

}  // namespace dualband
