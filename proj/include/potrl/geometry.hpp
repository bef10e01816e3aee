#ifndef POTRL_GEOMETRY_HPP_
#define POTRL_GEOMETRY_HPP_

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>

#include "potrl/vec3.hpp"

namespace potrl {

inline constexpr std::size_t kRingCount = 11;
inline constexpr std::size_t kRingResolution = 32;
inline constexpr std::size_t kPointCount = kRingCount * kRingResolution;
inline constexpr std::size_t kObservationSize = kPointCount * 3;
inline constexpr std::size_t kActionSize = kRingCount;

// Radius scales are bounded relative to the initial cylinder (scale 1.0).
inline constexpr double kMinRadiusScale = 0.5;
inline constexpr double kMaxRadiusScale = 1.5;

inline constexpr double kDefaultBaseRadius = 1.0;
inline constexpr double kDefaultHeight = 2.0;

using RingArray = std::array<double, kRingCount>;

// Open-topped pot with a flat floor at z = 0, described as a surface of
// revolution: ring i sits at ring_heights()[i] with radius
// base_radius() * radius_scales()[i]; the wall is linear between rings.
class PotShape {
 public:
  // Unit-scale cylinder with equally spaced rings.
  PotShape();
  PotShape(double base_radius, double height);
  // Validates every invariant; throws InvalidShapeError naming the field.
  PotShape(double base_radius, double height, const RingArray& ring_heights,
           const RingArray& radius_scales);

  static PotShape Cylinder(double base_radius = kDefaultBaseRadius,
                           double height = kDefaultHeight);

  double base_radius() const { return base_radius_; }
  double height() const { return height_; }
  std::size_t ring_resolution() const { return kRingResolution; }
  const RingArray& ring_heights() const { return ring_heights_; }
  const RingArray& radius_scales() const { return radius_scales_; }

  double ring_radius(std::size_t ring) const {
    return base_radius_ * radius_scales_[ring];
  }
  double max_radius() const;

  // Same heights and base radius, new scales (validated).
  PotShape WithScales(const RingArray& radius_scales) const;

  friend bool operator==(const PotShape&, const PotShape&) = default;

 private:
  double base_radius_;
  double height_;
  RingArray ring_heights_;
  RingArray radius_scales_;
};

struct PointCloud {
  // ring-major (ring 0 at the floor), then angle-major within a ring
  std::array<Vec3, kPointCount> points;

  const Vec3& at(std::size_t ring, std::size_t k) const {
    return points[ring * kRingResolution + k];
  }
  friend bool operator==(const PointCloud&, const PointCloud&) = default;
};

struct Observation {
  std::array<double, kObservationSize> values{};
  friend bool operator==(const Observation&, const Observation&) = default;
};

// Per-ring log-multiplicative adjustments of the radius scales.
struct DesignAction {
  RingArray deltas{};
};

PointCloud BuildPointCloud(const PotShape& shape);

Observation ToObservation(const PointCloud& cloud);
PointCloud FromObservation(const Observation& observation);

// scales[i] <- clamp(scales[i] * exp(deltas[i]), 0.5, 1.5). Throws
// InvalidActionError on a non-finite delta.
PotShape ApplyAction(const PotShape& shape, const DesignAction& action);

// Piecewise-linear wall radius; throws OutOfRangeError outside [0, height].
double RadiusAt(const PotShape& shape, double z);
// d(radius)/dz of the wall segment containing z (z clamped to the pot).
double WallSlopeAt(const PotShape& shape, double z);

// 0 <= z <= height and strictly inside the wall.
bool Contains(const PotShape& shape, const Vec3& point);

// Wavefront OBJ: one `v` line per point, one quad `f` per pair of adjacent
// points on adjacent rings (1-based indices). Output is byte-deterministic.
std::string ObjText(const PointCloud& cloud);
void ExportObj(const PointCloud& cloud, const std::filesystem::path& path);

}  // namespace potrl

#endif  // POTRL_GEOMETRY_HPP_
