#include "potrl/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "potrl/error.hpp"
#include "potrl/format.hpp"

namespace potrl {
namespace {

RingArray EqualSpacing(double height) {
  RingArray heights{};
  for (std::size_t i = 0; i < kRingCount; ++i) {
    heights[i] = height * static_cast<double>(i) /
                 static_cast<double>(kRingCount - 1);
  }
  heights.back() = height;
  return heights;
}

RingArray UnitScales() {
  RingArray scales{};
  scales.fill(1.0);
  return scales;
}

// Index of the wall segment [ring i, ring i+1] that holds z.
std::size_t SegmentIndex(const RingArray& heights, double z) {
  auto it = std::upper_bound(heights.begin(), heights.end(), z);
  auto idx = static_cast<std::size_t>(std::distance(heights.begin(), it));
  if (idx == 0) return 0;
  return std::min(idx - 1, kRingCount - 2);
}

}  // namespace

PotShape::PotShape() : PotShape(kDefaultBaseRadius, kDefaultHeight) {}

PotShape::PotShape(double base_radius, double height)
    : PotShape(base_radius, height, EqualSpacing(height), UnitScales()) {}

PotShape::PotShape(double base_radius, double height,
                   const RingArray& ring_heights,
                   const RingArray& radius_scales)
    : base_radius_(base_radius),
      height_(height),
      ring_heights_(ring_heights),
      radius_scales_(radius_scales) {
  if (!(std::isfinite(base_radius) && base_radius > 0.0)) {
    throw InvalidShapeError("base_radius must be finite and positive");
  }
  if (!(std::isfinite(height) && height > 0.0)) {
    throw InvalidShapeError("height must be finite and positive");
  }
  if (ring_heights_.front() != 0.0 || ring_heights_.back() != height_) {
    throw InvalidShapeError(
        "ring_heights must start at 0 and end at the pot height");
  }
  for (std::size_t i = 1; i < kRingCount; ++i) {
    if (!(ring_heights_[i] > ring_heights_[i - 1])) {
      throw InvalidShapeError("ring_heights must be strictly increasing (index " +
                              std::to_string(i) + ")");
    }
  }
  for (std::size_t i = 0; i < kRingCount; ++i) {
    double s = radius_scales_[i];
    if (!(s >= kMinRadiusScale && s <= kMaxRadiusScale)) {
      throw InvalidShapeError("radius_scales[" + std::to_string(i) +
                              "] outside [0.5, 1.5]");
    }
  }
}

PotShape PotShape::Cylinder(double base_radius, double height) {
  return PotShape(base_radius, height);
}

double PotShape::max_radius() const {
  return base_radius_ *
         *std::max_element(radius_scales_.begin(), radius_scales_.end());
}

PotShape PotShape::WithScales(const RingArray& radius_scales) const {
  return PotShape(base_radius_, height_, ring_heights_, radius_scales);
}

PointCloud BuildPointCloud(const PotShape& shape) {
  PointCloud cloud;
  for (std::size_t ring = 0; ring < kRingCount; ++ring) {
    double r = shape.ring_radius(ring);
    double z = shape.ring_heights()[ring];
    for (std::size_t k = 0; k < kRingResolution; ++k) {
      double phi = 2.0 * std::numbers::pi * static_cast<double>(k) /
                   static_cast<double>(kRingResolution);
      cloud.points[ring * kRingResolution + k] = {r * std::cos(phi),
                                                  r * std::sin(phi), z};
    }
  }
  return cloud;
}

Observation ToObservation(const PointCloud& cloud) {
  Observation obs;
  for (std::size_t i = 0; i < kPointCount; ++i) {
    obs.values[3 * i] = cloud.points[i].x;
    obs.values[3 * i + 1] = cloud.points[i].y;
    obs.values[3 * i + 2] = cloud.points[i].z;
  }
  return obs;
}

PointCloud FromObservation(const Observation& observation) {
  PointCloud cloud;
  for (std::size_t i = 0; i < kPointCount; ++i) {
    cloud.points[i] = {observation.values[3 * i], observation.values[3 * i + 1],
                       observation.values[3 * i + 2]};
  }
  return cloud;
}

PotShape ApplyAction(const PotShape& shape, const DesignAction& action) {
  RingArray scales = shape.radius_scales();
  for (std::size_t i = 0; i < kRingCount; ++i) {
    double d = action.deltas[i];
    if (!std::isfinite(d)) {
      throw InvalidActionError("action delta " + std::to_string(i) +
                               " is not finite");
    }
    scales[i] = std::clamp(scales[i] * std::exp(d), kMinRadiusScale,
                           kMaxRadiusScale);
  }
  return shape.WithScales(scales);
}

double RadiusAt(const PotShape& shape, double z) {
  if (!(z >= 0.0 && z <= shape.height())) {
    throw OutOfRangeError("RadiusAt: z outside [0, height]");
  }
  const auto& h = shape.ring_heights();
  std::size_t i = SegmentIndex(h, z);
  double t = (z - h[i]) / (h[i + 1] - h[i]);
  double r0 = shape.ring_radius(i);
  double r1 = shape.ring_radius(i + 1);
  if (t <= 0.0) return r0;
  if (t >= 1.0) return r1;
  return r0 + t * (r1 - r0);
}

double WallSlopeAt(const PotShape& shape, double z) {
  const auto& h = shape.ring_heights();
  std::size_t i = SegmentIndex(h, std::clamp(z, 0.0, shape.height()));
  return (shape.ring_radius(i + 1) - shape.ring_radius(i)) / (h[i + 1] - h[i]);
}

bool Contains(const PotShape& shape, const Vec3& point) {
  if (!(point.z >= 0.0 && point.z <= shape.height())) return false;
  return RadialDistance(point) < RadiusAt(shape, point.z);
}

std::string ObjText(const PointCloud& cloud) {
  std::ostringstream out;
  out << "# pot mesh: " << kRingCount << " rings x " << kRingResolution
      << " points\n";
  for (const Vec3& p : cloud.points) {
    out << "v " << FormatDouble(p.x) << ' ' << FormatDouble(p.y) << ' '
        << FormatDouble(p.z) << '\n';
  }
  for (std::size_t ring = 0; ring + 1 < kRingCount; ++ring) {
    for (std::size_t k = 0; k < kRingResolution; ++k) {
      std::size_t k1 = (k + 1) % kRingResolution;
      std::size_t a = ring * kRingResolution + k + 1;
      std::size_t b = ring * kRingResolution + k1 + 1;
      std::size_t c = (ring + 1) * kRingResolution + k1 + 1;
      std::size_t d = (ring + 1) * kRingResolution + k + 1;
      out << "f " << a << ' ' << b << ' ' << c << ' ' << d << '\n';
    }
  }
  return out.str();
}

void ExportObj(const PointCloud& cloud, const std::filesystem::path& path) {
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot open " + path.string() + " for writing");
  file << ObjText(cloud);
  if (!file) throw IoError("failed writing " + path.string());
}

}  // namespace potrl
