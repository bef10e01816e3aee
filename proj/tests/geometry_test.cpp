#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "doctest.h"

#include "potrl/error.hpp"
#include "potrl/geometry.hpp"

using namespace potrl;

namespace {

RingArray Filled(double v) {
  RingArray a{};
  a.fill(v);
  return a;
}

std::string Slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("unit cylinder points all sit at radius 1") {
  PointCloud cloud = BuildPointCloud(PotShape());
  CHECK(cloud.points.size() == 352);
  for (const Vec3& p : cloud.points) CHECK(RadialDistance(p) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("point layout follows the ring formula") {
  RingArray scales = Filled(1.0);
  scales[5] = 1.5;
  const PotShape shape = PotShape().WithScales(scales);
  const PointCloud cloud = BuildPointCloud(shape);
  for (std::size_t i = 0; i < kRingCount; ++i) {
    const double r = shape.ring_radius(i);
    for (std::size_t j = 0; j < kRingResolution; ++j) {
      const double angle = 2.0 * std::numbers::pi * static_cast<double>(j) / 32.0;
      const Vec3& p = cloud.at(i, j);
      CHECK(p.x == doctest::Approx(r * std::cos(angle)).epsilon(1e-14));
      CHECK(p.y == doctest::Approx(r * std::sin(angle)).epsilon(1e-14));
      CHECK(p.z == shape.ring_heights()[i]);
      CHECK(RadialDistance(p) == doctest::Approx(i == 5 ? 1.5 : 1.0));
    }
  }
}

TEST_CASE("rotating a ring by one slot is an index shift") {
  RingArray scales{0.5, 0.7, 0.9, 1.1, 1.3, 1.5, 1.2, 1.0, 0.8, 0.6, 0.55};
  const PointCloud cloud = BuildPointCloud(PotShape().WithScales(scales));
  const double a = 2.0 * std::numbers::pi / 32.0;
  for (std::size_t i = 0; i < kRingCount; ++i) {
    for (std::size_t j = 0; j < kRingResolution; ++j) {
      const Vec3& p = cloud.at(i, j);
      const Vec3& q = cloud.at(i, (j + 1) % kRingResolution);
      CHECK(q.x == doctest::Approx(p.x * std::cos(a) - p.y * std::sin(a)).epsilon(1e-12));
      CHECK(q.y == doctest::Approx(p.x * std::sin(a) + p.y * std::cos(a)).epsilon(1e-12));
    }
  }
}

TEST_CASE("observation layout and round trip") {
  const PointCloud cloud = BuildPointCloud(PotShape());
  const Observation obs = ToObservation(cloud);
  CHECK(obs.values.size() == 1056);
  CHECK(obs.values[0] == 1.0);
  CHECK(obs.values[1] == 0.0);
  CHECK(obs.values[2] == 0.0);
  CHECK(FromObservation(obs) == cloud);

  RingArray scales = Filled(1.0);
  scales[10] = 1.2;
  const Observation other = ToObservation(BuildPointCloud(PotShape().WithScales(scales)));
  int differing = 0;
  for (std::size_t k = 0; k < 1056; ++k) {
    if (other.values[k] == obs.values[k]) continue;
    CHECK(k >= 1056 - 96);
    ++differing;
  }
  CHECK(differing > 0);
}

TEST_CASE("distinct scales give distinct observations") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  for (int t = 0; t < 200; ++t) {
    RingArray a{}, b{};
    for (auto& x : a) x = u(rng);
    b = a;
    b[static_cast<std::size_t>(t % 11)] = a[static_cast<std::size_t>(t % 11)] == 1.0 ? 0.9 : 1.0;
    CHECK(ToObservation(BuildPointCloud(PotShape().WithScales(a))) !=
          ToObservation(BuildPointCloud(PotShape().WithScales(b))));
  }
}

TEST_CASE("apply_action examples") {
  const PotShape base;
  DesignAction zero;
  CHECK(ApplyAction(base, zero) == base);

  DesignAction grow;
  grow.deltas[0] = std::log(2.0);
  CHECK(ApplyAction(base, grow).radius_scales()[0] == 1.5);

  DesignAction shrink;
  shrink.deltas[0] = std::log(0.8);
  const double expected = std::clamp(1.0 * 0.8, 0.5, 1.5);
  CHECK(ApplyAction(base, shrink).radius_scales()[0] == doctest::Approx(expected).epsilon(1e-15));
  CHECK(base.radius_scales()[0] == 1.0);  // input untouched

  DesignAction bad;
  bad.deltas[3] = std::nan("");
  CHECK_THROWS_AS(ApplyAction(base, bad), InvalidActionError);
  bad.deltas[3] = INFINITY;
  CHECK_THROWS_AS(ApplyAction(base, bad), InvalidActionError);
}

TEST_CASE("apply_action is monotone in each delta") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::uniform_real_distribution<double> s(0.5, 1.5);
  for (int t = 0; t < 1000; ++t) {
    RingArray scales{};
    for (auto& x : scales) x = s(rng);
    const PotShape shape = PotShape().WithScales(scales);
    DesignAction a, b;
    for (std::size_t i = 0; i < kRingCount; ++i) {
      a.deltas[i] = u(rng);
      b.deltas[i] = a.deltas[i] + std::abs(u(rng));
    }
    const PotShape sa = ApplyAction(shape, a);
    const PotShape sb = ApplyAction(shape, b);
    for (std::size_t i = 0; i < kRingCount; ++i) {
      CHECK(sb.radius_scales()[i] >= sa.radius_scales()[i]);
    }
    CHECK(sa.ring_heights() == shape.ring_heights());
  }
}

TEST_CASE("radius_at interpolates linearly") {
  const PotShape cylinder;
  for (double z : {0.0, 0.3, 1.0, 1.77, 2.0}) CHECK(RadiusAt(cylinder, z) == 1.0);

  RingArray scales = Filled(1.0);
  scales[1] = 1.5;
  scales[3] = 0.7;
  const PotShape shape = PotShape().WithScales(scales);
  CHECK(RadiusAt(shape, shape.ring_heights()[3]) == shape.ring_radius(3));
  const double mid = 0.5 * (shape.ring_heights()[0] + shape.ring_heights()[1]);
  CHECK(RadiusAt(shape, mid) == doctest::Approx(1.25).epsilon(1e-14));
  CHECK_THROWS_AS(RadiusAt(shape, -0.01), OutOfRangeError);
  CHECK_THROWS_AS(RadiusAt(shape, 2.01), OutOfRangeError);
}

TEST_CASE("contains examples") {
  const PotShape cylinder;
  CHECK(Contains(cylinder, {0, 0, 1.0}));
  CHECK_FALSE(Contains(cylinder, {2, 0, 1.0}));
  CHECK_FALSE(Contains(cylinder, {0, 0, -0.1}));
  CHECK_FALSE(Contains(cylinder, {0, 0, 2.1}));
  CHECK_FALSE(Contains(cylinder, {1.0, 0, 1.0}));  // on the wall is outside
}

TEST_CASE("shape validation names the field") {
  const PotShape base;
  RingArray scales = Filled(1.0);
  scales[4] = 1.6;
  CHECK_THROWS_WITH_AS(PotShape(1.0, 2.0, base.ring_heights(), scales),
                       doctest::Contains("radius_scales[4]"), InvalidShapeError);
  RingArray heights = base.ring_heights();
  heights[6] = heights[5];
  CHECK_THROWS_WITH_AS(PotShape(1.0, 2.0, heights, Filled(1.0)),
                       doctest::Contains("ring_heights"), InvalidShapeError);
  CHECK_THROWS_AS(PotShape(-1.0, 2.0), InvalidShapeError);
  CHECK_THROWS_AS(PotShape(1.0, 0.0), InvalidShapeError);
}

TEST_CASE("OBJ export has 352 vertices and 320 quads") {
  const auto dir = std::filesystem::temp_directory_path() / "potrl_geometry_test";
  std::filesystem::create_directories(dir);
  const PointCloud cloud = BuildPointCloud(PotShape());
  ExportObj(cloud, dir / "a.obj");
  ExportObj(cloud, dir / "b.obj");
  const std::string a = Slurp(dir / "a.obj");
  CHECK(a == Slurp(dir / "b.obj"));
  CHECK(a == ObjText(cloud));

  int vertices = 0, faces = 0;
  std::istringstream lines(a);
  std::string line;
  while (std::getline(lines, line)) {
    if (line.rfind("v ", 0) == 0) ++vertices;
    if (line.rfind("f ", 0) == 0) {
      ++faces;
      std::istringstream f(line.substr(2));
      int idx, count = 0;
      while (f >> idx) {
        CHECK(idx >= 1);
        CHECK(idx <= 352);
        ++count;
      }
      CHECK(count == 4);
    }
  }
  CHECK(vertices == 352);
  CHECK(faces == 32 * 10);
  CHECK_THROWS_AS(ExportObj(cloud, dir / "missing" / "x.obj"), IoError);
  std::filesystem::remove_all(dir);
}
