#include "potrl/fluidsim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <ostream>
#include <random>
#include <vector>

#include "potrl/error.hpp"
#include "potrl/format.hpp"

namespace potrl {
namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
// Relative offset used when projecting a particle back onto a surface, so the
// projected point lies unambiguously on the side it came from.
constexpr double kSkin = 1e-7;

// PotPose with its rotation evaluated once.
struct PoseFrame {
  explicit PoseFrame(const PotPose& pose)
      : pivot(pose.pivot),
        c(std::cos(pose.tilt_angle)),
        s(std::sin(pose.tilt_angle)),
        rate(pose.tilt_rate) {}

  Vec3 DirToWorld(const Vec3& v) const {
    return {c * v.x + s * v.z, v.y, -s * v.x + c * v.z};
  }
  Vec3 DirToBody(const Vec3& v) const {
    return {c * v.x - s * v.z, v.y, s * v.x + c * v.z};
  }
  Vec3 ToWorld(const Vec3& p) const { return pivot + DirToWorld(p - pivot); }
  Vec3 ToBody(const Vec3& p) const { return pivot + DirToBody(p - pivot); }
  Vec3 WallVelocity(const Vec3& world_point) const {
    return Cross(Vec3{0.0, rate, 0.0}, world_point - pivot);
  }

  Vec3 pivot;
  double c;
  double s;
  double rate;
};

// The pot and the cup share one collision routine: both are open-topped
// surfaces of revolution about their local z-axis with a floor at z = 0.
struct PotVessel {
  const PotShape& shape;
  double height() const { return shape.height(); }
  double Radius(double z) const {
    return RadiusAt(shape, std::clamp(z, 0.0, shape.height()));
  }
  double Slope(double z) const { return WallSlopeAt(shape, z); }
  bool Contains(const Vec3& p) const { return potrl::Contains(shape, p); }
};

struct CupVessel {
  const CupSpec& cup;
  double height() const { return cup.height; }
  double Radius(double) const { return cup.radius; }
  double Slope(double) const { return 0.0; }
  bool Contains(const Vec3& p) const {
    return p.z >= 0.0 && p.z <= cup.height && RadialDistance(p) < cup.radius;
  }
};

struct Resolution {
  Vec3 position;
  int contacts = 0;
  // Unit normals pointing in the direction the particle was penetrating.
  std::array<Vec3, 2> normals{};

  void Add(const Vec3& n) { normals[static_cast<std::size_t>(contacts++)] = n; }
};

Vec3 WallOutwardNormal(double x, double y, double slope) {
  double r = std::hypot(x, y);
  Vec3 n = r > 0.0 ? Vec3{x / r, y / r, -slope} : Vec3{1.0, 0.0, -slope};
  return n * (1.0 / Norm(n));
}

template <class Vessel>
Resolution Resolve(const Vessel& vessel, const Vec3& prev, const Vec3& next) {
  Resolution res{next};
  const bool was_inside = vessel.Contains(prev);
  const bool now_inside = vessel.Contains(next);
  if (was_inside == now_inside) return res;

  const double h = vessel.height();
  Vec3& p = res.position;
  if (was_inside) {
    if (next.z > h) {
      double s = (h - prev.z) / (next.z - prev.z);
      Vec3 crossing = prev + (next - prev) * s;
      if (RadialDistance(crossing) < vessel.Radius(h)) return res;  // mouth
      p.z = h * (1.0 - kSkin);
    }
    if (p.z < 0.0) {
      p.z = h * kSkin;
      res.Add({0.0, 0.0, -1.0});
    }
    double r = RadialDistance(p);
    double limit = vessel.Radius(p.z) * (1.0 - kSkin);
    if (r >= limit) {
      Vec3 n = WallOutwardNormal(p.x, p.y, vessel.Slope(p.z));
      double k = r > 0.0 ? limit / r : 0.0;
      p.x *= k;
      p.y *= k;
      res.Add(n);
    }
    return res;
  }

  // Entering through anything other than the mouth is blocked.
  if (prev.z >= h) return res;
  if (prev.z < 0.0) {
    p.z = -h * kSkin;
    res.Add({0.0, 0.0, 1.0});
    return res;
  }
  double r = RadialDistance(p);
  double target = vessel.Radius(p.z) * (1.0 + kSkin);
  Vec3 n = WallOutwardNormal(r > 0.0 ? p.x : prev.x, r > 0.0 ? p.y : prev.y,
                             vessel.Slope(p.z));
  p.x = n.x * target / std::hypot(n.x, n.y);
  p.y = n.y * target / std::hypot(n.x, n.y);
  res.Add(-n);
  return res;
}

// Reflects the normal component (if approaching) and damps the tangential
// component of a velocity measured relative to the surface.
Vec3 Respond(Vec3 rel, const Vec3& normal, const SimConfig& cfg) {
  double vn = Dot(rel, normal);
  if (vn <= 0.0) return rel;
  Vec3 tangential = rel - normal * vn;
  // Slow approaches are resting contact: the particle slides without loss.
  double keep = vn > cfg.resting_contact_speed ? 1.0 - cfg.tangential_damping : 1.0;
  return tangential * keep - normal * (cfg.restitution * vn);
}

Vec3 CupBase(const CupSpec& cup, const Vec3& pivot) {
  return pivot + cup.center_offset;
}

void ResolvePot(Particle& particle, const Vec3& prev_body, const PotShape& shape,
                const PoseFrame& after, const SimConfig& cfg) {
  Vec3 next_body = after.ToBody(particle.position);
  Resolution res = Resolve(PotVessel{shape}, prev_body, next_body);
  if (res.contacts == 0) return;
  particle.position = after.ToWorld(res.position);
  Vec3 wall_velocity = after.WallVelocity(particle.position);
  Vec3 rel = particle.velocity - wall_velocity;
  for (int i = 0; i < res.contacts; ++i) {
    rel = Respond(rel, after.DirToWorld(res.normals[static_cast<std::size_t>(i)]), cfg);
  }
  particle.velocity = wall_velocity + rel;
}

void ResolveCup(Particle& particle, const Vec3& prev_world, const CupSpec& cup,
                const Vec3& base, const SimConfig& cfg) {
  Resolution res = Resolve(CupVessel{cup}, prev_world - base, particle.position - base);
  if (res.contacts == 0) return;
  particle.position = res.position + base;
  for (int i = 0; i < res.contacts; ++i) {
    particle.velocity = Respond(particle.velocity, res.normals[static_cast<std::size_t>(i)], cfg);
  }
}

// Scratch buffers for the contact pass, reused across frames.
struct ContactScratch {
  std::vector<std::size_t> order;
  std::vector<Vec3> dv;
};

// Pairwise soft-sphere repulsion, accumulated into velocity increments.
// Candidate pairs come from a sweep over particles sorted by y. The sort key
// is a strict total order and the summation order is fixed, so results are
// bit-reproducible. Sweeping along y (not x) keeps the pass exactly
// mirror-symmetric under x -> -x.
void ApplyParticleContacts(std::span<Particle> particles, const SimConfig& cfg,
                           ContactScratch& scratch) {
  const double d0 = cfg.interaction_radius;
  if (!(d0 > 0.0) || particles.size() < 2) return;
  const std::size_t n = particles.size();
  auto& order = scratch.order;
  if (order.size() != n) {
    order.resize(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
  }
  auto before = [&](std::size_t a, std::size_t b) {
    double ya = particles[a].position.y;
    double yb = particles[b].position.y;
    return ya < yb || (ya == yb && a < b);
  };
  // near-linear: particles barely move between frames
  for (std::size_t k = 1; k < n; ++k) {
    std::size_t v = order[k];
    std::size_t m = k;
    while (m > 0 && before(v, order[m - 1])) {
      order[m] = order[m - 1];
      --m;
    }
    order[m] = v;
  }

  auto& dv = scratch.dv;
  dv.assign(n, Vec3{});
  for (std::size_t oi = 0; oi < n; ++oi) {
    const std::size_t i = order[oi];
    const Particle& a = particles[i];
    for (std::size_t oj = oi + 1; oj < n; ++oj) {
      const std::size_t j = order[oj];
      const Particle& b = particles[j];
      if (b.position.y - a.position.y >= d0) break;
      Vec3 d = a.position - b.position;
      if (std::abs(d.x) >= d0 || std::abs(d.z) >= d0) continue;
      double dist2 = Dot(d, d);
      if (dist2 >= d0 * d0 || dist2 == 0.0) continue;
      double dist = std::sqrt(dist2);
      Vec3 n_ab = d * (1.0 / dist);
      double approach = -Dot(a.velocity - b.velocity, n_ab);
      double magnitude = cfg.contact_stiffness * (d0 - dist) +
                         (approach > 0.0 ? cfg.contact_damping * approach : 0.0);
      Vec3 impulse = n_ab * (magnitude * cfg.dt);
      dv[i] += impulse;
      dv[j] -= impulse;
    }
  }
  for (std::size_t i = 0; i < n; ++i) particles[i].velocity += dv[i];
}

PotPose PoseAt(const Vec3& pivot, double angle, double rate) {
  return PotPose{angle, rate, pivot};
}

// Volume of the pot between heights z0 and z1 (midpoint rule).
double FillVolume(const PotShape& shape, double z0, double z1) {
  constexpr int kSlices = 256;
  const double dz = (z1 - z0) / kSlices;
  double volume = 0.0;
  for (int i = 0; i < kSlices; ++i) {
    const double r = RadiusAt(shape, z0 + (i + 0.5) * dz);
    volume += std::numbers::pi * r * r * dz;
  }
  return volume;
}

}  // namespace

Vec3 BodyToWorld(const PotPose& pose, const Vec3& body_point) {
  return PoseFrame(pose).ToWorld(body_point);
}

Vec3 WorldToBody(const PotPose& pose, const Vec3& world_point) {
  return PoseFrame(pose).ToBody(world_point);
}

Vec3 BodyDirectionToWorld(const PotPose& pose, const Vec3& body_dir) {
  return PoseFrame(pose).DirToWorld(body_dir);
}

Vec3 WallVelocity(const PotPose& pose, const Vec3& world_point) {
  return PoseFrame(pose).WallVelocity(world_point);
}

void SimConfig::Validate() const {
  auto fail = [](const char* field, const char* why) {
    throw InvalidConfigError(std::string("sim.") + field + ": " + why);
  };
  if (!(dt > 0.0 && std::isfinite(dt))) fail("dt", "must be positive");
  if (!std::isfinite(gravity)) fail("gravity", "must be finite");
  if (!(restitution >= 0.0 && restitution <= 1.0)) fail("restitution", "must lie in [0, 1]");
  if (!(tangential_damping >= 0.0 && tangential_damping <= 1.0)) {
    fail("tangential_damping", "must lie in [0, 1]");
  }
  if (!(interaction_radius >= 0.0)) fail("interaction_radius", "must be non-negative");
  if (!(contact_stiffness >= 0.0)) fail("contact_stiffness", "must be non-negative");
  if (!(contact_damping >= 0.0)) fail("contact_damping", "must be non-negative");
  if (particle_count <= 0) fail("particle_count", "must be positive");
  if (!(spawn_min_separation >= 0.0)) fail("spawn_min_separation", "must be non-negative");
  if (!(fill_fraction >= 0.0 && fill_fraction <= 1.0)) fail("fill_fraction", "must lie in [0, 1]");
  if (!(pour.pivot_height_fraction >= 0.0 && pour.pivot_height_fraction <= 1.0)) {
    fail("pour.pivot_height_fraction", "must lie in [0, 1]");
  }
  if (!(shake.pivot_height_fraction >= 0.0 && shake.pivot_height_fraction <= 1.0)) {
    fail("shake.pivot_height_fraction", "must lie in [0, 1]");
  }
  if (!(std::abs(pour.max_tilt_deg) <= 180.0)) fail("pour.max_tilt_deg", "must lie in [-180, 180]");
  if (!(pour.ramp_seconds > 0.0)) fail("pour.ramp_seconds", "must be positive");
  if (!(pour.settle_seconds >= 0.0)) fail("pour.settle_seconds", "must be non-negative");
  if (!(std::abs(shake.amplitude_deg) <= 180.0)) fail("shake.amplitude_deg", "must lie in [-180, 180]");
  if (!(shake.duration_seconds >= 0.0)) fail("shake.duration_seconds", "must be non-negative");
  if (!(shake.frequency_hz >= 0.0)) fail("shake.frequency_hz", "must be non-negative");
}

void CupSpec::Validate() const {
  if (!(radius > 0.0)) throw InvalidConfigError("cup.radius: must be positive");
  if (!(height > 0.0)) throw InvalidConfigError("cup.height: must be positive");
  if (!IsFinite(center_offset)) throw InvalidConfigError("cup.center_offset: must be finite");
}

Vec3 PivotPoint(const PotShape& shape, double pivot_height_fraction) {
  return {0.0, 0.0, shape.height() * pivot_height_fraction};
}

std::vector<Particle> SpawnParticles(const PotShape& shape,
                                     const SimConfig& cfg, std::uint64_t seed) {
  const double fill_height = cfg.fill_fraction * shape.height();
  const double margin = 1e-3 * shape.height();
  if (!(fill_height > 2.0 * margin) || cfg.particle_count <= 0) {
    throw SpawnError("spawn volume is empty (fill_fraction too small)");
  }
  const double reach = shape.max_radius();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> horizontal(-reach, reach);
  std::uniform_real_distribution<double> vertical(margin, fill_height);

  // Narrow pots get a smaller separation so the particles still fit
  // comfortably (0.6 x the mean spacing keeps the packing fraction near 0.11).
  const double mean_spacing =
      std::cbrt(FillVolume(shape, margin, fill_height) / cfg.particle_count);
  const double min_sep = std::min(cfg.spawn_min_separation, 0.6 * mean_spacing);
  const double min_sep_sq = min_sep * min_sep;
  std::vector<Particle> particles;
  particles.reserve(static_cast<std::size_t>(cfg.particle_count));
  const long max_attempts = 1000L * cfg.particle_count;
  for (long attempt = 0; attempt < max_attempts &&
                         particles.size() < static_cast<std::size_t>(cfg.particle_count);
       ++attempt) {
    Vec3 p{horizontal(rng), horizontal(rng), vertical(rng)};
    if (p.z >= fill_height) continue;
    if (!(RadialDistance(p) < RadiusAt(shape, p.z) * (1.0 - 1e-3))) continue;
    bool crowded = false;
    for (const Particle& q : particles) {
      const Vec3 d = q.position - p;
      if (Dot(d, d) < min_sep_sq) {
        crowded = true;
        break;
      }
    }
    if (!crowded) particles.push_back({p, {}});
  }
  if (particles.size() != static_cast<std::size_t>(cfg.particle_count)) {
    throw SpawnError("could not place all particles inside the pot");
  }
  return particles;
}

void StepParticles(std::span<Particle> particles, const PotShape& shape,
                   const PotPose& before, const PotPose& after,
                   const SimConfig& cfg, const CupSpec* cup) {
  const Vec3 gravity_dv{0.0, 0.0, -cfg.gravity * cfg.dt};
  const Vec3 cup_base = cup ? CupBase(*cup, after.pivot) : Vec3{};
  thread_local ContactScratch scratch;
  ApplyParticleContacts(particles, cfg, scratch);
  const PoseFrame frame_before(before);
  const PoseFrame frame_after(after);
  for (Particle& particle : particles) {
    const Vec3 prev_world = particle.position;
    const Vec3 prev_body = frame_before.ToBody(prev_world);
    particle.velocity += gravity_dv;
    particle.position += particle.velocity * cfg.dt;
    ResolvePot(particle, prev_body, shape, frame_after, cfg);
    if (cup) ResolveCup(particle, prev_world, *cup, cup_base, cfg);
  }
}

bool InsideCup(const CupSpec& cup, const Vec3& pivot, const Vec3& world_point) {
  return CupVessel{cup}.Contains(world_point - CupBase(cup, pivot));
}

TaskOutcome Classify(std::span<const Particle> particles, const PotShape& shape,
                     const PotPose& pose, const CupSpec* cup) {
  const PoseFrame frame(pose);
  TaskOutcome out;
  out.n_total = static_cast<int>(particles.size());
  for (const Particle& particle : particles) {
    if (cup && InsideCup(*cup, pose.pivot, particle.position)) {
      ++out.n_cup;
    } else if (Contains(shape, frame.ToBody(particle.position))) {
      ++out.n_pot;
    } else {
      ++out.n_spilled;
    }
  }
  return out;
}

TaskOutcome SimulatePour(const PotShape& shape, const SimConfig& cfg,
                         const CupSpec& cup, std::uint64_t seed,
                         const FrameObserver& observer) {
  cfg.Validate();
  cup.Validate();
  return RunPour(shape, cfg, cup, SpawnParticles(shape, cfg, seed), observer);
}

TaskOutcome RunPour(const PotShape& shape, const SimConfig& cfg,
                    const CupSpec& cup, std::vector<Particle> particles,
                    const FrameObserver& observer) {
  cfg.Validate();
  cup.Validate();
  const Vec3 pivot = PivotPoint(shape, cfg.pour.pivot_height_fraction);
  const double max_tilt = cfg.pour.max_tilt_deg * kDegToRad;
  const int ramp_frames = static_cast<int>(std::lround(cfg.pour.ramp_seconds / cfg.dt));
  const int total_frames =
      ramp_frames + static_cast<int>(std::lround(cfg.pour.settle_seconds / cfg.dt));
  auto angle_at = [&](int frame) {
    if (frame >= ramp_frames) return max_tilt;
    return max_tilt * static_cast<double>(frame) / static_cast<double>(ramp_frames);
  };

  if (observer) observer(0, particles);
  PotPose before = PoseAt(pivot, 0.0, 0.0);
  for (int frame = 1; frame <= total_frames; ++frame) {
    double angle = angle_at(frame);
    double rate = (angle - before.tilt_angle) / cfg.dt;
    before.tilt_rate = rate;
    PotPose after = PoseAt(pivot, angle, rate);
    StepParticles(particles, shape, before, after, cfg, &cup);
    if (observer) observer(frame, particles);
    before = after;
  }
  return Classify(particles, shape, before, &cup);
}

TaskOutcome SimulateShake(const PotShape& shape, const SimConfig& cfg,
                          std::uint64_t seed, const FrameObserver& observer) {
  cfg.Validate();
  return RunShake(shape, cfg, SpawnParticles(shape, cfg, seed), observer);
}

TaskOutcome RunShake(const PotShape& shape, const SimConfig& cfg,
                     std::vector<Particle> particles,
                     const FrameObserver& observer) {
  cfg.Validate();
  const Vec3 pivot = PivotPoint(shape, cfg.shake.pivot_height_fraction);
  const double amplitude = cfg.shake.amplitude_deg * kDegToRad;
  const double omega = 2.0 * std::numbers::pi * cfg.shake.frequency_hz;
  const int total_frames =
      static_cast<int>(std::lround(cfg.shake.duration_seconds / cfg.dt));
  auto angle_at = [&](int frame) {
    return amplitude * std::sin(omega * cfg.dt * static_cast<double>(frame));
  };

  if (observer) observer(0, particles);
  PotPose before = PoseAt(pivot, 0.0, 0.0);
  for (int frame = 1; frame <= total_frames; ++frame) {
    double angle = angle_at(frame);
    double rate = (angle - before.tilt_angle) / cfg.dt;
    before.tilt_rate = rate;
    PotPose after = PoseAt(pivot, angle, rate);
    StepParticles(particles, shape, before, after, cfg, nullptr);
    if (observer) observer(frame, particles);
    before = after;
  }
  return Classify(particles, shape, before, nullptr);
}

ParticleDumpWriter::ParticleDumpWriter(std::ostream& out) : out_(&out) {
  *out_ << "frame,particle,x,y,z\n";
}

void ParticleDumpWriter::operator()(int frame,
                                    std::span<const Particle> particles) {
  for (std::size_t i = 0; i < particles.size(); ++i) {
    const Vec3& p = particles[i].position;
    *out_ << frame << ',' << i << ',' << FormatDouble(p.x) << ','
          << FormatDouble(p.y) << ',' << FormatDouble(p.z) << '\n';
  }
}

FrameObserver ParticleDumpWriter::AsObserver() {
  return [this](int frame, std::span<const Particle> particles) {
    (*this)(frame, particles);
  };
}

}  // namespace potrl
