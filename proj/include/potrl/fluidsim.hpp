#ifndef POTRL_FLUIDSIM_HPP_
#define POTRL_FLUIDSIM_HPP_

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "potrl/geometry.hpp"
#include "potrl/vec3.hpp"

namespace potrl {

struct Particle {
  Vec3 position;
  Vec3 velocity;
  friend bool operator==(const Particle&, const Particle&) = default;
};

// Rigid pose of the pot: a tilt about the world y-axis through `pivot`.
// Positive angles tip the rim toward +x. The untilted pot coincides with its
// body frame, so `pivot` has the same coordinates in both frames.
struct PotPose {
  double tilt_angle = 0.0;  // radians
  double tilt_rate = 0.0;   // radians / second
  Vec3 pivot;
};

Vec3 BodyToWorld(const PotPose& pose, const Vec3& body_point);
Vec3 WorldToBody(const PotPose& pose, const Vec3& world_point);
// Rotates a direction (no translation) from body to world.
Vec3 BodyDirectionToWorld(const PotPose& pose, const Vec3& body_dir);
// Velocity of the pot material located at a world point.
Vec3 WallVelocity(const PotPose& pose, const Vec3& world_point);

// Pour: tilt ramps linearly 0 -> max_tilt over ramp_seconds, then holds.
struct PourMotion {
  double max_tilt_deg = 130.0;
  double ramp_seconds = 2.0;
  double settle_seconds = 1.0;
  // Pivot height on the pot axis as a fraction of the pot height
  // (0 = centre of the floor, 1 = centre of the top rim).
  double pivot_height_fraction = 0.0;
};

// Shake: tilt = amplitude * sin(2 pi f t) for duration_seconds.
struct ShakeMotion {
  double amplitude_deg = 70.0;
  double duration_seconds = 13.0;
  double frequency_hz = 1.0;
  double pivot_height_fraction = 0.4;
};

struct SimConfig {
  double dt = 1.0 / 240.0;
  double gravity = 9.81;  // acts along -z
  double restitution = 0.1;
  double tangential_damping = 0.2;
  // Contacts approaching slower than this (length/s) are resting contact and
  // keep their tangential velocity.
  double resting_contact_speed = 0.1;
  // Soft-sphere repulsion between particles closer than interaction_radius
  // gives the water volume; 0 disables it (independent ballistic particles).
  double interaction_radius = 0.25;
  double contact_stiffness = 2000.0;  // 1/s^2, per unit mass
  double contact_damping = 20.0;      // 1/s, on approach speed
  int particle_count = 200;
  // Spawned particles are at least this far apart (less in pots too narrow
  // to hold them), which bounds the energy stored in overlapping soft
  // contacts at t = 0.
  double spawn_min_separation = 0.15;
  double fill_fraction = 0.5;
  PourMotion pour;
  ShakeMotion shake;

  // Throws InvalidConfigError naming the first offending field.
  void Validate() const;
};

// Receiving cup: an open-topped cylinder fixed in the world. Its base centre
// sits at pour pivot + center_offset; the default is (1.2 H, 0, -2 H) for the
// default pot height H = 2, i.e. well below and beyond the lip.
struct CupSpec {
  Vec3 center_offset{2.4, 0.0, -4.0};
  double radius = 0.5;
  double height = 1.0;

  void Validate() const;
};

struct TaskOutcome {
  int n_total = 0;
  int n_cup = 0;
  int n_pot = 0;
  int n_spilled = 0;
  friend bool operator==(const TaskOutcome&, const TaskOutcome&) = default;
};

// Called once per frame (frame 0 = initial state) with world positions.
using FrameObserver =
    std::function<void(int frame, std::span<const Particle> particles)>;

Vec3 PivotPoint(const PotShape& shape, double pivot_height_fraction);

// Uniform, seeded samples strictly inside the pot below the fill plane, at
// rest and pairwise at least spawn_min_separation apart. Throws SpawnError
// when the fill volume is empty or cannot hold the particles.
std::vector<Particle> SpawnParticles(const PotShape& shape,
                                     const SimConfig& cfg, std::uint64_t seed);

// One semi-implicit Euler step from pose `before` to pose `after`, followed by
// collision resolution against the pot (body frame) and the cup (if given).
void StepParticles(std::span<Particle> particles, const PotShape& shape,
                   const PotPose& before, const PotPose& after,
                   const SimConfig& cfg, const CupSpec* cup = nullptr);

// Partition of the particles at the pot's final pose.
TaskOutcome Classify(std::span<const Particle> particles, const PotShape& shape,
                     const PotPose& pose, const CupSpec* cup);

bool InsideCup(const CupSpec& cup, const Vec3& pivot, const Vec3& world_point);

TaskOutcome SimulatePour(const PotShape& shape, const SimConfig& cfg,
                         const CupSpec& cup, std::uint64_t seed,
                         const FrameObserver& observer = {});

// n_cup is always 0.
TaskOutcome SimulateShake(const PotShape& shape, const SimConfig& cfg,
                          std::uint64_t seed,
                          const FrameObserver& observer = {});

// The same motions starting from caller-supplied particles (world frame).
TaskOutcome RunPour(const PotShape& shape, const SimConfig& cfg,
                    const CupSpec& cup, std::vector<Particle> particles,
                    const FrameObserver& observer = {});
TaskOutcome RunShake(const PotShape& shape, const SimConfig& cfg,
                     std::vector<Particle> particles,
                     const FrameObserver& observer = {});

// CSV rows "frame,particle,x,y,z" (header written by the constructor).
class ParticleDumpWriter {
 public:
  explicit ParticleDumpWriter(std::ostream& out);
  void operator()(int frame, std::span<const Particle> particles);
  FrameObserver AsObserver();

 private:
  std::ostream* out_;
};

}  // namespace potrl

#endif  // POTRL_FLUIDSIM_HPP_
