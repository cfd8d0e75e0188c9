#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "vla/sim/kinematics.hpp"

namespace vla::sim {

inline constexpr double kEndEffectorRadius = 0.02;
inline constexpr double kObjectRadius = 0.03;
inline constexpr double kDt = 1.0;
inline constexpr std::size_t kImageSize = 48;

/// Object categories known to the workbench. Index order is the class id.
struct ClassCatalog {
  std::vector<std::string> names;

  std::size_t size() const noexcept { return names.size(); }
  int index_of(const std::string& name) const;  // throws ConfigError
  const std::string& name(int id) const;

  // spam, cup, animal, cube (base objects) and cereal (the few-shot object).
  static ClassCatalog standard();
};

// Fixed per-class RGB used by the renderer; unique for ids 0..7.
std::array<double, 3> class_color(int class_id);

struct SceneObject {
  int class_id = 0;
  Vec2 pos;
  double radius = kObjectRadius;
  friend bool operator==(const SceneObject&, const SceneObject&) = default;
};

struct WorldState {
  JointState joints;
  std::vector<SceneObject> objects;
  ArmGeometry arm;
  bool exited = false;  // an object left the unit workspace

  const SceneObject* find(int class_id) const;
  Vec2 end_effector() const { return fk(joints, arm); }
};

/// Integrates joints (q' = wrap(q + a*dt), a clamped) then resolves
/// end-effector contact: a penetrated object is translated along the
/// centre-to-centre direction by exactly the penetration depth.
WorldState step(const WorldState& world, const JointAction& action, double dt = kDt);

/// H x W x 3 intensities in [0,1], row 0 at the top of the workspace.
/// Every value is a multiple of 1/255, so 8-bit storage is lossless.
struct WorkspaceImage {
  std::size_t height = kImageSize;
  std::size_t width = kImageSize;
  std::vector<double> pixels;  // row-major HWC

  double at(std::size_t row, std::size_t col, std::size_t ch) const { return pixels[(row * width + col) * 3 + ch]; }
  std::vector<std::uint8_t> to_bytes() const;
  static WorkspaceImage from_bytes(const std::vector<std::uint8_t>& bytes, std::size_t height = kImageSize,
                                   std::size_t width = kImageSize);
  friend bool operator==(const WorkspaceImage&, const WorkspaceImage&) = default;
};

// Workspace point at the centre of a pixel.
Vec2 pixel_center(std::size_t row, std::size_t col, std::size_t height, std::size_t width);

WorkspaceImage render(const WorldState& world, std::size_t height = kImageSize, std::size_t width = kImageSize);

struct Region {
  double x_min = 0.0, x_max = 1.0, y_min = 0.0, y_max = 1.0;
};

enum class JointInit { Random, Home, HomeJitter };

struct SceneOptions {
  Region region;  // object centres are kept a radius inside it
  JointInit joint_init = JointInit::Random;
  double home_jitter = 0.05;
  std::size_t max_attempts = 1000;
  std::size_t dof = 4;
};

// Region where pushes and circles in every task direction stay reachable.
Region task_region();
// Task region with the arm starting near its home pose (demos and evaluation).
SceneOptions task_scene_options();

// Bent-elbow rest pose with the end effector above the task region.
JointState home_joints(const ArmGeometry& arm);

/// One object per requested class at uniform non-overlapping positions
/// (centres at least r_a + r_b + 2r apart, and as far from the initial end
/// effector so no episode starts in contact). Throws SamplingError when
/// rejection sampling exhausts its attempts.
WorldState sample_scene(std::mt19937_64& rng, const std::vector<int>& classes, const SceneOptions& opts = {});

}  // namespace vla::sim
