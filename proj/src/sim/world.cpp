#include "vla/sim/world.hpp"

#include <algorithm>
#include <cmath>

#include "vla/errors.hpp"

namespace vla::sim {

namespace {

double quantize(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

double segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = ab.dot(ab);
  const double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (p - (a + ab * t)).norm();
}

}  // namespace

int ClassCatalog::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return static_cast<int>(i);
  }
  throw ConfigError("unknown object class '" + name + "'");
}

const std::string& ClassCatalog::name(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= names.size()) {
    throw ConfigError("class id " + std::to_string(id) + " outside catalog");
  }
  return names[static_cast<std::size_t>(id)];
}

ClassCatalog ClassCatalog::standard() { return ClassCatalog{{"spam", "cup", "animal", "cube", "cereal"}}; }

std::array<double, 3> class_color(int class_id) {
  static constexpr std::array<std::array<double, 3>, 8> palette{{
      {1.0, 0.5, 0.0},
      {0.0, 1.0, 0.0},
      {1.0, 1.0, 1.0},
      {0.0, 1.0, 1.0},
      {1.0, 0.0, 1.0},
      {1.0, 1.0, 0.0},
      {0.5, 0.5, 1.0},
      {0.6, 1.0, 0.4},
  }};
  if (class_id < 0 || class_id >= static_cast<int>(palette.size())) {
    throw ConfigError("no render color for class " + std::to_string(class_id));
  }
  return palette[static_cast<std::size_t>(class_id)];
}

const SceneObject* WorldState::find(int class_id) const {
  for (const auto& o : objects) {
    if (o.class_id == class_id) return &o;
  }
  return nullptr;
}

WorldState step(const WorldState& world, const JointAction& action, double dt) {
  if (action.size() != world.joints.size()) throw ShapeError("action dimension does not match arm");
  WorldState next = world;
  const JointAction a = clamp_action(action);
  for (std::size_t i = 0; i < a.size(); ++i) next.joints.q[i] = wrap_angle(world.joints.q[i] + a.a[i] * dt);
  const Vec2 ee = next.end_effector();
  for (auto& o : next.objects) {
    const Vec2 d = o.pos - ee;
    const double dist = d.norm();
    const double reach = o.radius + kEndEffectorRadius;
    if (dist >= reach) continue;
    // Coincident centres: fall back to the end effector's direction of travel.
    Vec2 n = dist > 1e-12 ? d * (1.0 / dist) : ee - world.end_effector();
    if (n.norm() < 1e-12) n = {1.0, 0.0};
    n = n * (1.0 / n.norm());
    o.pos = o.pos + n * (reach - dist);
    if (o.pos.x < 0.0 || o.pos.x > 1.0 || o.pos.y < 0.0 || o.pos.y > 1.0) next.exited = true;
  }
  return next;
}

std::vector<std::uint8_t> WorkspaceImage::to_bytes() const {
  std::vector<std::uint8_t> out(pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    out[i] = static_cast<std::uint8_t>(std::lround(std::clamp(pixels[i], 0.0, 1.0) * 255.0));
  }
  return out;
}

WorkspaceImage WorkspaceImage::from_bytes(const std::vector<std::uint8_t>& bytes, std::size_t height,
                                          std::size_t width) {
  if (bytes.size() != height * width * 3) throw ShapeError("image byte count does not match dimensions");
  WorkspaceImage img{height, width, std::vector<double>(bytes.size())};
  for (std::size_t i = 0; i < bytes.size(); ++i) img.pixels[i] = bytes[i] / 255.0;
  return img;
}

Vec2 pixel_center(std::size_t row, std::size_t col, std::size_t height, std::size_t width) {
  return {(static_cast<double>(col) + 0.5) / static_cast<double>(width),
          1.0 - (static_cast<double>(row) + 0.5) / static_cast<double>(height)};
}

WorkspaceImage render(const WorldState& world, std::size_t height, std::size_t width) {
  WorkspaceImage img{height, width, std::vector<double>(height * width * 3, 0.0)};
  const auto pts = joint_positions(world.joints, world.arm);
  const double half_pixel = 0.5 / static_cast<double>(width);
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      const Vec2 p = pixel_center(r, c, height, width);
      double* px = &img.pixels[(r * width + c) * 3];
      px[0] = quantize(0.4 * p.y);
      for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
        if (segment_distance(p, pts[k], pts[k + 1]) <= half_pixel) {
          px[2] = 1.0;
          break;
        }
      }
      for (const auto& o : world.objects) {
        if ((p - o.pos).norm() <= o.radius) {
          const auto color = class_color(o.class_id);
          for (std::size_t ch = 0; ch < 3; ++ch) px[ch] = quantize(color[ch]);
        }
      }
    }
  }
  return img;
}

Region task_region() { return Region{0.3, 0.7, 0.35, 0.6}; }

SceneOptions task_scene_options() {
  SceneOptions o;
  o.region = task_region();
  o.joint_init = JointInit::HomeJitter;
  return o;
}

JointState home_joints(const ArmGeometry& arm) {
  JointState seed{std::vector<double>(arm.dof(), -0.6)};
  seed.q[0] = 2.0;
  return solve_ik({0.5, 0.75}, seed, arm, IkOptions{.tolerance = 1e-9});
}

WorldState sample_scene(std::mt19937_64& rng, const std::vector<int>& classes, const SceneOptions& opts) {
  if (classes.empty()) throw SamplingError("sample_scene needs at least one class");
  WorldState w;
  w.arm = ArmGeometry::with_dof(opts.dof);
  switch (opts.joint_init) {
    case JointInit::Random: {
      std::uniform_real_distribution<double> base(0.2, kPi - 0.2);
      std::uniform_real_distribution<double> rest(-2.0, 2.0);
      w.joints.q.resize(w.arm.dof());
      w.joints.q[0] = base(rng);
      for (std::size_t i = 1; i < w.arm.dof(); ++i) w.joints.q[i] = rest(rng);
      break;
    }
    case JointInit::Home: w.joints = home_joints(w.arm); break;
    case JointInit::HomeJitter: {
      w.joints = home_joints(w.arm);
      std::uniform_real_distribution<double> jitter(-opts.home_jitter, opts.home_jitter);
      for (auto& q : w.joints.q) q = wrap_angle(q + jitter(rng));
      break;
    }
  }
  for (int cls : classes) {
    if (w.find(cls)) throw SamplingError("class " + std::to_string(cls) + " requested twice");
    const double r = kObjectRadius;
    std::uniform_real_distribution<double> ux(opts.region.x_min + r, opts.region.x_max - r);
    std::uniform_real_distribution<double> uy(opts.region.y_min + r, opts.region.y_max - r);
    bool placed = false;
    for (std::size_t attempt = 0; attempt < opts.max_attempts && !placed; ++attempt) {
      const Vec2 p{ux(rng), uy(rng)};
      if ((p - w.end_effector()).norm() < r + kEndEffectorRadius + 2.0 * r) continue;
      const bool clear = std::all_of(w.objects.begin(), w.objects.end(), [&](const SceneObject& o) {
        return (o.pos - p).norm() >= o.radius + r + 2.0 * r;
      });
      if (clear) {
        w.objects.push_back({cls, p, r});
        placed = true;
      }
    }
    if (!placed) throw SamplingError("could not place class " + std::to_string(cls) + " without overlap");
  }
  return w;
}

}  // namespace vla::sim
