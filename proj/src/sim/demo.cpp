#include "vla/sim/demo.hpp"

#include <algorithm>
#include <cmath>

#include "vla/errors.hpp"

namespace vla::sim {

namespace {

constexpr double kApproachClearance = kObjectRadius + kEndEffectorRadius + 0.02;

// Straight-line route from a to b, detouring around `obstacle` when the
// segment passes closer than `clearance`. Returns the points after a.
void route(Vec2 a, Vec2 b, Vec2 obstacle, double clearance, int depth, std::vector<Vec2>& out) {
  const Vec2 ab = b - a;
  const double len2 = ab.dot(ab);
  const double t = len2 > 0.0 ? std::clamp((obstacle - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  const Vec2 closest = a + ab * t;
  const double d = (closest - obstacle).norm();
  if (d >= clearance || depth >= 3 || t <= 0.0 || t >= 1.0) {
    out.push_back(b);
    return;
  }
  Vec2 n = d > 1e-9 ? (closest - obstacle) * (1.0 / d) : Vec2{-ab.y, ab.x} * (1.0 / std::sqrt(len2));
  const Vec2 via = obstacle + n * (clearance + 0.03);
  route(a, via, obstacle, clearance, depth + 1, out);
  route(via, b, obstacle, clearance, depth + 1, out);
}

class Demonstrator {
 public:
  Demonstrator(const WorldState& scene, const Task& task, std::mt19937_64& rng, const DemoOptions& opts)
      : world_(scene), rng_(rng), opts_(opts), noise_(0.0, 1.0) {
    demo_.task = task;
    demo_.scene = scene;
    record();
  }

  Demonstration run() {
    const SceneObject* obj = world_.find(demo_.task.target_class);
    if (!obj) throw DemoError("target class " + std::to_string(demo_.task.target_class) + " not in scene");
    if (demo_.task.kind == TaskKind::Push) {
      push(*obj);
    } else {
      circle(*obj);
    }
    const JointState rest = world_.joints;
    for (std::size_t k = 0; k < opts_.settle_frames; ++k) step_toward(rest);
    return std::move(demo_);
  }

 private:
  void record() {
    demo_.frames.push_back(
        {world_.joints, opts_.render_frames ? render(world_) : WorkspaceImage{kImageSize, kImageSize, {}}});
  }

  Vec2 ee() const { return world_.end_effector(); }

  Vec2 target_pos() const { return world_.find(demo_.task.target_class)->pos; }

  void step_toward(const JointState& goal) {
    if (demo_.frames.size() > opts_.max_steps) throw DemoError("demonstration exceeded its step budget");
    JointAction a{std::vector<double>(goal.size())};
    double peak = 0.0;
    for (std::size_t i = 0; i < goal.size(); ++i) {
      a.a[i] = angle_diff(goal.q[i], world_.joints.q[i]);
      peak = std::max(peak, std::abs(a.a[i]));
    }
    // Uniform scaling keeps the joint-space direction, so the end effector
    // moves close to the straight line toward the sub-goal.
    if (peak > kMaxJointVelocity) {
      for (auto& v : a.a) v *= kMaxJointVelocity / peak;
    }
    if (opts_.noise_sigma > 0.0) {
      for (auto& v : a.a) v += opts_.noise_sigma * noise_(rng_);
      a = clamp_action(std::move(a));
    }
    world_ = step(world_, a);
    record();
  }

  JointState ik(Vec2 target) const {
    try {
      return solve_ik(target, world_.joints, world_.arm);
    } catch (const IkError& e) {
      throw DemoError(std::string("sub-goal unreachable: ") + e.what());
    }
  }

  void pursue(Vec2 target, double tol) {
    while ((target - ee()).norm() > tol) {
      const Vec2 d = target - ee();
      const double dist = d.norm();
      const Vec2 carrot = dist > opts_.carrot_spacing ? ee() + d * (opts_.carrot_spacing / dist) : target;
      step_toward(ik(carrot));
    }
  }

  void follow_route(Vec2 goal, Vec2 obstacle, double tol) {
    std::vector<Vec2> pts;
    route(ee(), goal, obstacle, kApproachClearance, 0, pts);
    for (std::size_t i = 0; i < pts.size(); ++i) pursue(pts[i], i + 1 == pts.size() ? tol : 0.02);
  }

  void push(const SceneObject& obj) {
    const Vec2 heading = unit_from_angle(demo_.task.direction);
    const double contact_gap = obj.radius + kEndEffectorRadius;
    const Vec2 start = obj.pos;
    follow_route(obj.pos - heading * (contact_gap + opts_.standoff_gap), obj.pos, 0.01);
    pursue(target_pos() - heading * contact_gap, 0.005);
    demo_.contact_frame = demo_.frames.size() - 1;
    // Steer toward a point on the ideal push line beyond the goal so that
    // lateral drift of the object is corrected while pushing.
    const Vec2 aim = start + heading * (demo_.task.distance + opts_.push_margin + 0.1);
    while ((target_pos() - start).dot(heading) < demo_.task.distance + opts_.push_margin) {
      const Vec2 to_aim = aim - target_pos();
      const Vec2 u = to_aim * (1.0 / to_aim.norm());
      step_toward(ik(target_pos() - u * (contact_gap - opts_.push_bite)));
    }
  }

  void circle(const SceneObject& obj) {
    const double radius = obj.radius + kCircleClearance;
    const Vec2 centre = obj.pos;
    const Vec2 rel = ee() - centre;
    const double phi0 = std::atan2(rel.y, rel.x);
    follow_route(centre + unit_from_angle(phi0) * radius, centre, 0.01);
    demo_.contact_frame = demo_.frames.size() - 1;

    const double sweep = opts_.circle_sweep_deg * kPi / 180.0;
    const std::size_t n = opts_.circle_waypoints;
    double swept = 0.0;
    double prev = phi0;
    std::size_t next_station = 1;
    for (std::size_t k = 1; k <= n; ++k) {
      const double phi = phi0 + sweep * static_cast<double>(k) / static_cast<double>(n);
      const std::size_t before = demo_.frames.size();
      pursue(centre + unit_from_angle(phi) * radius, 0.01);
      for (std::size_t f = before; f < demo_.frames.size(); ++f) {
        const Vec2 r = fk(demo_.frames[f].joints, world_.arm) - centre;
        const double a = std::atan2(r.y, r.x);
        swept += angle_diff(a, prev);
        prev = a;
        while (next_station <= 4 && swept >= static_cast<double>(next_station) * kPi / 2.0) {
          demo_.station_frames.push_back(f);
          ++next_station;
        }
      }
    }
    if (demo_.station_frames.size() != 4) throw DemoError("circle demonstration did not complete its sweep");
  }

  WorldState world_;
  Demonstration demo_;
  std::mt19937_64& rng_;
  DemoOptions opts_;
  std::normal_distribution<double> noise_;
};

}  // namespace

Demonstration scripted_demo(const WorldState& scene, const Task& task, std::mt19937_64& rng,
                            const DemoOptions& opts) {
  return Demonstrator(scene, task, rng, opts).run();
}

std::vector<WorldState> replay(const Demonstration& demo) {
  std::vector<WorldState> history{demo.scene};
  for (std::size_t t = 1; t < demo.frames.size(); ++t) {
    const auto& prev = demo.frames[t - 1].joints;
    const auto& next = demo.frames[t].joints;
    JointAction a{std::vector<double>(prev.size())};
    for (std::size_t i = 0; i < prev.size(); ++i) a.a[i] = angle_diff(next.q[i], prev.q[i]);
    history.push_back(step(history.back(), a));
  }
  return history;
}

}  // namespace vla::sim
