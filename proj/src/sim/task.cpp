#include "vla/sim/task.hpp"

#include <cmath>
#include <map>

#include "vla/errors.hpp"

namespace vla::sim {

Task make_task(int target_class, const std::string& name) {
  static const std::map<std::string, double> headings{
      {"east", 0.0}, {"south", -kPi / 2.0}, {"south-west", -3.0 * kPi / 4.0},
      {"west", kPi}, {"south-east", -kPi / 4.0},
  };
  Task t;
  t.target_class = target_class;
  t.name = name;
  if (name == "circle") {
    t.kind = TaskKind::Circle;
    return t;
  }
  const auto it = headings.find(name);
  if (it == headings.end()) throw TaskError("unknown task '" + name + "'");
  t.kind = TaskKind::Push;
  t.direction = it->second;
  return t;
}

namespace {

const SceneObject& target_of(const WorldState& w, const Task& task) {
  const SceneObject* o = w.find(task.target_class);
  if (!o) throw TaskError("target class " + std::to_string(task.target_class) + " absent from scene");
  return *o;
}

}  // namespace

double swept_angle(std::span<const WorldState> history, const Task& task) {
  if (history.empty()) throw TaskError("empty history");
  const SceneObject& final_obj = target_of(history.back(), task);
  const double inner = final_obj.radius;
  const double outer = final_obj.radius + kCircleBand;
  double best = 0.0;
  double run = 0.0;
  bool in_run = false;
  double prev_angle = 0.0;
  for (const auto& w : history) {
    const Vec2 d = w.end_effector() - final_obj.pos;
    const double r = d.norm();
    if (r < inner || r > outer) {
      in_run = false;
      run = 0.0;
      continue;
    }
    const double a = std::atan2(d.y, d.x);
    if (in_run) {
      run += angle_diff(a, prev_angle);
      best = std::max(best, std::abs(run));
    }
    in_run = true;
    prev_angle = a;
  }
  return best;
}

bool task_success(std::span<const WorldState> history, const Task& task) {
  if (history.empty()) throw TaskError("empty history");
  const SceneObject& start = target_of(history.front(), task);
  const SceneObject& end = target_of(history.back(), task);
  if (task.kind == TaskKind::Circle) return swept_angle(history, task) >= task.min_subtended;
  if (history.back().exited) return false;
  const Vec2 heading = unit_from_angle(task.direction);
  const Vec2 disp = end.pos - start.pos;
  const double along = disp.dot(heading);
  const double lateral = std::abs(heading.cross(disp));
  // tolerance keeps the inclusive boundary robust to trig round-off
  constexpr double eps = 1e-12;
  return along >= task.distance - eps &&
         lateral <= task.distance * std::tan(kSuccessConeDeg * kPi / 180.0) + eps;
}

}  // namespace vla::sim
