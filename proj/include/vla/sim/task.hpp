#pragma once

#include <span>
#include <string>

#include "vla/sim/world.hpp"

namespace vla::sim {

inline constexpr double kPushDistance = 0.15;
inline constexpr double kSuccessConeDeg = 15.0;
inline constexpr double kCircleClearance = 0.05;  // circle radius = object radius + this
inline constexpr double kCircleBand = 0.12;

enum class TaskKind { Push, Circle };

struct Task {
  int target_class = 0;
  TaskKind kind = TaskKind::Push;
  double direction = 0.0;          // push heading, radians (east = 0)
  double distance = kPushDistance;  // push length
  double min_subtended = 2.0 * kPi;  // circle
  std::string name;                 // east, south, south-west, west, south-east, circle

  friend bool operator==(const Task&, const Task&) = default;
};

/// Builds the task named `name` (one of the compass pushes or "circle")
/// for `target_class`. Throws TaskError for unknown names.
Task make_task(int target_class, const std::string& name);

/// Push: the target's displacement projected on the heading is at least D
/// and its lateral deviation at most D*tan(15 deg); an object leaving the
/// workspace fails. Circle: while the end effector stays within
/// [r_obj, r_obj + 0.12] of the final object position it sweeps >= 2 pi.
bool task_success(std::span<const WorldState> history, const Task& task);

// Largest contiguous in-band angle swept around the target (diagnostic for circles).
double swept_angle(std::span<const WorldState> history, const Task& task);

}  // namespace vla::sim
