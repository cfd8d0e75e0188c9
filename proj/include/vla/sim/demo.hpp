#pragma once

#include <random>
#include <vector>

#include "vla/sim/task.hpp"
#include "vla/sim/world.hpp"

namespace vla::sim {

struct Frame {
  JointState joints;
  WorkspaceImage image;
};

struct Demonstration {
  Task task;
  WorldState scene;  // initial world
  std::vector<Frame> frames;
  // Frame at which a push first touches the object, and for circles the frames
  // where the swept angle first reaches 90, 180, 270 and 360 degrees.
  std::size_t contact_frame = 0;
  std::vector<std::size_t> station_frames;
};

struct DemoOptions {
  double noise_sigma = 0.005;    // exploration noise on joint velocities, rad/step
  double carrot_spacing = 0.05;  // look-ahead along straight-line approach segments
  double standoff_gap = 0.04;    // extra clearance behind the contact point
  double push_bite = 0.02;       // per-step penetration target while pushing
  double push_margin = 0.01;     // pushed beyond D by this much
  std::size_t circle_waypoints = 24;
  double circle_sweep_deg = 375.0;  // slight overshoot so the sweep clears 2 pi
  std::size_t settle_frames = 3;    // noisy hold at the end, so demos also show the arm at rest
  std::size_t max_steps = 200;
  bool render_frames = true;
};

/// Scripted oracle demonstrator. Push: detour around the object if needed,
/// come to a standoff behind it, close to the contact point, then drive
/// through along the heading until displaced by D. Circle: reach the nearest
/// point of a circle of radius r_obj + 0.05 and track its waypoints. Targets
/// are IK-solved from the current joints and tracked with clamped joint steps.
/// Throws DemoError when a sub-goal is unreachable or the step budget runs out.
Demonstration scripted_demo(const WorldState& scene, const Task& task, std::mt19937_64& rng,
                            const DemoOptions& opts = {});

// Re-simulates a demonstration from its scene using consecutive joint deltas.
std::vector<WorldState> replay(const Demonstration& demo);

}  // namespace vla::sim
