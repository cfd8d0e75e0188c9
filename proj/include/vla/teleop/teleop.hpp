#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "vla/cae/cae.hpp"
#include "vla/sim/demo.hpp"

namespace vla::teleop {

inline constexpr std::size_t kEpisodeLimit = 30;
inline constexpr std::size_t kSwitchStep = 15;
inline constexpr double kEeSpeed = 0.01;  // m/step for the mode-switching baseline

struct LatentGrid {
  double z_min = -1.0;
  double z_max = 1.0;
  std::size_t bins = 201;

  // Symmetric evaluation, so the middle bin of an odd grid is exactly 0.
  double value(std::size_t k) const;
  std::vector<double> values() const;
};

/// Sequential joint-space targets. Stage i is active for steps
/// [switch_at[i-1], switch_at[i]); the last stage never expires. A push
/// plan is {pre, post} with one switch at k; a circle plan has four stations.
struct WaypointPlan {
  std::vector<sim::JointState> waypoints;
  std::vector<std::size_t> switch_at;  // waypoints.size() - 1 strictly increasing steps

  static WaypointPlan push(sim::JointState pre, sim::JointState post, std::size_t k = kSwitchStep);
  std::size_t stage_at(std::size_t step) const;
  const sim::JointState& at(std::size_t step) const { return waypoints[stage_at(step)]; }
  const sim::JointState& final() const { return waypoints.back(); }
  void validate() const;  // throws ConfigError
};

/// Plan read off a demonstration: pushes use the contact frame and the
/// last frame with the switch at k; circles use the four station frames,
/// switching when the demonstration reached each station.
WaypointPlan plan_from_demo(const sim::Demonstration& demo, std::size_t k = kSwitchStep);
// Plan from a noise-free scripted demonstration on this scene.
WaypointPlan plan_for_scene(const sim::WorldState& world, const sim::Task& task, std::size_t k = kSwitchStep);

using BatchDecoder = std::function<std::vector<sim::JointAction>(std::span<const double>)>;

/// argmin over the grid of ||w - (q + phi(z) dt)|| with wrapped joint
/// differences. Ties go to smaller |z|, then to negative z.
double greedy_latent(const BatchDecoder& decoder, const sim::JointState& q, const sim::JointState& w,
                     const LatentGrid& grid = {}, double dt = sim::kDt);
double greedy_latent(const cae::CAEModel& model, const cae::FusedState& s, const sim::JointState& q,
                     const sim::JointState& w, const LatentGrid& grid = {}, double dt = sim::kDt);

// Euclidean norm of the wrapped joint difference to the plan's last waypoint.
double final_state_error(const sim::JointState& final_joints, const sim::JointState& w_post);

struct EpisodeResult {
  std::vector<sim::WorldState> history;
  bool success = false;
  double final_state_error = 0.0;
  std::size_t steps = 0;
  std::string controller;
  std::string error;                      // set when the episode aborted
  std::vector<std::size_t> stage;         // waypoint stage in force at each step
  std::vector<double> latents;            // z applied at each step (latent controllers)
  std::vector<std::uint8_t> singular;     // per-step singular-Jacobian flag (baseline)
};

/// Step-by-step episode shared by the simulated teleoperator, the baseline
/// and the live service.
class Episode {
 public:
  Episode(sim::WorldState world, sim::Task task, WaypointPlan plan, std::size_t limit, bool end_on_success);

  void apply(const sim::JointAction& action);
  bool done() const;
  bool succeeded() const;
  std::size_t steps() const noexcept { return history_.size() - 1; }
  const sim::WorldState& world() const noexcept { return history_.back(); }
  const std::vector<sim::WorldState>& history() const noexcept { return history_; }
  const WaypointPlan& plan() const noexcept { return plan_; }
  const sim::Task& task() const noexcept { return task_; }
  std::size_t limit() const noexcept { return limit_; }
  EpisodeResult result(const std::string& controller) const;

 private:
  std::vector<sim::WorldState> history_;
  sim::Task task_;
  WaypointPlan plan_;
  std::size_t limit_;
  bool end_on_success_;
};

/// Greedy simulated teleoperator. Perception runs once on the first
/// rendered frame; each step re-fuses the current joints, picks z* against
/// the active waypoint and applies decode(z*, s). A perception failure
/// yields a failed result carrying the error text.
EpisodeResult run_sim_teleop(const sim::WorldState& world, const sim::Task& task, const cae::CAEModel& model,
                             const perception::PerceptionContext& ctx, const WaypointPlan& plan,
                             std::size_t limit = kEpisodeLimit, std::uint64_t perception_seed = 0,
                             const LatentGrid& grid = {});

/// Applies decode(z_t, s_t) for the given latent sequence (clamped to
/// [-1, 1]); perception runs once on the first frame as in run_sim_teleop.
EpisodeResult run_latent_inputs(const sim::WorldState& world, const sim::Task& task, const cae::CAEModel& model,
                                const perception::PerceptionContext& ctx, const WaypointPlan& plan,
                                std::span<const double> latents, std::size_t limit = kEpisodeLimit,
                                bool end_on_success = false, std::uint64_t perception_seed = 0);

struct EeInput {
  double axis = 0.0;  // [-1, 1]
  bool toggle = false;
};

/// Joint velocities that realise axis * kEeSpeed along x (mode 0) or y
/// (mode 1) through the damped pseudo-inverse; zero when singular.
sim::JointAction ee_action(const sim::JointState& q, const sim::ArmGeometry& arm, int mode, double axis,
                           bool& singular);

/// Two-mode end-effector baseline; `inputs` is consumed one entry per step
/// (missing entries mean no input).
EpisodeResult run_ee_baseline(const sim::WorldState& world, const sim::Task& task, std::span<const EeInput> inputs,
                              const WaypointPlan& plan, std::size_t limit, bool end_on_success = false);

struct ResultRow {
  std::size_t scene_id = 0;
  std::string task;
  std::string strategy;
  std::size_t demos_used = 0;
  bool success = false;
  double final_state_error = 0.0;
  std::size_t steps = 0;
};

// CSV with header scene_id,task,strategy,demos_used,success,final_state_error,steps.
void write_results_csv(const std::vector<ResultRow>& rows, const std::filesystem::path& path);

}  // namespace vla::teleop
