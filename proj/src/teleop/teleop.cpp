#include "vla/teleop/teleop.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

#include "vla/errors.hpp"
#include "vla/sim/task.hpp"

namespace vla::teleop {

double LatentGrid::value(std::size_t k) const {
  const double n = static_cast<double>(bins - 1);
  const double kk = static_cast<double>(k);
  return (z_min * (n - kk) + z_max * kk) / n;
}

std::vector<double> LatentGrid::values() const {
  if (bins < 3 || bins % 2 == 0) throw ConfigError("latent grid needs an odd number of bins >= 3");
  std::vector<double> v(bins);
  for (std::size_t k = 0; k < bins; ++k) v[k] = value(k);
  return v;
}

WaypointPlan WaypointPlan::push(sim::JointState pre, sim::JointState post, std::size_t k) {
  WaypointPlan p{{std::move(pre), std::move(post)}, {k}};
  p.validate();
  return p;
}

void WaypointPlan::validate() const {
  if (waypoints.empty()) throw ConfigError("waypoint plan is empty");
  if (switch_at.size() + 1 != waypoints.size()) throw ConfigError("waypoint plan needs one switch per extra stage");
  for (std::size_t i = 0; i < switch_at.size(); ++i) {
    if (switch_at[i] < 1 || (i > 0 && switch_at[i] <= switch_at[i - 1])) {
      throw ConfigError("waypoint switch steps must be >= 1 and increasing");
    }
  }
}

std::size_t WaypointPlan::stage_at(std::size_t step) const {
  std::size_t s = 0;
  while (s < switch_at.size() && step >= switch_at[s]) ++s;
  return s;
}

WaypointPlan plan_from_demo(const sim::Demonstration& demo, std::size_t k) {
  if (demo.frames.size() < 2) throw DemoError("demonstration too short for a waypoint plan");
  if (demo.task.kind == sim::TaskKind::Push) {
    return WaypointPlan::push(demo.frames.at(demo.contact_frame).joints, demo.frames.back().joints, k);
  }
  if (demo.station_frames.size() != 4) throw DemoError("circle demonstration lacks its four stations");
  WaypointPlan p;
  for (std::size_t i = 0; i < 4; ++i) {
    p.waypoints.push_back(demo.frames.at(demo.station_frames[i]).joints);
    if (i < 3) p.switch_at.push_back(demo.station_frames[i]);
  }
  p.validate();
  return p;
}

WaypointPlan plan_for_scene(const sim::WorldState& world, const sim::Task& task, std::size_t k) {
  std::mt19937_64 unused(0);
  sim::DemoOptions opts;
  opts.noise_sigma = 0.0;
  opts.render_frames = false;
  return plan_from_demo(sim::scripted_demo(world, task, unused, opts), k);
}

double greedy_latent(const BatchDecoder& decoder, const sim::JointState& q, const sim::JointState& w,
                     const LatentGrid& grid, double dt) {
  const auto zs = grid.values();
  const auto actions = decoder(zs);
  if (actions.size() != zs.size()) throw ShapeError("decoder returned the wrong number of actions");
  double best_z = 0.0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < zs.size(); ++k) {
    const auto& a = actions[k];
    if (a.size() != q.size() || w.size() != q.size()) throw ShapeError("greedy search dimension mismatch");
    double obj = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
      const double d = sim::angle_diff(w.q[i], q.q[i] + a.a[i] * dt);
      obj += d * d;
    }
    obj = std::sqrt(obj);
    const double z = zs[k];
    const bool better = obj < best || (obj == best && (std::abs(z) < std::abs(best_z) ||
                                                       (std::abs(z) == std::abs(best_z) && z < best_z)));
    if (better) {
      best = obj;
      best_z = z;
    }
  }
  return best_z;
}

double greedy_latent(const cae::CAEModel& model, const cae::FusedState& s, const sim::JointState& q,
                     const sim::JointState& w, const LatentGrid& grid, double dt) {
  return greedy_latent([&](std::span<const double> zs) { return cae::decode_batch(model, zs, s); }, q, w, grid, dt);
}

double final_state_error(const sim::JointState& final_joints, const sim::JointState& w_post) {
  return sim::joint_distance(final_joints, w_post);
}

Episode::Episode(sim::WorldState world, sim::Task task, WaypointPlan plan, std::size_t limit, bool end_on_success)
    : history_{std::move(world)},
      task_(std::move(task)),
      plan_(std::move(plan)),
      limit_(limit),
      end_on_success_(end_on_success) {
  plan_.validate();
}

void Episode::apply(const sim::JointAction& action) {
  if (done()) throw StateError("episode already finished");
  history_.push_back(sim::step(history_.back(), action));
}

bool Episode::succeeded() const { return sim::task_success(history_, task_); }

bool Episode::done() const {
  if (steps() >= limit_) return true;
  if (history_.back().exited) return true;
  return end_on_success_ && steps() > 0 && succeeded();
}

EpisodeResult Episode::result(const std::string& controller) const {
  EpisodeResult r;
  r.history = history_;
  r.success = succeeded();
  r.final_state_error = final_state_error(history_.back().joints, plan_.final());
  r.steps = steps();
  r.controller = controller;
  return r;
}

EpisodeResult run_sim_teleop(const sim::WorldState& world, const sim::Task& task, const cae::CAEModel& model,
                             const perception::PerceptionContext& ctx, const WaypointPlan& plan, std::size_t limit,
                             std::uint64_t perception_seed, const LatentGrid& grid) {
  const std::string tag = "latent/" + perception::to_string(model.strategy);
  Episode ep(world, task, plan, limit, false);
  perception::VisualContext visual;
  try {
    std::mt19937_64 rng(perception_seed);
    visual = perception::perceive(ctx, sim::render(world), world, rng);
  } catch (const PerceptionError& e) {
    auto r = ep.result(tag);
    r.success = false;
    r.error = e.what();
    return r;
  }
  std::vector<std::size_t> stages;
  std::vector<double> latents;
  while (!ep.done()) {
    const std::size_t t = ep.steps();
    const auto& q = ep.world().joints;
    const auto s = perception::fuse_state(q, visual);
    stages.push_back(plan.stage_at(t));
    const double z = greedy_latent(model, s, q, plan.at(t), grid);
    latents.push_back(z);
    ep.apply(cae::decode(model, z, s));
  }
  auto r = ep.result(tag);
  r.stage = std::move(stages);
  r.latents = std::move(latents);
  return r;
}

EpisodeResult run_latent_inputs(const sim::WorldState& world, const sim::Task& task, const cae::CAEModel& model,
                                const perception::PerceptionContext& ctx, const WaypointPlan& plan,
                                std::span<const double> latents, std::size_t limit, bool end_on_success,
                                std::uint64_t perception_seed) {
  const std::string tag = "latent/" + perception::to_string(model.strategy);
  Episode ep(world, task, plan, limit, end_on_success);
  std::mt19937_64 rng(perception_seed);
  const auto visual = perception::perceive(ctx, sim::render(world), world, rng);
  std::vector<std::size_t> stages;
  std::vector<double> applied;
  while (!ep.done() && ep.steps() < latents.size()) {
    const double z = std::clamp(latents[ep.steps()], -1.0, 1.0);
    stages.push_back(plan.stage_at(ep.steps()));
    applied.push_back(z);
    ep.apply(cae::decode(model, z, perception::fuse_state(ep.world().joints, visual)));
  }
  auto r = ep.result(tag);
  r.stage = std::move(stages);
  r.latents = std::move(applied);
  return r;
}

sim::JointAction ee_action(const sim::JointState& q, const sim::ArmGeometry& arm, int mode, double axis,
                           bool& singular) {
  const double v = std::clamp(axis, -1.0, 1.0) * kEeSpeed;
  const sim::Vec2 vel = mode == 0 ? sim::Vec2{v, 0.0} : sim::Vec2{0.0, v};
  auto a = sim::ee_velocity_to_joints(q, arm, vel, 0.01, singular);
  if (singular) return sim::JointAction{std::vector<double>(q.size(), 0.0)};
  return sim::clamp_action(std::move(a));
}

EpisodeResult run_ee_baseline(const sim::WorldState& world, const sim::Task& task, std::span<const EeInput> inputs,
                              const WaypointPlan& plan, std::size_t limit, bool end_on_success) {
  Episode ep(world, task, plan, limit, end_on_success);
  int mode = 0;
  std::vector<std::uint8_t> flags;
  while (!ep.done()) {
    const std::size_t t = ep.steps();
    const EeInput in = t < inputs.size() ? inputs[t] : EeInput{};
    if (in.toggle) mode = 1 - mode;
    bool singular = false;
    ep.apply(ee_action(ep.world().joints, ep.world().arm, mode, in.axis, singular));
    flags.push_back(singular ? 1 : 0);
  }
  auto r = ep.result("end-effector");
  r.singular = std::move(flags);
  return r;
}

void write_results_csv(const std::vector<ResultRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "scene_id,task,strategy,demos_used,success,final_state_error,steps\n";
  out << std::setprecision(17);
  for (const auto& r : rows) {
    out << r.scene_id << ',' << r.task << ',' << r.strategy << ',' << r.demos_used << ',' << (r.success ? 1 : 0)
        << ',' << r.final_state_error << ',' << r.steps << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace vla::teleop
