#include "vla/service/session.hpp"

#include <algorithm>

#include "vla/errors.hpp"
#include "vla/sim/task.hpp"

namespace vla::service {

ModelStore::ModelStore(std::filesystem::path dir) : dir_(std::move(dir)) {}

std::shared_ptr<const cae::CAEModel> ModelStore::model(const std::string& name) {
  if (name.empty() || name.find('/') != std::string::npos || name.find("..") != std::string::npos) {
    throw CheckpointError("invalid model name '" + name + "'");
  }
  std::lock_guard lock(mutex_);
  auto it = models_.find(name);
  if (it != models_.end()) return it->second;
  auto m = std::make_shared<const cae::CAEModel>(cae::load_model(dir_ / (name + ".json")));
  models_.emplace(name, m);
  return m;
}

std::shared_ptr<const perception::GridDetector> ModelStore::detector() {
  std::lock_guard lock(mutex_);
  if (!detector_) {
    detector_ = std::make_shared<const perception::GridDetector>(perception::load_detector(dir_ / "detector.json"));
  }
  return detector_;
}

int default_class_for_task(const std::string& task) {
  if (task == "east") return 0;
  if (task == "south") return 1;
  if (task == "south-west") return 2;
  if (task == "west") return 3;
  return 4;  // south-east and circle belong to the held-out object
}

json TrialRecord::to_json() const {
  return json{{"session", session}, {"mode", mode},   {"task", task},   {"trial", trial},
              {"success", success}, {"final_state_error", final_state_error},
              {"steps", steps},     {"wall_ms", wall_ms}};
}

Session::Session(std::string id, ModelStore& store, SessionConfig config,
                 std::function<void(const TrialRecord&)> on_trial)
    : id_(std::move(id)), store_(store), config_(config), on_trial_(std::move(on_trial)) {}

std::string Session::phase() const { return trial_ == 0 ? "practice" : "trial-" + std::to_string(trial_); }

std::vector<json> Session::handle_text(const std::string& text) {
  try {
    return handle(parse_client(text));
  } catch (const ProtocolError& e) {
    return {error_message(e.what(), false)};
  }
}

std::vector<json> Session::handle(const ClientMessage& msg) {
  if (closed_) return {error_message("session closed", false)};
  if (msg.type == ClientType::Quit) {
    closed_ = true;
    return {};
  }
  if (!open_) {
    if (msg.type != ClientType::Hello) return {error_message("send hello first", false)};
    return open(msg);
  }
  switch (msg.type) {
    case ClientType::Hello: return {error_message("session already open", true)};
    case ClientType::SelectMode:
    case ClientType::SelectTask: {
      ClientMessage next;
      next.mode = msg.type == ClientType::SelectMode ? msg.mode : std::optional<ControlMode>(mode_);
      next.model = msg.type == ClientType::SelectMode ? msg.model : model_name_;
      next.task = msg.type == ClientType::SelectTask ? msg.task : task_.name;
      next.target_class = msg.type == ClientType::SelectTask ? msg.target_class
                                                               : std::optional<int>(task_.target_class);
      return open(next);
    }
    case ClientType::AxisInput: {
      if (ended_) return {error_message("episode over; reset_practice or begin_trials to continue", true)};
      pending_axis_ = std::clamp(msg.axis, -1.0, 1.0);
      if (config_.lockstep) return tick();
      return {};
    }
    case ClientType::ModeToggle: {
      if (mode_ == ControlMode::Latent) return {error_message("mode_toggle has no effect in latent mode", true)};
      if (ended_) return {error_message("episode over; reset_practice or begin_trials to continue", true)};
      pending_toggle_ = !pending_toggle_;
      return {};
    }
    case ClientType::ResetPractice: {
      if (trial_ != 0) return {error_message("practice is over once trials have begun", true)};
      if (auto err = start_episode(kPracticePosition)) return {*err};
      return {frame()};
    }
    case ClientType::BeginTrials: {
      if (trial_ != 0 && !trial_finished_) return {error_message("trial in progress", true)};
      if (trial_ >= config_.trials) return {error_message("all trials done; select a task or mode", true)};
      ++trial_;
      trial_finished_ = false;
      if (auto err = start_episode(kTrialPosition)) return {*err};
      return {ack(), frame()};
    }
    case ClientType::Quit: break;
  }
  return {};
}

std::vector<json> Session::open(const ClientMessage& msg) {
  ControlMode mode = *msg.mode;
  sim::Task task;
  try {
    task = sim::make_task(msg.target_class.value_or(default_class_for_task(msg.task)), msg.task);
  } catch (const Error& e) {
    return {error_message(e.what(), false)};
  }
  if (task.target_class < 0 || task.target_class >= static_cast<int>(sim::ClassCatalog::standard().size())) {
    return {error_message("target class out of range", false)};
  }
  std::shared_ptr<const cae::CAEModel> model;
  if (mode == ControlMode::Latent) {
    try {
      model = store_.model(msg.model);
      if (model->dof != sim::ArmGeometry{}.dof()) throw CheckpointError("model was trained for another arm");
      if (model->strategy == perception::Strategy::Structured) store_.detector();
    } catch (const Error& e) {
      return {error_message(std::string("cannot load model: ") + e.what(), false)};
    }
  }
  mode_ = mode;
  model_ = std::move(model);
  model_name_ = msg.model;
  task_ = task;
  trial_ = 0;
  trial_finished_ = false;
  open_ = true;
  if (auto err = start_episode(kPracticePosition)) return {ack(), *err};
  return {ack(), frame()};
}

std::optional<json> Session::start_episode(sim::Vec2 target) {
  ended_ = true;
  episode_.reset();
  pending_axis_.reset();
  pending_toggle_ = false;
  ee_mode_ = 0;
  sim::WorldState w;
  w.joints = sim::home_joints(w.arm);
  w.objects = {{task_.target_class, target, sim::kObjectRadius}};
  try {
    auto plan = teleop::plan_for_scene(w, task_);
    if (mode_ == ControlMode::Latent) {
      const auto det = model_->strategy == perception::Strategy::Structured ? store_.detector() : nullptr;
      std::mt19937_64 rng(0);
      visual_ = perception::perceive(model_->perception_context(task_.target_class, det.get()), sim::render(w), w,
                                     rng);
    }
    episode_.emplace(w, task_, std::move(plan), config_.limit, true);
  } catch (const Error& e) {
    return error_message(std::string("cannot start episode: ") + e.what(), false);
  }
  ended_ = false;
  started_ = std::chrono::steady_clock::now();
  return std::nullopt;
}

std::vector<json> Session::tick() {
  if (!open_ || closed_ || ended_ || !episode_) return {};
  if (pending_toggle_) {
    ee_mode_ = 1 - ee_mode_;
    pending_toggle_ = false;
  }
  if (pending_axis_) {
    const double axis = *pending_axis_;
    pending_axis_.reset();
    const auto& q = episode_->world().joints;
    if (mode_ == ControlMode::Latent) {
      episode_->apply(cae::decode(*model_, axis, perception::fuse_state(q, visual_)));
    } else {
      bool singular = false;
      episode_->apply(teleop::ee_action(q, episode_->world().arm, ee_mode_, axis, singular));
    }
  }
  std::vector<json> out{frame()};
  if (episode_->done()) {
    ended_ = true;
    out.push_back(episode_end());
    if (trial_ > 0) {
      trial_finished_ = true;
      if (on_trial_) {
        const auto r = episode_->result(to_string(mode_));
        on_trial_(TrialRecord{id_, to_string(mode_), task_.name, trial_, r.success, r.final_state_error, r.steps,
                              std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started_)
                                  .count()});
      }
    }
  }
  return out;
}

json Session::ack() const {
  const sim::ArmGeometry arm;
  json j{{"type", "session_ack"},
         {"session", id_},
         {"mode", to_string(mode_)},
         {"task", task_.name},
         {"target_class", task_.target_class},
         {"phase", phase()},
         {"trials", config_.trials},
         {"limit", config_.limit},
         {"tick_ms", config_.tick_ms},
         {"lockstep", config_.lockstep},
         {"arm", {{"base", {arm.base.x, arm.base.y}}, {"links", arm.links}}}};
  if (mode_ == ControlMode::Latent) j["model"] = model_name_;
  return j;
}

json Session::frame() {
  const auto& w = episode_->world();
  const auto ee = w.end_effector();
  json objects = json::array();
  for (const auto& o : w.objects) {
    objects.push_back({{"class_id", o.class_id}, {"x", o.pos.x}, {"y", o.pos.y}, {"radius", o.radius}});
  }
  json j{{"type", "state_frame"}, {"seq", seq_++},         {"step", episode_->steps()},
         {"phase", phase()},      {"joints", w.joints.q},  {"ee_xy", {ee.x, ee.y}},
         {"objects", objects},    {"exited", w.exited}};
  if (mode_ == ControlMode::EndEffector) j["ee_mode"] = ee_mode_;
  return j;
}

json Session::episode_end() const {
  const auto r = episode_->result(to_string(mode_));
  return json{{"type", "episode_end"},
              {"success", r.success},
              {"final_state_error", r.final_state_error},
              {"steps", r.steps},
              {"phase", phase()}};
}

}  // namespace vla::service
