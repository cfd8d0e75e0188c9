#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "vla/perception/detector.hpp"
#include "vla/service/protocol.hpp"
#include "vla/teleop/teleop.hpp"

namespace vla::service {

/// Checkpoints in a directory: <dir>/<name>.json for CAE models and
/// <dir>/detector.json for the Structured detector. Loaded once, shared
/// read-only across sessions.
class ModelStore {
 public:
  explicit ModelStore(std::filesystem::path dir);

  // Throws CheckpointError when missing or corrupt.
  std::shared_ptr<const cae::CAEModel> model(const std::string& name);
  std::shared_ptr<const perception::GridDetector> detector();
  const std::filesystem::path& dir() const noexcept { return dir_; }

 private:
  std::filesystem::path dir_;
  std::mutex mutex_;
  std::map<std::string, std::shared_ptr<const cae::CAEModel>> models_;
  std::shared_ptr<const perception::GridDetector> detector_;
};

struct SessionConfig {
  std::size_t limit = teleop::kEpisodeLimit;
  std::size_t trials = 2;  // per (task, mode)
  bool lockstep = false;   // one simulator step per axis_input instead of per tick
  int tick_ms = 50;
};

// Target object positions of the practice scene and of every trial start.
inline constexpr sim::Vec2 kPracticePosition{0.5, 0.45};
inline constexpr sim::Vec2 kTrialPosition{0.45, 0.5};

// Object class used for a task when the client names none.
int default_class_for_task(const std::string& task);

struct TrialRecord {
  std::string session;
  std::string mode;
  std::string task;
  std::size_t trial = 0;
  bool success = false;
  double final_state_error = 0.0;
  std::size_t steps = 0;
  double wall_ms = 0.0;

  json to_json() const;
};

/// One client's session. Not thread-safe: the owner feeds messages and
/// ticks from one sequential loop. Inputs are queued and applied at the next
/// tick; in lockstep mode every axis_input ticks immediately.
class Session {
 public:
  Session(std::string id, ModelStore& store, SessionConfig config,
          std::function<void(const TrialRecord&)> on_trial = {});

  /// Messages to send in reply (acks, warnings, and in lockstep mode the
  /// frames produced by the step).
  std::vector<json> handle(const ClientMessage& msg);
  std::vector<json> handle_text(const std::string& text);

  /// Applies the queued input, if any, and returns a state_frame (plus
  /// episode_end when the episode finished). Nothing once the episode has
  /// ended, until a reset.
  std::vector<json> tick();

  bool is_open() const noexcept { return open_; }
  bool closed() const noexcept { return closed_; }
  bool episode_over() const noexcept { return ended_; }
  const std::string& id() const noexcept { return id_; }
  std::string phase() const;
  const teleop::Episode* episode() const noexcept { return episode_ ? &*episode_ : nullptr; }
  const SessionConfig& config() const noexcept { return config_; }

 private:
  std::vector<json> open(const ClientMessage& msg);
  std::optional<json> start_episode(sim::Vec2 target);
  json ack() const;
  json frame();
  json episode_end() const;

  std::string id_;
  ModelStore& store_;
  SessionConfig config_;
  std::function<void(const TrialRecord&)> on_trial_;

  bool open_ = false;
  bool closed_ = false;
  ControlMode mode_ = ControlMode::Latent;
  std::string model_name_;
  std::shared_ptr<const cae::CAEModel> model_;
  sim::Task task_;
  std::size_t trial_ = 0;  // 0 = practice
  bool trial_finished_ = false;

  std::optional<teleop::Episode> episode_;
  perception::VisualContext visual_;
  bool ended_ = true;
  int ee_mode_ = 0;
  std::optional<double> pending_axis_;
  bool pending_toggle_ = false;
  std::uint64_t seq_ = 0;
  std::chrono::steady_clock::time_point started_;
};

}  // namespace vla::service
