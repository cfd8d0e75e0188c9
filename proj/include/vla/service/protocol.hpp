#pragma once

#include <optional>
#include <string>

#include <nlohmann/json.hpp>

namespace vla::service {

using nlohmann::json;

enum class ClientType { Hello, SelectMode, SelectTask, AxisInput, ModeToggle, ResetPractice, BeginTrials, Quit };

std::string to_string(ClientType t);

enum class ControlMode { Latent, EndEffector };

std::string to_string(ControlMode m);
ControlMode control_mode_from_string(const std::string& name);  // throws ProtocolError

/// Client messages are JSON objects with a "type" field. hello carries the
/// initial mode, task and model; select_mode and select_task change one of
/// them; axis_input carries "value".
struct ClientMessage {
  ClientType type = ClientType::Hello;
  std::optional<ControlMode> mode;
  std::string model;  // checkpoint name in the model directory (latent mode)
  std::string task;
  std::optional<int> target_class;  // defaults to the object that task belongs to
  double axis = 0.0;

  static ClientMessage axis_input(double value);
};

/// Throws ProtocolError for malformed text, unknown types or missing fields.
ClientMessage parse_client(const std::string& text);
std::string serialize(const ClientMessage& msg);

// Server messages are built as JSON: session_ack, state_frame, episode_end, error.
json error_message(const std::string& message, bool warning);

}  // namespace vla::service
