#include "vla/service/protocol.hpp"

#include <array>
#include <cmath>
#include <utility>

#include "vla/errors.hpp"

namespace vla::service {

namespace {

constexpr std::array<std::pair<ClientType, const char*>, 8> kTypes{{
    {ClientType::Hello, "hello"},
    {ClientType::SelectMode, "select_mode"},
    {ClientType::SelectTask, "select_task"},
    {ClientType::AxisInput, "axis_input"},
    {ClientType::ModeToggle, "mode_toggle"},
    {ClientType::ResetPractice, "reset_practice"},
    {ClientType::BeginTrials, "begin_trials"},
    {ClientType::Quit, "quit"},
}};

ClientType type_from_string(const std::string& name) {
  for (const auto& [t, n] : kTypes) {
    if (name == n) return t;
  }
  throw ProtocolError("unknown message type '" + name + "'");
}

}  // namespace

std::string to_string(ClientType t) {
  for (const auto& [k, n] : kTypes) {
    if (k == t) return n;
  }
  return "unknown";
}

std::string to_string(ControlMode m) { return m == ControlMode::Latent ? "latent" : "end-effector"; }

ControlMode control_mode_from_string(const std::string& name) {
  if (name == "latent") return ControlMode::Latent;
  if (name == "end-effector") return ControlMode::EndEffector;
  throw ProtocolError("unknown control mode '" + name + "' (latent, end-effector)");
}

ClientMessage ClientMessage::axis_input(double value) {
  ClientMessage m;
  m.type = ClientType::AxisInput;
  m.axis = value;
  return m;
}

ClientMessage parse_client(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ProtocolError(std::string("malformed message: ") + e.what());
  }
  if (!j.is_object() || !j.contains("type") || !j["type"].is_string()) {
    throw ProtocolError("message needs a string \"type\" field");
  }
  ClientMessage m;
  m.type = type_from_string(j["type"].get<std::string>());
  try {
    if (j.contains("mode")) m.mode = control_mode_from_string(j["mode"].get<std::string>());
    m.model = j.value("model", std::string());
    m.task = j.value("task", std::string());
    if (j.contains("target_class")) m.target_class = j["target_class"].get<int>();
    if (m.type == ClientType::AxisInput) {
      if (!j.contains("value") || !j["value"].is_number()) throw ProtocolError("axis_input needs a numeric \"value\"");
      m.axis = j["value"].get<double>();
      if (!std::isfinite(m.axis)) throw ProtocolError("axis value must be finite");
    }
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("bad field: ") + e.what());
  }
  if (m.type == ClientType::Hello && (!m.mode || m.task.empty())) {
    throw ProtocolError("hello needs \"mode\" and \"task\"");
  }
  if (m.type == ClientType::SelectMode && !m.mode) throw ProtocolError("select_mode needs \"mode\"");
  if (m.type == ClientType::SelectTask && m.task.empty()) throw ProtocolError("select_task needs \"task\"");
  return m;
}

std::string serialize(const ClientMessage& msg) {
  json j{{"type", to_string(msg.type)}};
  if (msg.mode) j["mode"] = to_string(*msg.mode);
  if (!msg.model.empty()) j["model"] = msg.model;
  if (!msg.task.empty()) j["task"] = msg.task;
  if (msg.target_class) j["target_class"] = *msg.target_class;
  if (msg.type == ClientType::AxisInput) j["value"] = msg.axis;
  return j.dump();
}

json error_message(const std::string& message, bool warning) {
  return json{{"type", "error"}, {"level", warning ? "warning" : "error"}, {"message", message}};
}

}  // namespace vla::service
