#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "vla/service/session.hpp"

namespace vla::service {

struct ServerConfig {
  std::filesystem::path models;
  std::string address = "127.0.0.1";
  unsigned short port = 8765;  // 0 picks a free port
  int tick_ms = 50;
  bool lockstep = false;
  std::size_t limit = teleop::kEpisodeLimit;
  std::filesystem::path log = "sessions.jsonl";  // one JSON line per finished trial
};

/// WebSocket server: one Session per connection, text frames carry one JSON
/// message each. All sessions run on a single event loop, so each session's
/// world is only touched sequentially.
class Server {
 public:
  explicit Server(ServerConfig config);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  // Binds and starts accepting; returns the bound port.
  unsigned short start();
  // Runs the event loop on the calling thread until stop().
  void run();
  void stop();

  struct Impl;

 private:
  std::unique_ptr<Impl> impl_;
};

}  // namespace vla::service
