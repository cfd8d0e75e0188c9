#pragma once

// Synchronous WebSocket client and an in-process server on its own thread,
// shared by the service unit tests and the acceptance suite.

#include <string>
#include <thread>
#include <vector>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "vla/service/protocol.hpp"
#include "vla/service/server.hpp"

namespace vla::oracle {

class Client {
 public:
  explicit Client(unsigned short port) : ws_(ioc_) {
    boost::asio::ip::tcp::resolver resolver(ioc_);
    boost::asio::connect(ws_.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
    ws_.handshake("127.0.0.1", "/");
  }
  void send(const service::ClientMessage& m) { ws_.write(boost::asio::buffer(service::serialize(m))); }
  service::json receive() {
    boost::beast::flat_buffer buf;
    ws_.read(buf);
    return service::json::parse(boost::beast::buffers_to_string(buf.data()));
  }
  service::json receive_until(const std::string& type, std::vector<service::json>* seen = nullptr) {
    for (;;) {
      auto m = receive();
      if (seen) seen->push_back(m);
      if (m["type"] == type) return m;
    }
  }

 private:
  boost::asio::io_context ioc_;
  boost::beast::websocket::stream<boost::asio::ip::tcp::socket> ws_;
};

struct RunningServer {
  explicit RunningServer(service::ServerConfig cfg) : server(std::move(cfg)) {
    port = server.start();
    thread = std::thread([this] { server.run(); });
  }
  ~RunningServer() {
    server.stop();
    thread.join();
  }
  service::Server server;
  unsigned short port = 0;
  std::thread thread;
};

}  // namespace vla::oracle
