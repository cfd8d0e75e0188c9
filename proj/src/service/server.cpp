#include "vla/service/server.hpp"

#include <atomic>
#include <deque>
#include <fstream>
#include <iostream>
#include <mutex>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "vla/errors.hpp"

namespace vla::service {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

struct Server::Impl {
  ServerConfig config;
  net::io_context ioc{1};
  tcp::acceptor acceptor{ioc};
  ModelStore store;
  std::mutex log_mutex;
  std::ofstream log;
  std::atomic<std::uint64_t> next_id{1};

  explicit Impl(ServerConfig c) : config(std::move(c)), store(config.models) {}

  void record(const TrialRecord& r) {
    std::lock_guard lock(log_mutex);
    if (!log.is_open()) {
      log.open(config.log, std::ios::app);
      if (!log) {
        std::cerr << "cannot open outcome log " << config.log << '\n';
        return;
      }
    }
    log << r.to_json().dump() << '\n';
    log.flush();
  }

  void accept();
};

namespace {

class Connection : public std::enable_shared_from_this<Connection> {
 public:
  Connection(tcp::socket socket, Server::Impl& server)
      : ws_(std::move(socket)),
        timer_(ws_.get_executor()),
        server_(server),
        session_("s" + std::to_string(server.next_id++), server.store,
                 SessionConfig{server.config.limit, 2, server.config.lockstep, server.config.tick_ms},
                 [&server](const TrialRecord& r) { server.record(r); }) {}

  void start() {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(beast::bind_front_handler(&Connection::on_accept, shared_from_this()));
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) return;
    read();
    if (!server_.config.lockstep) schedule_tick();
  }

  void read() { ws_.async_read(buffer_, beast::bind_front_handler(&Connection::on_read, shared_from_this())); }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) {
      done_ = true;
      timer_.cancel();
      return;
    }
    const std::string text = beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    for (const auto& m : session_.handle_text(text)) send(m.dump());
    if (session_.closed()) {
      done_ = true;
      timer_.cancel();
      close_after_writes_ = true;
      if (!writing_) close();
      return;
    }
    read();
  }

  void schedule_tick() {
    timer_.expires_after(std::chrono::milliseconds(server_.config.tick_ms));
    timer_.async_wait([self = shared_from_this()](beast::error_code ec) {
      if (ec || self->done_) return;
      for (const auto& m : self->session_.tick()) self->send(m.dump());
      self->schedule_tick();
    });
  }

  void send(std::string text) {
    outbox_.push_back(std::move(text));
    if (!writing_) write_next();
  }

  void write_next() {
    if (outbox_.empty()) {
      writing_ = false;
      if (close_after_writes_) close();
      return;
    }
    writing_ = true;
    ws_.text(true);
    ws_.async_write(net::buffer(outbox_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      self->outbox_.pop_front();
      if (ec) {
        self->done_ = true;
        self->outbox_.clear();
        self->writing_ = false;
        return;
      }
      self->write_next();
    });
  }

  void close() {
    ws_.async_close(websocket::close_code::normal, [self = shared_from_this()](beast::error_code) {});
  }

  websocket::stream<beast::tcp_stream> ws_;
  net::steady_timer timer_;
  Server::Impl& server_;
  Session session_;
  beast::flat_buffer buffer_;
  std::deque<std::string> outbox_;
  bool writing_ = false;
  bool done_ = false;
  bool close_after_writes_ = false;
};

}  // namespace

void Server::Impl::accept() {
  acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
    if (ec) return;
    std::make_shared<Connection>(std::move(socket), *this)->start();
    accept();
  });
}

Server::Server(ServerConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {
  if (impl_->config.tick_ms <= 0) throw ConfigError("tick must be at least 1 ms");
}

Server::~Server() = default;

unsigned short Server::start() {
  const tcp::endpoint ep{net::ip::make_address(impl_->config.address), impl_->config.port};
  impl_->acceptor.open(ep.protocol());
  impl_->acceptor.set_option(net::socket_base::reuse_address(true));
  impl_->acceptor.bind(ep);
  impl_->acceptor.listen();
  impl_->accept();
  return impl_->acceptor.local_endpoint().port();
}

void Server::run() { impl_->ioc.run(); }

void Server::stop() { impl_->ioc.stop(); }

}  // namespace vla::service
