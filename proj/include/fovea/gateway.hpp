#pragma once

#include <chrono>
#include <deque>
#include <memory>
#include <string>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "fovea/protocol.hpp"

namespace fovea::gateway {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

struct ServerOptions {
  std::string address = "127.0.0.1";
  unsigned short port = 8765;  ///< 0 picks a free port
  bool realtime = true;        ///< pace fixations to simulated time
  double speed = 1.0;          ///< simulated seconds per wall second when realtime
};

/// Single-client websocket endpoint around a protocol::Controller. All
/// session work and socket I/O run on one io_context thread; inbound
/// messages and fixation steps are serialized through it.
class Server {
 public:
  Server(protocol::Controller& controller, ServerOptions options)
      : controller_(controller), options_(options), acceptor_(ioc_), timer_(ioc_) {
    require(options.speed > 0, "speed must be positive");
    const tcp::endpoint ep(net::ip::make_address(options.address), options.port);
    acceptor_.open(ep.protocol());
    acceptor_.set_option(net::socket_base::reuse_address(true));
    acceptor_.bind(ep);
    acceptor_.listen();
  }

  unsigned short port() const { return acceptor_.local_endpoint().port(); }

  /// Serves until stop() is called.
  void run() {
    do_accept();
    ioc_.run();
  }

  /// Safe to call from any thread.
  void stop() {
    net::post(ioc_, [this] {
      beast::error_code ec;
      acceptor_.close(ec);
      timer_.cancel();
      if (conn_) conn_->ws.next_layer().close(ec);
      ioc_.stop();
    });
  }

 private:
  struct Connection {
    explicit Connection(tcp::socket s) : ws(std::move(s)) {}
    websocket::stream<tcp::socket> ws;
    beast::flat_buffer buffer;
    std::deque<std::string> queue;
    bool writing = false;
    bool open = true;
  };

  void do_accept() {
    acceptor_.async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      auto conn = std::make_shared<Connection>(std::move(socket));
      conn->ws.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
      conn->ws.async_accept([this, conn](beast::error_code ec2) {
        if (ec2) return;
        if (conn_) {
          beast::error_code ignored;
          conn_->open = false;
          conn_->ws.next_layer().close(ignored);
        }
        conn_ = conn;
        send(controller_.status());
        do_read(conn);
        if (!started_) {
          started_ = true;
          schedule_tick(std::chrono::milliseconds(0));
        }
      });
      do_accept();
    });
  }

  void do_read(const std::shared_ptr<Connection>& conn) {
    conn->ws.async_read(conn->buffer, [this, conn](beast::error_code ec, std::size_t) {
      if (ec) {
        conn->open = false;
        if (conn_ == conn) conn_.reset();
        return;
      }
      const std::string text = beast::buffers_to_string(conn->buffer.data());
      conn->buffer.consume(conn->buffer.size());
      for (const auto& m : controller_.handle_inbound(text)) send(m);
      do_read(conn);
    });
  }

  void send(const json& msg) {
    if (!conn_ || !conn_->open) return;
    conn_->queue.push_back(msg.dump());
    if (!conn_->writing) do_write(conn_);
  }

  void do_write(const std::shared_ptr<Connection>& conn) {
    if (conn->queue.empty() || !conn->open) {
      conn->writing = false;
      return;
    }
    conn->writing = true;
    conn->ws.text(true);
    conn->ws.async_write(net::buffer(conn->queue.front()), [this, conn](beast::error_code ec, std::size_t) {
      if (ec) {
        conn->open = false;
        conn->writing = false;
        if (conn_ == conn) conn_.reset();
        return;
      }
      conn->queue.pop_front();
      do_write(conn);
    });
  }

  void schedule_tick(std::chrono::steady_clock::duration delay) {
    timer_.expires_after(delay);
    timer_.async_wait([this](beast::error_code ec) {
      if (ec) return;
      tick();
    });
  }

  void tick() {
    if (controller_.finished()) return;
    if (controller_.paused()) {
      schedule_tick(std::chrono::milliseconds(20));
      return;
    }
    const double seconds = controller_.fixation_seconds();
    for (const auto& m : controller_.step()) send(m);
    if (controller_.finished()) return;
    const auto delay = options_.realtime
                           ? std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                 std::chrono::duration<double>(seconds / options_.speed))
                           : std::chrono::steady_clock::duration::zero();
    schedule_tick(delay);
  }

  protocol::Controller& controller_;
  ServerOptions options_;
  net::io_context ioc_;
  tcp::acceptor acceptor_;
  net::steady_timer timer_;
  std::shared_ptr<Connection> conn_;
  bool started_ = false;
};

}  // namespace fovea::gateway
