#pragma once

#include <atomic>
#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <chrono>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <array>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "rock/teleop.hpp"

namespace rock {

namespace teleop_net {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

/// Sink for lines read from clients; called on the I/O thread.
struct Inbox {
  struct Item {
    int client = 0;
    std::string text;
    bool disconnect = false;
  };

  void push(Item it) {
    std::lock_guard<std::mutex> lock(mu);
    items.push_back(std::move(it));
  }
  std::deque<Item> drain() {
    std::lock_guard<std::mutex> lock(mu);
    std::deque<Item> out;
    out.swap(items);
    return out;
  }

  std::mutex mu;
  std::deque<Item> items;
};

/// One client. The first bytes decide the transport: "GET " starts a
/// WebSocket handshake, anything else is newline-delimited JSON over raw
/// TCP. All socket work runs on the single I/O thread.
class Connection : public std::enable_shared_from_this<Connection> {
 public:
  Connection(tcp::socket s, int id, Inbox& inbox)
      : ex_(s.get_executor()), socket_(std::move(s)), id_(id), inbox_(inbox) {}

  int id() const noexcept { return id_; }

  void start() {
    auto self = shared_from_this();
    socket_.async_read_some(
        asio::buffer(head_), [self](beast::error_code ec, std::size_t n) {
          if (ec) return self->closed();
          self->pending_.assign(self->head_.data(), n);
          if (self->pending_.rfind("GET", 0) == 0) self->start_websocket();
          else self->raw_scan();
        });
  }

  /// Queues one JSON line; safe from any thread.
  void send(std::string line) {
    auto self = shared_from_this();
    asio::post(ex_, [self, line = std::move(line)]() mutable {
      if (self->dead_) return;
      self->outq_.push_back(std::move(line));
      if (self->outq_.size() == 1) self->write_next();
    });
  }

  void close() {
    auto self = shared_from_this();
    asio::post(ex_, [self] {
      beast::error_code ec;
      if (self->ws_) beast::get_lowest_layer(*self->ws_).close(ec);
      else self->socket_.close(ec);
    });
  }

 private:
  void closed() {
    if (dead_) return;
    dead_ = true;
    inbox_.push({id_, {}, true});
  }

  void deliver(const std::string& chunk) {
    std::size_t start = 0;
    while (start <= chunk.size()) {
      const auto nl = chunk.find('\n', start);
      std::string line = chunk.substr(start, nl == std::string::npos ? std::string::npos : nl - start);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) inbox_.push({id_, std::move(line), false});
      if (nl == std::string::npos) break;
      start = nl + 1;
    }
  }

  void raw_scan() {
    for (;;) {
      const auto nl = pending_.find('\n');
      if (nl == std::string::npos) break;
      deliver(pending_.substr(0, nl));
      pending_.erase(0, nl + 1);
    }
    if (pending_.size() > (1u << 20)) return closed();
    auto self = shared_from_this();
    socket_.async_read_some(asio::buffer(head_), [self](beast::error_code ec, std::size_t n) {
      if (ec) return self->closed();
      self->pending_.append(self->head_.data(), n);
      self->raw_scan();
    });
  }

  void start_websocket() {
    buffer_.commit(asio::buffer_copy(buffer_.prepare(pending_.size()), asio::buffer(pending_)));
    pending_.clear();
    auto self = shared_from_this();
    http::async_read(socket_, buffer_, request_, [self](beast::error_code ec, std::size_t) {
      if (ec || !websocket::is_upgrade(self->request_)) return self->closed();
      self->ws_.emplace(std::move(self->socket_));
      self->ws_->text(true);
      self->ws_->async_accept(self->request_, [self](beast::error_code ec2) {
        if (ec2) return self->closed();
        self->ws_read();
      });
    });
  }

  void ws_read() {
    auto self = shared_from_this();
    frame_.clear();
    ws_->async_read(frame_, [self](beast::error_code ec, std::size_t) {
      if (ec) return self->closed();
      self->deliver(beast::buffers_to_string(self->frame_.data()));
      self->ws_read();
    });
  }

  void write_next() {
    auto self = shared_from_this();
    auto done = [self](beast::error_code ec, std::size_t) {
      if (ec) {
        self->outq_.clear();
        return self->closed();
      }
      self->outq_.pop_front();
      if (!self->outq_.empty()) self->write_next();
    };
    if (ws_) {
      ws_->async_write(asio::buffer(outq_.front()), done);
    } else {
      if (outq_.front().empty() || outq_.front().back() != '\n') outq_.front() += '\n';
      asio::async_write(socket_, asio::buffer(outq_.front()), done);
    }
  }

  asio::any_io_executor ex_;
  tcp::socket socket_;
  std::optional<websocket::stream<tcp::socket>> ws_;
  int id_;
  Inbox& inbox_;
  std::array<char, 4096> head_{};
  std::string pending_;
  beast::flat_buffer buffer_;
  beast::flat_buffer frame_;
  http::request<http::string_body> request_;
  std::deque<std::string> outq_;
  bool dead_ = false;
};

}  // namespace teleop_net

struct ServerOptions {
  unsigned short port = 8765;  ///< 0 picks a free port
  double broadcast_hz = 30.0;
  std::string flight_log;  ///< empty disables the log
};

/// Serves one TeleopSession. The simulation thread is the only owner of the
/// session; network I/O hands it messages and receives serialized frames.
class TeleopServer {
 public:
  TeleopServer(TeleopSession session, ServerOptions opts)
      : session_(std::move(session)), opts_(std::move(opts)), acceptor_(ioc_) {
    using teleop_net::tcp;
    boost::system::error_code ec;
    const tcp::endpoint ep(tcp::v4(), opts_.port);
    acceptor_.open(ep.protocol(), ec);
    if (!ec) acceptor_.set_option(teleop_net::asio::socket_base::reuse_address(true), ec);
    if (!ec) acceptor_.bind(ep, ec);
    if (!ec) acceptor_.listen(teleop_net::asio::socket_base::max_listen_connections, ec);
    if (ec) {
      throw IoError("teleop: cannot listen on port " + std::to_string(opts_.port) + ": " +
                    ec.message());
    }
    port_ = acceptor_.local_endpoint().port();
    if (!opts_.flight_log.empty()) log_ = std::make_unique<FlightLog>(opts_.flight_log);
  }

  ~TeleopServer() { stop(); }

  unsigned short port() const noexcept { return port_; }

  void start() {
    if (running_.exchange(true)) return;
    accept();
    io_thread_ = std::thread([this] { ioc_.run(); });
    sim_thread_ = std::thread([this] { sim_loop(); });
  }

  void stop() {
    if (!running_.exchange(false)) return;
    if (sim_thread_.joinable()) sim_thread_.join();
    teleop_net::asio::post(ioc_, [this] {
      boost::system::error_code ec;
      acceptor_.close(ec);
    });
    for (auto& c : connections()) c->close();
    ioc_.stop();
    if (io_thread_.joinable()) io_thread_.join();
  }

  /// (wall seconds since start, session time) at every control step.
  std::vector<std::pair<double, double>> pacing_trace() const {
    std::lock_guard<std::mutex> lock(trace_mu_);
    return trace_;
  }

 private:
  void accept() {
    acceptor_.async_accept([this](boost::system::error_code ec, teleop_net::tcp::socket s) {
      if (ec) return;
      auto c = std::make_shared<teleop_net::Connection>(std::move(s), ++next_id_, inbox_);
      {
        std::lock_guard<std::mutex> lock(conn_mu_);
        conns_[c->id()] = c;
      }
      c->start();
      accept();
    });
  }

  std::vector<std::shared_ptr<teleop_net::Connection>> connections() const {
    std::lock_guard<std::mutex> lock(conn_mu_);
    std::vector<std::shared_ptr<teleop_net::Connection>> out;
    for (const auto& [id, c] : conns_) out.push_back(c);
    return out;
  }

  std::shared_ptr<teleop_net::Connection> connection(int id) const {
    std::lock_guard<std::mutex> lock(conn_mu_);
    auto it = conns_.find(id);
    return it == conns_.end() ? nullptr : it->second;
  }

  void sim_loop() {
    using clock = std::chrono::steady_clock;
    const double period = session_.control_period() / session_.pacing();
    const auto tick = std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(period));
    const auto bcast = std::chrono::duration_cast<clock::duration>(
        std::chrono::duration<double>(1.0 / opts_.broadcast_hz));
    const auto t0 = clock::now();
    auto next_tick = t0;
    auto next_bcast = t0;
    double last_sent = -1.0;
    while (running_) {
      for (auto& m : inbox_.drain()) {
        if (m.disconnect) {
          session_.release_driver(m.client);
          std::lock_guard<std::mutex> lock(conn_mu_);
          conns_.erase(m.client);
          continue;
        }
        if (log_) log_->event(session_.session_time(), m.client, m.text);
        if (auto reply = handle_message(session_, m.client, m.text)) {
          if (auto c = connection(m.client)) c->send(reply->dump());
        }
      }
      session_.advance();
      const auto now = clock::now();
      {
        std::lock_guard<std::mutex> lock(trace_mu_);
        trace_.emplace_back(std::chrono::duration<double>(now - t0).count(), session_.session_time());
      }
      if (now >= next_bcast) {
        const double t = session_.session_time();
        if (t > last_sent) {
          const std::string frame = state_frame(session_).dump();
          for (auto& c : connections()) c->send(frame);
          if (log_) log_->state(Json::parse(frame));
          last_sent = t;
        }
        next_bcast += bcast;
        if (next_bcast < now) next_bcast = now + bcast;
      }
      next_tick += tick;
      if (clock::now() > next_tick + std::chrono::milliseconds(500)) next_tick = clock::now();
      std::this_thread::sleep_until(next_tick);
    }
  }

  TeleopSession session_;
  ServerOptions opts_;
  teleop_net::asio::io_context ioc_;
  teleop_net::tcp::acceptor acceptor_;
  unsigned short port_ = 0;
  std::unique_ptr<FlightLog> log_;
  teleop_net::Inbox inbox_;
  mutable std::mutex conn_mu_;
  std::map<int, std::shared_ptr<teleop_net::Connection>> conns_;
  int next_id_ = 0;
  std::atomic<bool> running_{false};
  std::thread io_thread_, sim_thread_;
  mutable std::mutex trace_mu_;
  std::vector<std::pair<double, double>> trace_;
};

}  // namespace rock
