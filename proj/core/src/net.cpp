#include "datacube/net.hpp"

#include <array>
#include <atomic>
#include <deque>
#include <fstream>
#include <future>
#include <map>
#include <sstream>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <spdlog/spdlog.h>

#include "datacube/synthetic.hpp"

namespace datacube {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using udp = asio::ip::udp;
using boost::system::error_code;

namespace {

asio::ip::address parse_address(const std::string& text) {
  error_code ec;
  auto addr = asio::ip::make_address(text, ec);
  if (ec) throw Error(ErrorCode::BadConfig, "bad address '" + text + "'");
  return addr;
}

[[noreturn]] void throw_bind_error(const error_code& ec, const char* what, std::uint16_t port) {
  const std::string where = std::string(what) + " port " + std::to_string(port);
  if (ec == asio::error::address_in_use || ec == asio::error::access_denied) {
    throw Error(ErrorCode::PortInUse, where + ": " + ec.message());
  }
  throw Error(ErrorCode::IoError, where + ": " + ec.message());
}

template <class Acceptor, class Endpoint>
void bind_acceptor(Acceptor& acc, const Endpoint& ep, const char* what) {
  error_code ec;
  acc.open(ep.protocol(), ec);
  if (!ec) acc.set_option(asio::socket_base::reuse_address(true), ec);
  if (!ec) acc.bind(ep, ec);
  if (!ec) acc.listen(asio::socket_base::max_listen_connections, ec);
  if (ec) throw_bind_error(ec, what, ep.port());
}

std::string_view mime_type(const std::filesystem::path& p) {
  const std::string ext = p.extension().string();
  if (ext == ".html" || ext == ".htm") return "text/html; charset=utf-8";
  if (ext == ".js" || ext == ".mjs") return "text/javascript; charset=utf-8";
  if (ext == ".css") return "text/css; charset=utf-8";
  if (ext == ".json") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  if (ext == ".wasm") return "application/wasm";
  if (ext == ".tsv" || ext == ".txt" || ext == ".csv") return "text/plain; charset=utf-8";
  return "application/octet-stream";
}

// Maps a request target under /ui to a file below `root`; nothing for targets
// outside it or containing parent references.
std::optional<std::filesystem::path> ui_file(const std::filesystem::path& root, std::string_view target) {
  if (root.empty()) return std::nullopt;
  if (auto q = target.find('?'); q != std::string_view::npos) target = target.substr(0, q);
  if (target == "/" || target == "/ui") target = "/ui/";
  if (target.substr(0, 4) != "/ui/") return std::nullopt;
  std::string rel(target.substr(4));
  if (rel.empty() || rel.back() == '/') rel += "index.html";
  const std::filesystem::path rp(rel);
  for (const auto& part : rp) {
    if (part == "..") return std::nullopt;
  }
  return root / rp;
}

}  // namespace

// ---------------------------------------------------------------------------
// Server

struct NetServer::Impl {
  // A transport connection as the session server sees it.
  struct Conn {
    virtual ~Conn() = default;
    virtual void send(const Envelope& env) = 0;
    // Closes once queued writes are flushed.
    virtual void close_after_flush() = 0;
    virtual void close_now() = 0;
  };

  Impl(SessionServer& c, NetServerConfig cfg) : core(c), config(std::move(cfg)) {}

  SessionServer& core;
  NetServerConfig config;
  asio::io_context ioc{1};
  tcp::acceptor tcp_acc{ioc};
  tcp::acceptor ws_acc{ioc};
  udp::socket disc{ioc};
  asio::steady_timer ticker{ioc};
  std::thread thread;
  std::atomic<bool> running{false};
  std::uint16_t tcp_port = 0;
  std::uint16_t ws_port = 0;
  std::uint16_t disc_port = 0;
  ConnectionId next_id = 1;
  std::map<ConnectionId, std::shared_ptr<Conn>> conns;
  std::array<char, 2048> disc_buf{};
  udp::endpoint disc_from;

  void pump() {
    for (auto& out : core.drain_outbound()) {
      auto it = conns.find(out.connection);
      if (it != conns.end()) it->second->send(out.envelope);
    }
    for (ConnectionId id : core.drain_closes()) {
      auto it = conns.find(id);
      if (it == conns.end()) continue;
      it->second->close_after_flush();
      conns.erase(it);
    }
  }

  // Transport closed by the peer or by an error.
  void lost(ConnectionId id) {
    if (conns.erase(id) == 0) return;
    core.on_disconnect(id);
    pump();
  }

  void deliver(ConnectionId id, const Envelope& env) {
    if (!conns.count(id)) return;
    core.on_envelope(id, env);
    pump();
  }

  void malformed(ConnectionId id, const Error& e) {
    if (!conns.count(id)) return;
    spdlog::debug("connection {}: {}", id, e.what());
    core.on_malformed(id, e);
    pump();
  }

  // Stream is unusable after this error; report it and drop the connection.
  void fatal(ConnectionId id, const Error& e) {
    auto it = conns.find(id);
    if (it == conns.end()) return;
    auto conn = it->second;
    malformed(id, e);
    conn->close_after_flush();
    lost(id);
  }

  struct TcpConn : Conn, std::enable_shared_from_this<TcpConn> {
    TcpConn(Impl& o, ConnectionId i, tcp::socket s) : owner(o), id(i), sock(std::move(s)) {}
    Impl& owner;
    ConnectionId id;
    tcp::socket sock;
    std::array<char, 16384> buf{};
    FrameDecoder decoder;
    std::deque<std::string> queue;
    bool closing = false;
    bool closed = false;

    void read() {
      sock.async_read_some(asio::buffer(buf), [self = shared_from_this()](error_code ec, std::size_t n) {
        if (ec) {
          self->close_now();
          self->owner.lost(self->id);
          return;
        }
        self->decoder.feed(std::string_view(self->buf.data(), n));
        while (!self->closed) {
          try {
            auto env = self->decoder.next();
            if (!env) break;
            self->owner.deliver(self->id, *env);
          } catch (const Error& e) {
            if (e.code() == ErrorCode::FrameTooLarge) {
              self->owner.fatal(self->id, e);
              return;
            }
            self->owner.malformed(self->id, e);
          }
        }
        if (!self->closed && !self->closing) self->read();
      });
    }

    void send(const Envelope& env) override {
      if (closed || closing) return;
      queue.push_back(encode(env));
      if (queue.size() == 1) write();
    }

    void write() {
      asio::async_write(sock, asio::buffer(queue.front()), [self = shared_from_this()](error_code ec, std::size_t) {
        self->queue.pop_front();
        if (ec) {
          self->close_now();
          return;
        }
        if (!self->queue.empty()) {
          self->write();
        } else if (self->closing) {
          self->close_now();
        }
      });
    }

    void close_after_flush() override {
      closing = true;
      if (queue.empty()) close_now();
    }

    void close_now() override {
      if (closed) return;
      closed = true;
      error_code ec;
      sock.shutdown(tcp::socket::shutdown_both, ec);
      sock.close(ec);
    }
  };

  struct WsConn : Conn, std::enable_shared_from_this<WsConn> {
    WsConn(Impl& o, ConnectionId i, websocket::stream<tcp::socket> s) : owner(o), id(i), ws(std::move(s)) {}
    Impl& owner;
    ConnectionId id;
    websocket::stream<tcp::socket> ws;
    beast::flat_buffer buf;
    std::deque<std::string> queue;
    bool closing = false;
    bool closed = false;

    void read() {
      ws.async_read(buf, [self = shared_from_this()](error_code ec, std::size_t) {
        if (ec) {
          self->closed = true;
          self->owner.lost(self->id);
          return;
        }
        const std::string body = beast::buffers_to_string(self->buf.data());
        self->buf.consume(self->buf.size());
        if (body.size() > kMaxFrameBytes) {
          self->owner.fatal(self->id, Error(ErrorCode::FrameTooLarge, std::to_string(body.size()) + " bytes"));
          return;
        }
        try {
          self->owner.deliver(self->id, decode_body(body));
        } catch (const Error& e) {
          self->owner.malformed(self->id, e);
        }
        if (!self->closed && !self->closing) self->read();
      });
    }

    void send(const Envelope& env) override {
      if (closed || closing) return;
      queue.push_back(encode_body(env));
      if (queue.size() == 1) write();
    }

    void write() {
      ws.text(true);
      ws.async_write(asio::buffer(queue.front()), [self = shared_from_this()](error_code ec, std::size_t) {
        self->queue.pop_front();
        if (ec) {
          self->close_now();
          return;
        }
        if (!self->queue.empty()) {
          self->write();
        } else if (self->closing) {
          self->close_now();
        }
      });
    }

    void close_after_flush() override {
      closing = true;
      if (queue.empty()) close_now();
    }

    void close_now() override {
      if (closed) return;
      closed = true;
      ws.async_close(websocket::close_code::normal, [self = shared_from_this()](error_code) {
        error_code ec;
        self->ws.next_layer().close(ec);
      });
    }
  };

  // First request on the WebSocket port: an upgrade or a static file.
  struct HttpSession : std::enable_shared_from_this<HttpSession> {
    HttpSession(Impl& o, tcp::socket s) : owner(o), sock(std::move(s)) {}
    Impl& owner;
    tcp::socket sock;
    beast::flat_buffer buf;
    http::request<http::string_body> req;

    void read() {
      req = {};
      http::async_read(sock, buf, req, [self = shared_from_this()](error_code ec, std::size_t) {
        if (ec) return;
        if (websocket::is_upgrade(self->req)) {
          self->upgrade();
        } else {
          self->serve();
        }
      });
    }

    void upgrade() {
      auto ws = std::make_shared<websocket::stream<tcp::socket>>(std::move(sock));
      ws->read_message_max(kMaxFrameBytes + 1);
      auto req_ptr = std::make_shared<http::request<http::string_body>>(std::move(req));
      Impl& o = owner;
      ws->async_accept(*req_ptr, [&o, ws, req_ptr, keep = shared_from_this()](error_code ec) {
        if (ec) return;
        const ConnectionId id = o.next_id++;
        auto conn = std::make_shared<WsConn>(o, id, std::move(*ws));
        o.conns.emplace(id, conn);
        o.core.on_connect(id);
        o.pump();
        conn->read();
      });
    }

    void serve() {
      const bool head = req.method() == http::verb::head;
      auto path = ui_file(owner.config.ui_root, std::string_view(req.target().data(), req.target().size()));
      std::string body;
      http::status status = http::status::not_found;
      std::string_view type = "text/plain; charset=utf-8";
      if (req.method() != http::verb::get && !head) {
        status = http::status::method_not_allowed;
        body = "method not allowed\n";
      } else if (path && std::filesystem::is_regular_file(*path)) {
        std::ifstream in(*path, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        body = ss.str();
        status = http::status::ok;
        type = mime_type(*path);
      } else {
        body = "not found\n";
      }
      auto res = std::make_shared<http::response<http::string_body>>(status, req.version());
      res->set(http::field::server, "datacube");
      res->set(http::field::content_type, beast::string_view(type.data(), type.size()));
      res->keep_alive(req.keep_alive());
      const std::size_t len = body.size();
      if (!head) res->body() = std::move(body);
      res->content_length(len);
      http::async_write(sock, *res, [self = shared_from_this(), res](error_code ec, std::size_t) {
        if (ec) return;
        if (res->keep_alive()) {
          self->read();
        } else {
          error_code ignored;
          self->sock.shutdown(tcp::socket::shutdown_send, ignored);
        }
      });
    }
  };

  void accept_tcp() {
    tcp_acc.async_accept([this](error_code ec, tcp::socket s) {
      if (ec == asio::error::operation_aborted || !tcp_acc.is_open()) return;
      if (!ec) {
        error_code ignored;
        s.set_option(tcp::no_delay(true), ignored);
        const ConnectionId id = next_id++;
        auto conn = std::make_shared<TcpConn>(*this, id, std::move(s));
        conns.emplace(id, conn);
        core.on_connect(id);
        pump();
        conn->read();
      }
      accept_tcp();
    });
  }

  void accept_ws() {
    ws_acc.async_accept([this](error_code ec, tcp::socket s) {
      if (ec == asio::error::operation_aborted || !ws_acc.is_open()) return;
      if (!ec) {
        error_code ignored;
        s.set_option(tcp::no_delay(true), ignored);
        std::make_shared<HttpSession>(*this, std::move(s))->read();
      }
      accept_ws();
    });
  }

  void receive_probe() {
    disc.async_receive_from(asio::buffer(disc_buf), disc_from, [this](error_code ec, std::size_t n) {
      if (ec == asio::error::operation_aborted || !disc.is_open()) return;
      if (!ec) {
        if (auto reply = core.discovery_response(std::string_view(disc_buf.data(), n))) {
          auto data = std::make_shared<std::string>(std::move(*reply));
          disc.async_send_to(asio::buffer(*data), disc_from, [data](error_code, std::size_t) {});
        }
      }
      receive_probe();
    });
  }

  void tick() {
    ticker.expires_after(config.tick);
    ticker.async_wait([this](error_code ec) {
      if (ec) return;
      core.tick();
      pump();
      tick();
    });
  }

  void shutdown() {
    error_code ec;
    ticker.cancel();
    tcp_acc.close(ec);
    ws_acc.close(ec);
    disc.close(ec);
    for (auto& [id, conn] : conns) {
      conn->close_now();
      core.on_disconnect(id);
    }
    conns.clear();
    core.drain_outbound();
    core.drain_closes();
  }
};

NetServer::NetServer(SessionServer& core, NetServerConfig config)
    : impl_(std::make_unique<Impl>(core, std::move(config))) {}

NetServer::~NetServer() { stop(); }

void NetServer::start() {
  Impl& m = *impl_;
  if (m.running) return;
  const auto addr = parse_address(m.config.bind_address);
  bind_acceptor(m.tcp_acc, tcp::endpoint(addr, m.config.tcp_port), "tcp");
  m.tcp_port = m.tcp_acc.local_endpoint().port();
  if (m.config.websocket) {
    bind_acceptor(m.ws_acc, tcp::endpoint(addr, m.config.ws_port), "websocket");
    m.ws_port = m.ws_acc.local_endpoint().port();
  }
  if (m.config.discovery) {
    error_code ec;
    const udp::endpoint ep(addr, m.config.discovery_port);
    m.disc.open(ep.protocol(), ec);
    if (!ec) m.disc.bind(ep, ec);
    if (ec) {
      error_code ignored;
      m.tcp_acc.close(ignored);
      m.ws_acc.close(ignored);
      m.disc.close(ignored);
      throw_bind_error(ec, "discovery", m.config.discovery_port);
    }
    m.disc_port = m.disc.local_endpoint().port();
  }
  m.core.set_advertised_port(m.tcp_port);
  m.accept_tcp();
  if (m.config.websocket) m.accept_ws();
  if (m.config.discovery) m.receive_probe();
  m.tick();
  m.running = true;
  m.thread = std::thread([&m] { m.ioc.run(); });
  spdlog::info("session '{}' listening: tcp {} websocket {} discovery {}", m.core.session_id(), m.tcp_port,
               m.ws_port, m.disc_port);
}

void NetServer::stop() {
  if (!impl_ || !impl_->running) return;
  Impl& m = *impl_;
  run_on_io([&m](SessionServer&) { m.shutdown(); });
  m.running = false;
  m.ioc.stop();
  if (m.thread.joinable()) m.thread.join();
}

std::uint16_t NetServer::tcp_port() const noexcept { return impl_->tcp_port; }
std::uint16_t NetServer::ws_port() const noexcept { return impl_->ws_port; }
std::uint16_t NetServer::discovery_port() const noexcept { return impl_->disc_port; }

void NetServer::run_on_io(const std::function<void(SessionServer&)>& fn) {
  Impl& m = *impl_;
  if (!m.running) {
    fn(m.core);
    return;
  }
  std::promise<void> done;
  asio::post(m.ioc, [&] {
    try {
      fn(m.core);
      m.pump();
      done.set_value();
    } catch (...) {
      done.set_exception(std::current_exception());
    }
  });
  done.get_future().get();
}

// ---------------------------------------------------------------------------
// Client

struct NetClient::Impl {
  Impl(SessionClient& c, NetClientConfig cfg) : core(c), config(std::move(cfg)) {}

  SessionClient& core;
  NetClientConfig config;
  asio::io_context ioc{1};
  asio::steady_timer ticker{ioc};
  udp::socket probe_sock{ioc};
  std::array<char, 2048> probe_buf{};
  udp::endpoint probe_from;
  std::thread thread;
  std::atomic<bool> running{false};
  std::chrono::steady_clock::time_point epoch = std::chrono::steady_clock::now();

  // The current stream connection; a new connect bumps the generation so
  // callbacks for older sockets are ignored.
  std::uint64_t generation = 0;
  std::shared_ptr<tcp::socket> sock;
  bool connected = false;
  bool closing = false;
  FrameDecoder decoder;
  std::array<char, 16384> buf{};
  std::deque<std::string> queue;

  std::int64_t now() const {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - epoch)
        .count();
  }

  void pump() {
    for (auto& act : core.drain_actions()) {
      if (std::holds_alternative<action::Probe>(act)) {
        probe();
      } else if (const auto* c = std::get_if<action::Connect>(&act)) {
        connect(c->endpoint);
      } else if (const auto* s = std::get_if<action::Send>(&act)) {
        send(encode(s->envelope));
      } else if (std::holds_alternative<action::Disconnect>(act)) {
        close_after_flush();
      }
    }
  }

  void probe() {
    error_code ec;
    if (!probe_sock.is_open()) return;
    const udp::endpoint to(asio::ip::make_address(config.discovery_address, ec), config.discovery_port);
    if (ec) {
      spdlog::warn("bad discovery address '{}'", config.discovery_address);
      return;
    }
    static const std::string probe_text(kDiscoveryProbe);
    probe_sock.async_send_to(asio::buffer(probe_text), to, [](error_code, std::size_t) {});
  }

  void receive_replies() {
    probe_sock.async_receive_from(asio::buffer(probe_buf), probe_from, [this](error_code ec, std::size_t n) {
      if (ec == asio::error::operation_aborted || !probe_sock.is_open()) return;
      if (!ec) {
        core.on_discovery_reply(probe_from.address().to_string(), std::string_view(probe_buf.data(), n), now());
        pump();
      }
      receive_replies();
    });
  }

  void drop_socket() {
    if (sock) {
      error_code ec;
      sock->shutdown(tcp::socket::shutdown_both, ec);
      sock->close(ec);
    }
    sock.reset();
    connected = false;
    closing = false;
    queue.clear();
    decoder = FrameDecoder{};
  }

  void connect(const Endpoint& ep) {
    drop_socket();
    const std::uint64_t gen = ++generation;
    sock = std::make_shared<tcp::socket>(ioc);
    auto resolver = std::make_shared<tcp::resolver>(ioc);
    resolver->async_resolve(
        ep.host, std::to_string(ep.port),
        [this, gen, resolver](error_code ec, tcp::resolver::results_type results) {
          if (gen != generation) return;
          if (ec) {
            core.on_connect_failed(now());
            pump();
            return;
          }
          asio::async_connect(*sock, results, [this, gen](error_code ec2, const tcp::endpoint&) {
            if (gen != generation) return;
            if (ec2) {
              drop_socket();
              core.on_connect_failed(now());
              pump();
              return;
            }
            error_code ignored;
            sock->set_option(tcp::no_delay(true), ignored);
            connected = true;
            core.on_connected(now());
            pump();
            read(gen);
          });
        });
  }

  void read(std::uint64_t gen) {
    auto s = sock;
    s->async_read_some(asio::buffer(buf), [this, gen, s](error_code ec, std::size_t n) {
      if (gen != generation) return;
      if (ec) {
        const bool was_open = connected && !closing;
        drop_socket();
        if (was_open) {
          core.on_disconnected(now());
          pump();
        }
        return;
      }
      decoder.feed(std::string_view(buf.data(), n));
      try {
        while (gen == generation) {
          auto env = decoder.next();
          if (!env) break;
          core.on_envelope(*env, now());
          pump();
        }
      } catch (const Error& e) {
        spdlog::warn("dropping connection after bad frame: {}", e.what());
        drop_socket();
        core.on_disconnected(now());
        pump();
        return;
      }
      if (gen == generation) read(gen);
    });
  }

  void send(std::string frame) {
    if (!connected || closing) return;
    queue.push_back(std::move(frame));
    if (queue.size() == 1) write(generation);
  }

  void write(std::uint64_t gen) {
    auto s = sock;
    asio::async_write(*s, asio::buffer(queue.front()), [this, gen, s](error_code ec, std::size_t) {
      if (gen != generation) return;
      queue.pop_front();
      if (ec) return;  // the read side reports the loss
      if (!queue.empty()) {
        write(gen);
      } else if (closing) {
        ++generation;
        drop_socket();
      }
    });
  }

  void close_after_flush() {
    if (!sock) return;
    if (queue.empty()) {
      ++generation;
      drop_socket();
    } else {
      closing = true;
    }
  }

  void tick() {
    ticker.expires_after(config.tick);
    ticker.async_wait([this](error_code ec) {
      if (ec) return;
      core.tick(now());
      pump();
      tick();
    });
  }
};

NetClient::NetClient(SessionClient& core, NetClientConfig config)
    : impl_(std::make_unique<Impl>(core, std::move(config))) {}

NetClient::~NetClient() { stop(); }

std::int64_t NetClient::now_ms() const { return impl_->now(); }

void NetClient::start() {
  Impl& m = *impl_;
  if (m.running) return;
  error_code ec;
  m.probe_sock.open(udp::v4(), ec);
  if (!ec) m.probe_sock.set_option(asio::socket_base::broadcast(true), ec);
  if (!ec) m.probe_sock.bind(udp::endpoint(udp::v4(), 0), ec);
  if (ec) throw Error(ErrorCode::IoError, "discovery socket: " + ec.message());
  m.receive_replies();
  m.tick();
  m.core.start(m.now());
  m.pump();
  m.running = true;
  m.thread = std::thread([&m] { m.ioc.run(); });
}

void NetClient::stop() {
  if (!impl_ || !impl_->running) return;
  Impl& m = *impl_;
  run_on_io([&m](SessionClient& c) {
    if (c.phase() != ClientPhase::Idle && c.phase() != ClientPhase::Failed) c.leave(m.now());
  });
  // Give the Leave frame a moment to flush.
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(500);
  while (std::chrono::steady_clock::now() < deadline) {
    bool flushed = false;
    run_on_io([&](SessionClient&) { flushed = m.queue.empty() || !m.sock; });
    if (flushed) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }
  run_on_io([&m](SessionClient&) {
    error_code ec;
    m.ticker.cancel();
    m.probe_sock.close(ec);
    ++m.generation;
    m.drop_socket();
  });
  m.running = false;
  m.ioc.stop();
  if (m.thread.joinable()) m.thread.join();
}

bool NetClient::wait_for(const std::function<bool(const SessionClient&)>& pred,
                         std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    bool ok = false;
    run_on_io([&](SessionClient& c) { ok = pred(c); });
    if (ok) return true;
    if (std::chrono::steady_clock::now() >= deadline) return false;
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
}

void NetClient::run_on_io(const std::function<void(SessionClient&)>& fn) {
  Impl& m = *impl_;
  if (!m.running) {
    fn(m.core);
    m.pump();
    return;
  }
  std::promise<void> done;
  asio::post(m.ioc, [&] {
    try {
      fn(m.core);
      m.pump();
      done.set_value();
    } catch (...) {
      done.set_exception(std::current_exception());
    }
  });
  done.get_future().get();
}

// ---------------------------------------------------------------------------
// Loopback scenario runner

SimReport run_scenario_over_loopback(const Scenario& sc, const Localizer& localizer) {
  sc.validate();
  if (!sc.net.disconnects.empty()) {
    throw Error(ErrorCode::ScenarioParseError, "disconnect schedules need the simulated network");
  }
  if (!sc.corruptions.empty() || !sc.script.empty() || !sc.bot_events.empty()) {
    throw Error(ErrorCode::ScenarioParseError,
                "scripted events and corruptions need the simulated network");
  }
  using namespace std::chrono;
  SystemClock clock;
  ServerConfig scfg;
  scfg.session_id = sc.session_id;
  scfg.capacity = sc.capacity;
  SessionServer core(scfg, clock);
  const Dataset dataset = scenario_dataset(sc);
  core.register_dataset(dataset);
  core.submit_server_op(op::LoadDataset{content_hash(dataset), dataset.columns()});
  core.drain_outbound();

  NetServerConfig ncfg;
  ncfg.bind_address = "127.0.0.1";
  ncfg.tcp_port = 0;
  ncfg.ws_port = 0;
  ncfg.discovery_port = 0;
  ncfg.websocket = false;
  NetServer server(core, ncfg);
  server.start();

  std::mt19937_64 engine(sc.net.seed ^ 0x9E3779B97F4A7C15ull);
  auto room = std::make_shared<SimulatedRoom>();
  room->landmarks = default_anchor_points();

  struct LoopBot {
    std::string name;
    Role role = Role::Participant;
    std::string language;
    std::shared_ptr<SimulatedAnchorSensor> sensor;
    std::unique_ptr<SessionClient> client;
    std::unique_ptr<NetClient> net;
    std::vector<std::uint64_t> refs;
  };
  std::vector<LoopBot> bots(sc.bot_count());
  for (std::size_t i = 0; i < bots.size(); ++i) {
    LoopBot& b = bots[i];
    b.name = "bot" + std::to_string(i);
    b.role = i < sc.participants ? Role::Participant : Role::Observer;
    b.language = sc.languages[i % sc.languages.size()];
    RigidTransform offset;
    if (sc.random_offsets) {
      const double angle = unit_double(engine()) * 3.141592653589793;
      offset.rotation = UnitQuaternion::from_axis_angle(kUp, angle);
      offset.translation = {unit_double(engine()) * 4.0 - 2.0, 0.0, unit_double(engine()) * 4.0 - 2.0};
    }
    b.sensor = std::make_shared<SimulatedAnchorSensor>(offset, sc.anchor_noise_m, sc.net.seed * 1000003u + i,
                                                       room);
    ClientConfig cc;
    cc.role = b.role;
    cc.language = b.language;
    cc.preferred_session = sc.session_id;
    b.client = std::make_unique<SessionClient>(cc, b.sensor);
    NetClientConfig ncc;
    ncc.discovery_address = "127.0.0.1";
    ncc.discovery_port = server.discovery_port();
    b.net = std::make_unique<NetClient>(*b.client, ncc);
  }

  const auto t0 = steady_clock::now();
  auto elapsed_ms = [&] { return duration_cast<milliseconds>(steady_clock::now() - t0).count(); };
  for (std::size_t i = 0; i < bots.size(); ++i) {
    if (sc.join_stagger_ms > 0) {
      std::this_thread::sleep_until(t0 + milliseconds(static_cast<std::int64_t>(i) * sc.join_stagger_ms));
    }
    bots[i].net->start();
  }
  auto settled = [](const SessionClient& c) {
    return c.phase() == ClientPhase::Synced || c.phase() == ClientPhase::Failed;
  };
  for (auto& b : bots) b.net->wait_for(settled, milliseconds(std::max<std::int64_t>(sc.max_time_ms, 1)));

  std::size_t max_participants = server.with_core([](SessionServer& s) { return s.participant_count(); });
  std::this_thread::sleep_until(t0 + milliseconds(sc.ops_start_ms));
  const auto ops_start = steady_clock::now();
  std::size_t issued = 0;
  std::size_t rounds = 0;
  while (issued < sc.random_ops && elapsed_ms() < sc.max_time_ms) {
    std::this_thread::sleep_until(ops_start + milliseconds(static_cast<std::int64_t>(rounds++) * sc.op_interval_ms));
    const std::size_t start = static_cast<std::size_t>(unit_double(engine()) * static_cast<double>(bots.size()));
    for (std::size_t k = 0; k < bots.size(); ++k) {
      LoopBot& b = bots[(start + k) % bots.size()];
      const bool sent = b.net->with_core([&](SessionClient& c) {
        if (!c.synced()) return false;
        b.refs.push_back(c.submit(make_random_op(c, dataset, engine)));
        return true;
      });
      if (sent) {
        ++issued;
        break;
      }
    }
    if (rounds % 64 == 0) {
      max_participants =
          std::max(max_participants, server.with_core([](SessionServer& s) { return s.participant_count(); }));
    }
  }
  const auto ops_end = steady_clock::now();

  // Wait for every synced replica to reach the server's seq.
  bool quiesced = false;
  const auto settle_deadline = steady_clock::now() + milliseconds(sc.settle_ms);
  while (steady_clock::now() < settle_deadline) {
    const auto target = server.with_core([](SessionServer& s) {
      return s.pending_pose_count() == 0 ? std::optional<std::uint64_t>(s.state().server_seq) : std::nullopt;
    });
    bool all = target.has_value();
    for (auto& b : bots) {
      if (!all) break;
      all = b.net->with_core([&](SessionClient& c) {
        return c.phase() == ClientPhase::Failed || (c.synced() && c.replica().server_seq == *target);
      });
    }
    if (all) {
      quiesced = true;
      break;
    }
    std::this_thread::sleep_for(milliseconds(10));
  }

  SimReport rep;
  rep.seed = sc.net.seed;
  rep.quiesced = quiesced;
  server.with_core([&](SessionServer& s) {
    rep.canonical_digest = state_digest(s.state());
    rep.server_seq = s.state().server_seq;
    rep.participants_admitted = s.participant_count();
    rep.observers_admitted = s.observer_count();
    rep.server_warnings = s.warnings();
    max_participants = std::max(max_participants, s.participant_count());
  });
  rep.max_participants_seen = max_participants;
  rep.real_time = true;
  rep.virtual_time_ms = elapsed_ms();
  rep.ops_phase_ms = duration_cast<milliseconds>(ops_end - ops_start).count();

  bool all_ok = quiesced;
  for (auto& b : bots) {
    BotReport br;
    br.name = b.name;
    br.role = b.role;
    br.language = b.language;
    b.net->with_core([&](SessionClient& c) {
      br.client_id = c.client_id();
      br.phase = c.phase();
      br.expected_connected = c.phase() != ClientPhase::Failed;
      br.digest = state_digest(c.replica());
      br.server_seq = c.replica().server_seq;
      br.submitted = b.refs.size();
      br.welcomes = c.welcomes();
      br.full_state_requests = c.full_state_requests();
      for (auto ref : b.refs) {
        if (auto err = c.rejection(ref)) {
          ++br.rejections[std::string(to_string(err->code))];
          ++rep.ops_rejected;
        }
      }
      if (c.phase() == ClientPhase::Failed && c.last_error()) {
        br.failure = c.last_error()->code;
        if (*br.failure == ErrorCode::SessionFull) ++rep.session_full_rejections;
      }
      if (c.synced()) {
        const RigidTransform expect = b.sensor->expected_alignment();
        br.alignment_error = geodesic_distance(expect.rotation, c.alignment().rotation) +
                             norm(expect.translation - c.alignment().translation);
      }
    });
    br.label = localizer.translate(br.phase == ClientPhase::Synced ? "session.synced" : "error.generic",
                                   b.language);
    rep.ops_submitted += br.submitted;
    if (br.expected_connected) {
      br.converged = br.digest == rep.canonical_digest;
      if (!br.converged) {
        br.divergence_detail = "replica at seq " + std::to_string(br.server_seq) + " of " +
                               std::to_string(rep.server_seq);
      }
      all_ok = all_ok && br.converged;
    } else if (br.failure && *br.failure != ErrorCode::SessionFull) {
      all_ok = false;
    }
    rep.bots.push_back(std::move(br));
  }
  rep.converged = all_ok;
  for (auto& b : bots) b.net->stop();
  server.stop();
  return rep;
}

}  // namespace datacube
