#pragma once

// Socket drivers for SessionServer and SessionClient: TCP with length-prefixed
// frames, WebSocket with one envelope body per text message (plus static
// files under /ui on the same port), and UDP discovery. Each driver owns one
// I/O thread; every call into its state machine happens on that thread.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <type_traits>
#include <utility>

#include "datacube/client.hpp"
#include "datacube/localization.hpp"
#include "datacube/scenario.hpp"
#include "datacube/server.hpp"

namespace datacube {

struct NetServerConfig {
  std::string bind_address = "0.0.0.0";
  // 0 binds an ephemeral port.
  std::uint16_t tcp_port = kDefaultTcpPort;
  std::uint16_t ws_port = kDefaultWebSocketPort;
  std::uint16_t discovery_port = kDefaultDiscoveryPort;
  bool websocket = true;
  bool discovery = true;
  // Served under /ui on the WebSocket port; empty disables static files.
  std::filesystem::path ui_root;
  std::chrono::milliseconds tick{10};
};

class NetServer {
 public:
  NetServer(SessionServer& core, NetServerConfig config);
  ~NetServer();
  NetServer(const NetServer&) = delete;
  NetServer& operator=(const NetServer&) = delete;

  // Binds every listener, then starts the I/O thread. Throws PortInUse or
  // BadConfig.
  void start();
  // Closes listeners and connections and joins the I/O thread. Idempotent.
  void stop();

  std::uint16_t tcp_port() const noexcept;
  std::uint16_t ws_port() const noexcept;
  std::uint16_t discovery_port() const noexcept;

  // Runs `fn(core)` on the I/O thread and returns its result. Must not be
  // called from the I/O thread.
  template <class F>
  auto with_core(F&& fn) -> std::invoke_result_t<F, SessionServer&> {
    using R = std::invoke_result_t<F, SessionServer&>;
    if constexpr (std::is_void_v<R>) {
      run_on_io([&](SessionServer& s) { fn(s); });
    } else {
      std::optional<R> out;
      run_on_io([&](SessionServer& s) { out.emplace(fn(s)); });
      return std::move(*out);
    }
  }

 private:
  void run_on_io(const std::function<void(SessionServer&)>& fn);

  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct NetClientConfig {
  // Where discovery probes go; a broadcast address on a LAN.
  std::string discovery_address = "255.255.255.255";
  std::uint16_t discovery_port = kDefaultDiscoveryPort;
  std::chrono::milliseconds tick{20};
};

class NetClient {
 public:
  NetClient(SessionClient& core, NetClientConfig config = {});
  ~NetClient();
  NetClient(const NetClient&) = delete;
  NetClient& operator=(const NetClient&) = delete;

  // Starts the I/O thread and the client's join flow.
  void start();
  // Leaves the session if joined, then joins the I/O thread. Idempotent.
  void stop();

  // Milliseconds on the timeline the client state machine sees.
  std::int64_t now_ms() const;

  template <class F>
  auto with_core(F&& fn) -> std::invoke_result_t<F, SessionClient&> {
    using R = std::invoke_result_t<F, SessionClient&>;
    if constexpr (std::is_void_v<R>) {
      run_on_io([&](SessionClient& c) { fn(c); });
    } else {
      std::optional<R> out;
      run_on_io([&](SessionClient& c) { out.emplace(fn(c)); });
      return std::move(*out);
    }
  }

  // Polls `pred` on the I/O thread until it holds or the timeout passes.
  bool wait_for(const std::function<bool(const SessionClient&)>& pred,
                std::chrono::milliseconds timeout);

 private:
  void run_on_io(const std::function<void(SessionClient&)>& fn);

  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Runs a scenario over loopback sockets in real time. Disconnect schedules
// need the simulated network and are rejected with ScenarioParseError.
// Not deterministic.
SimReport run_scenario_over_loopback(const Scenario& scenario, const Localizer& localizer);

}  // namespace datacube
