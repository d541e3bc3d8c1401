#pragma once

// Deterministic in-memory network. Servers and clients run on one virtual
// clock; every message is encoded to a frame on send and decoded on
// delivery. The same seed always yields the same event schedule.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <vector>

#include "datacube/client.hpp"
#include "datacube/clock.hpp"
#include "datacube/server.hpp"

namespace datacube {

struct DisconnectEvent {
  std::size_t client = 0;
  std::int64_t at_ms = 0;
  std::int64_t duration_ms = 0;
  // Silent: the link goes dark without either side being told.
  bool silent = false;

  bool operator==(const DisconnectEvent&) const = default;
};

struct SimNetConfig {
  std::uint64_t seed = 1;
  std::int64_t latency_min_ms = 5;
  std::int64_t latency_max_ms = 50;
  // Per connection and window: chance that the first server-to-client Update
  // in the window is lost.
  double drop_probability = 0.0;
  std::int64_t drop_window_ms = 1'000;
  std::vector<DisconnectEvent> disconnects;

  // Throws BadConfig.
  void validate() const;
};

struct SimNetStats {
  std::uint64_t frames = 0;
  std::uint64_t bytes = 0;
  std::uint64_t dropped_updates = 0;
  std::uint64_t dark_losses = 0;
  std::uint64_t connections = 0;
  std::uint64_t refused_connects = 0;
};

class SimNetwork {
 public:
  explicit SimNetwork(SimNetConfig config);
  SimNetwork(const SimNetwork&) = delete;
  SimNetwork& operator=(const SimNetwork&) = delete;

  const Clock& clock() const noexcept { return clock_; }
  std::int64_t now() const noexcept { return clock_.now_ms(); }

  // The server must use clock(). Returns its index.
  std::size_t add_server(SessionServer& server, std::string host);
  // Swaps in a new server process at the same address; open connections drop.
  void replace_server(std::size_t index, SessionServer& server);
  void set_server_online(std::size_t index, bool online);

  // Returns the client index used by disconnect events.
  std::size_t add_client(SessionClient& client);

  // Runs `fn` at virtual time `at_ms`, then pumps every node.
  void at(std::int64_t at_ms, std::function<void()> fn);
  void start_client(std::size_t index, std::int64_t at_ms);

  void run_until(std::int64_t until_ms);
  // Runs until `done()` holds at some event boundary or the deadline passes;
  // returns whether it held.
  bool run_until(std::int64_t deadline_ms, const std::function<bool()>& done);

  std::size_t in_flight() const noexcept { return in_flight_; }
  const SimNetStats& stats() const noexcept { return stats_; }

  std::int64_t server_tick_ms = 10;
  std::int64_t client_tick_ms = 20;

 private:
  struct Event {
    std::int64_t at;
    std::uint64_t order;
    std::function<void()> fn;
  };
  struct EventLater {
    bool operator()(const Event& a, const Event& b) const {
      return a.at != b.at ? a.at > b.at : a.order > b.order;
    }
  };
  struct Link {
    ConnectionId id = 0;
    std::size_t client = 0;
    std::size_t server = 0;
    bool client_open = true;
    bool server_open = true;
    std::int64_t last_up_ms = 0;    // client -> server delivery horizon
    std::int64_t last_down_ms = 0;  // server -> client delivery horizon
    std::int64_t window = -1;
    bool window_decided = false;
  };
  struct ServerSlot {
    SessionServer* server = nullptr;
    std::string host;
    bool online = true;
    std::uint64_t generation = 0;
  };
  struct ClientSlot {
    SessionClient* client = nullptr;
    std::optional<ConnectionId> link;
    std::int64_t outage_until_ms = -1;
    std::int64_t dark_until_ms = -1;
  };

  void schedule(std::int64_t at, std::function<void()> fn);
  void step(Event ev);
  std::int64_t latency();
  bool dark(const ClientSlot& c) const { return clock_.now_ms() < c.dark_until_ms; }
  void pump_client(std::size_t c);
  void pump_server(std::size_t s);
  void pump_all();
  void deliver_to_server(ConnectionId link, std::string frame);
  void deliver_to_client(ConnectionId link, std::string frame);
  void close_link_from_client(ConnectionId link);
  void close_link_from_server(ConnectionId link);
  void start_disconnect(const DisconnectEvent& ev);
  void ensure_ticks();

  SimNetConfig config_;
  ManualClock clock_;
  std::mt19937_64 rng_;
  std::priority_queue<Event, std::vector<Event>, EventLater> queue_;
  std::uint64_t order_ = 0;
  std::size_t in_flight_ = 0;
  bool ticks_started_ = false;
  std::vector<ServerSlot> servers_;
  std::vector<ClientSlot> clients_;
  std::map<ConnectionId, Link> links_;
  ConnectionId next_link_ = 1;
  SimNetStats stats_;
};

}  // namespace datacube
