#include "datacube/simnet.hpp"

#include <cmath>

#include "datacube/synthetic.hpp"

namespace datacube {

void SimNetConfig::validate() const {
  if (latency_min_ms < 0 || latency_max_ms < latency_min_ms) {
    throw Error(ErrorCode::BadConfig, "latency range must satisfy 0 <= min <= max");
  }
  if (!(drop_probability >= 0.0 && drop_probability <= 1.0)) {
    throw Error(ErrorCode::BadConfig, "drop probability must lie in [0, 1]");
  }
  if (drop_window_ms <= 0) throw Error(ErrorCode::BadConfig, "drop window must be positive");
  for (const auto& d : disconnects) {
    if (d.at_ms < 0 || d.duration_ms < 0) {
      throw Error(ErrorCode::BadConfig, "disconnect times must be nonnegative");
    }
  }
}

SimNetwork::SimNetwork(SimNetConfig config) : config_(std::move(config)), rng_(config_.seed) {
  config_.validate();
}

std::size_t SimNetwork::add_server(SessionServer& server, std::string host) {
  servers_.push_back(ServerSlot{&server, std::move(host), true, 0});
  return servers_.size() - 1;
}

void SimNetwork::replace_server(std::size_t index, SessionServer& server) {
  ServerSlot& slot = servers_.at(index);
  for (auto& [id, link] : links_) {
    if (link.server == index && link.server_open) {
      link.server_open = false;
      close_link_from_server(id);
    }
  }
  slot.server = &server;
  ++slot.generation;
}

void SimNetwork::set_server_online(std::size_t index, bool online) {
  servers_.at(index).online = online;
  if (online) return;
  for (auto& [id, link] : links_) {
    if (link.server == index && link.server_open) {
      link.server_open = false;
      close_link_from_server(id);
    }
  }
}

std::size_t SimNetwork::add_client(SessionClient& client) {
  clients_.push_back(ClientSlot{&client, std::nullopt, -1, -1});
  const std::size_t index = clients_.size() - 1;
  for (const auto& d : config_.disconnects) {
    if (d.client == index) at(d.at_ms, [this, d] { start_disconnect(d); });
  }
  return index;
}

void SimNetwork::schedule(std::int64_t at, std::function<void()> fn) {
  queue_.push(Event{std::max(at, clock_.now_ms()), order_++, std::move(fn)});
}

void SimNetwork::at(std::int64_t at_ms, std::function<void()> fn) {
  schedule(at_ms, [this, fn = std::move(fn)] {
    fn();
    pump_all();
  });
}

void SimNetwork::start_client(std::size_t index, std::int64_t at_ms) {
  at(at_ms, [this, index] { clients_.at(index).client->start(clock_.now_ms()); });
}

std::int64_t SimNetwork::latency() {
  const auto span = static_cast<double>(config_.latency_max_ms - config_.latency_min_ms + 1);
  return config_.latency_min_ms + static_cast<std::int64_t>(std::floor(unit_double(rng_()) * span));
}

void SimNetwork::ensure_ticks() {
  if (ticks_started_) return;
  ticks_started_ = true;
  struct Ticker {
    SimNetwork* net;
    bool servers;
    void operator()() const {
      if (servers) {
        for (std::size_t s = 0; s < net->servers_.size(); ++s) {
          if (!net->servers_[s].online) continue;
          net->servers_[s].server->tick();
          net->pump_server(s);
        }
        net->schedule(net->clock_.now_ms() + net->server_tick_ms, *this);
      } else {
        for (std::size_t c = 0; c < net->clients_.size(); ++c) {
          net->clients_[c].client->tick(net->clock_.now_ms());
          net->pump_client(c);
        }
        net->schedule(net->clock_.now_ms() + net->client_tick_ms, *this);
      }
    }
  };
  schedule(clock_.now_ms(), Ticker{this, true});
  schedule(clock_.now_ms(), Ticker{this, false});
}

void SimNetwork::step(Event ev) {
  clock_.set(ev.at);
  ev.fn();
}

void SimNetwork::run_until(std::int64_t until_ms) {
  run_until(until_ms, [] { return false; });
  clock_.set(std::max(clock_.now_ms(), until_ms));
}

bool SimNetwork::run_until(std::int64_t deadline_ms, const std::function<bool()>& done) {
  ensure_ticks();
  while (!queue_.empty() && queue_.top().at <= deadline_ms) {
    if (done()) return true;
    Event ev = queue_.top();
    queue_.pop();
    step(std::move(ev));
  }
  return done();
}

void SimNetwork::pump_all() {
  for (std::size_t s = 0; s < servers_.size(); ++s) pump_server(s);
  for (std::size_t c = 0; c < clients_.size(); ++c) pump_client(c);
}

void SimNetwork::pump_client(std::size_t c) {
  ClientSlot& slot = clients_[c];
  for (auto& act : slot.client->drain_actions()) {
    if (std::holds_alternative<action::Probe>(act)) {
      for (std::size_t s = 0; s < servers_.size(); ++s) {
        const std::int64_t t = clock_.now_ms() + latency() + latency();
        const std::uint64_t gen = servers_[s].generation;
        ++in_flight_;
        schedule(t, [this, c, s, gen] {
          --in_flight_;
          ServerSlot& srv = servers_[s];
          if (!srv.online || srv.generation != gen || dark(clients_[c])) return;
          auto reply = srv.server->discovery_response(kDiscoveryProbe);
          if (!reply) return;
          clients_[c].client->on_discovery_reply(srv.host, *reply, clock_.now_ms());
          pump_client(c);
        });
      }
    } else if (const auto* conn = std::get_if<action::Connect>(&act)) {
      const std::int64_t t = clock_.now_ms() + latency();
      const Endpoint ep = conn->endpoint;
      ++in_flight_;
      schedule(t, [this, c, ep] {
        --in_flight_;
        ClientSlot& cs = clients_[c];
        std::optional<std::size_t> target;
        for (std::size_t s = 0; s < servers_.size(); ++s) {
          if (servers_[s].online && servers_[s].host == ep.host &&
              servers_[s].server->config().advertised_port == ep.port) {
            target = s;
          }
        }
        if (!target || clock_.now_ms() < cs.outage_until_ms || dark(cs)) {
          ++stats_.refused_connects;
          cs.client->on_connect_failed(clock_.now_ms());
          pump_client(c);
          return;
        }
        Link link;
        link.id = next_link_++;
        link.client = c;
        link.server = *target;
        link.last_up_ms = link.last_down_ms = clock_.now_ms();
        links_.emplace(link.id, link);
        cs.link = link.id;
        ++stats_.connections;
        servers_[*target].server->on_connect(link.id);
        cs.client->on_connected(clock_.now_ms());
        pump_server(*target);
        pump_client(c);
      });
    } else if (const auto* send = std::get_if<action::Send>(&act)) {
      if (!slot.link) continue;
      Link& link = links_.at(*slot.link);
      if (!link.client_open) continue;
      std::string frame = encode(send->envelope);
      ++stats_.frames;
      stats_.bytes += frame.size();
      if (dark(slot)) {
        ++stats_.dark_losses;
        continue;
      }
      link.last_up_ms = std::max(clock_.now_ms() + latency(), link.last_up_ms);
      const ConnectionId id = link.id;
      ++in_flight_;
      schedule(link.last_up_ms, [this, id, frame = std::move(frame)]() mutable {
        --in_flight_;
        deliver_to_server(id, std::move(frame));
      });
    } else if (std::holds_alternative<action::Disconnect>(act)) {
      if (!slot.link) continue;
      const ConnectionId id = *slot.link;
      slot.link.reset();
      Link& link = links_.at(id);
      if (!link.client_open) continue;
      link.client_open = false;
      link.last_up_ms = std::max(clock_.now_ms() + latency(), link.last_up_ms);
      ++in_flight_;
      schedule(link.last_up_ms, [this, id] {
        --in_flight_;
        Link& l = links_.at(id);
        if (!l.server_open) return;
        l.server_open = false;
        servers_[l.server].server->on_disconnect(id);
        pump_server(l.server);
      });
    }
  }
}

void SimNetwork::pump_server(std::size_t s) {
  SessionServer& server = *servers_[s].server;
  for (auto& out : server.drain_outbound()) {
    auto it = links_.find(out.connection);
    if (it == links_.end()) continue;
    Link& link = it->second;
    if (link.server != s || !link.server_open) continue;
    std::string frame = encode(out.envelope);
    ++stats_.frames;
    stats_.bytes += frame.size();
    ClientSlot& cs = clients_[link.client];
    if (dark(cs)) {
      ++stats_.dark_losses;
      continue;
    }
    if (out.envelope.kind() == MessageKind::Update && config_.drop_probability > 0.0) {
      const std::int64_t window = clock_.now_ms() / config_.drop_window_ms;
      if (window != link.window) {
        link.window = window;
        link.window_decided = false;
      }
      if (!link.window_decided) {
        link.window_decided = true;
        if (unit_double(rng_()) < config_.drop_probability) {
          ++stats_.dropped_updates;
          continue;
        }
      }
    }
    link.last_down_ms = std::max(clock_.now_ms() + latency(), link.last_down_ms);
    const ConnectionId id = link.id;
    ++in_flight_;
    schedule(link.last_down_ms, [this, id, frame = std::move(frame)]() mutable {
      --in_flight_;
      deliver_to_client(id, std::move(frame));
    });
  }
  for (ConnectionId id : server.drain_closes()) {
    auto it = links_.find(id);
    if (it == links_.end() || it->second.server != s || !it->second.server_open) continue;
    it->second.server_open = false;
    close_link_from_server(id);
  }
}

void SimNetwork::close_link_from_server(ConnectionId id) {
  Link& link = links_.at(id);
  link.last_down_ms = std::max(clock_.now_ms() + latency(), link.last_down_ms);
  ++in_flight_;
  schedule(link.last_down_ms, [this, id] {
    --in_flight_;
    Link& l = links_.at(id);
    if (!l.client_open) return;
    ClientSlot& cs = clients_[l.client];
    if (dark(cs)) return;  // the FIN is lost too; the client times out
    l.client_open = false;
    if (cs.link == id) {
      cs.link.reset();
      cs.client->on_disconnected(clock_.now_ms());
      pump_client(l.client);
    }
  });
}

void SimNetwork::deliver_to_server(ConnectionId id, std::string frame) {
  Link& link = links_.at(id);
  if (!link.server_open || dark(clients_[link.client])) {
    if (link.server_open) ++stats_.dark_losses;
    return;
  }
  SessionServer& server = *servers_[link.server].server;
  try {
    server.on_envelope(id, decode(frame));
  } catch (const Error& e) {
    server.on_malformed(id, e);
  }
  pump_server(link.server);
}

void SimNetwork::deliver_to_client(ConnectionId id, std::string frame) {
  Link& link = links_.at(id);
  ClientSlot& cs = clients_[link.client];
  if (!link.client_open || cs.link != id) return;
  if (dark(cs)) {
    ++stats_.dark_losses;
    return;
  }
  Envelope env;
  try {
    env = decode(frame);
  } catch (const Error&) {
    return;
  }
  cs.client->on_envelope(env, clock_.now_ms());
  pump_client(link.client);
}

void SimNetwork::start_disconnect(const DisconnectEvent& ev) {
  if (ev.client >= clients_.size()) return;
  ClientSlot& cs = clients_[ev.client];
  const std::int64_t until = clock_.now_ms() + ev.duration_ms;
  if (ev.silent) {
    cs.dark_until_ms = std::max(cs.dark_until_ms, until);
    return;
  }
  cs.outage_until_ms = std::max(cs.outage_until_ms, until);
  if (!cs.link) return;
  const ConnectionId id = *cs.link;
  cs.link.reset();
  Link& link = links_.at(id);
  link.client_open = false;
  if (link.server_open) {
    link.server_open = false;
    servers_[link.server].server->on_disconnect(id);
    pump_server(link.server);
  }
  cs.client->on_disconnected(clock_.now_ms());
  pump_client(ev.client);
}

}  // namespace datacube
