#include "datacube/client.hpp"

#include <charconv>
#include <cmath>

#include "datacube/server.hpp"

namespace datacube {

std::string_view to_string(ClientPhase phase) noexcept {
  switch (phase) {
    case ClientPhase::Idle: return "Idle";
    case ClientPhase::Discovering: return "Discovering";
    case ClientPhase::Connecting: return "Connecting";
    case ClientPhase::AwaitingWelcome: return "AwaitingWelcome";
    case ClientPhase::AnchorDefining: return "AnchorDefining";
    case ClientPhase::Aligning: return "Aligning";
    case ClientPhase::Synced: return "Synced";
    case ClientPhase::Reconnecting: return "Reconnecting";
    case ClientPhase::Failed: return "Failed";
  }
  return "?";
}

std::string_view to_string(InputMode mode) noexcept {
  return mode == InputMode::GazeTap ? "GazeTap" : "RayPointer";
}

std::string_view to_string(PointerSource source) noexcept {
  switch (source) {
    case PointerSource::HandVisible: return "HandVisible";
    case PointerSource::HandHidden: return "HandHidden";
    case PointerSource::AirTap: return "AirTap";
    case PointerSource::ControllerButton: return "ControllerButton";
    case PointerSource::ControllerOrientation: return "ControllerOrientation";
  }
  return "?";
}

std::optional<DiscoveryReply> parse_discovery_reply(std::string_view datagram) {
  if (datagram.substr(0, kDiscoveryReplyPrefix.size()) != kDiscoveryReplyPrefix) return std::nullopt;
  datagram.remove_prefix(kDiscoveryReplyPrefix.size());
  const std::size_t semi = datagram.find(';');
  if (semi == std::string_view::npos || semi == 0) return std::nullopt;
  unsigned port = 0;
  const char* first = datagram.data();
  const char* last = datagram.data() + semi;
  auto [ptr, ec] = std::from_chars(first, last, port);
  if (ec != std::errc{} || ptr != last || port == 0 || port > 65535) return std::nullopt;
  DiscoveryReply reply;
  reply.port = static_cast<std::uint16_t>(port);
  reply.session_id = std::string(datagram.substr(semi + 1));
  if (reply.session_id.empty()) return std::nullopt;
  return reply;
}

InputState arbitrate_input(const InputState& current, const PointerEvent& event) {
  InputState next = current;
  switch (event.source) {
    case PointerSource::HandVisible:
      next.hand_visible = true;
      next.mode = InputMode::GazeTap;
      break;
    case PointerSource::HandHidden:
      next.hand_visible = false;
      break;
    case PointerSource::AirTap:
      break;
    case PointerSource::ControllerButton:
    case PointerSource::ControllerOrientation:
      if (!current.hand_visible) next.mode = InputMode::RayPointer;
      break;
  }
  return next;
}

Ray compute_ray(InputMode mode, const Pose& head, const RigidTransform& alignment,
                const std::optional<UnitQuaternion>& controller) {
  Vec3 origin = head.position;
  Vec3 dir = head.forward();
  if (mode == InputMode::RayPointer) {
    if (!controller) {
      throw Error(ErrorCode::MissingControllerOrientation, "ray pointer needs a controller orientation");
    }
    origin = head.position + head.orientation.rotate(kControllerOffset);
    dir = controller->rotate(kForward);
  }
  return Ray{apply(alignment, origin), apply_direction(alignment, dir)};
}

AnchorSet default_anchor_points() {
  return AnchorSet{{
      {"table-nw", {-0.6, 0.75, -1.2}},
      {"table-ne", {0.6, 0.75, -1.2}},
      {"table-se", {0.6, 0.75, -2.0}},
      {"lamp", {-0.3, 1.6, -1.8}},
  }};
}

SimulatedAnchorSensor::SimulatedAnchorSensor(RigidTransform local_to_world, double noise_sigma,
                                             std::uint64_t seed, std::shared_ptr<SimulatedRoom> room)
    : local_to_world_(local_to_world), noise_sigma_(noise_sigma), rng_(seed), room_(std::move(room)) {
  if (!room_) {
    room_ = std::make_shared<SimulatedRoom>();
    room_->landmarks = default_anchor_points();
    room_->session_to_world = RigidTransform::identity();
  }
}

AnchorSet SimulatedAnchorSensor::define_anchor() {
  room_->session_to_world = local_to_world_;
  return transform_anchors(invert(local_to_world_), room_->landmarks);
}

RigidTransform SimulatedAnchorSensor::expected_alignment() const {
  return compose(invert(room_->session_to_world.value_or(RigidTransform::identity())),
                 local_to_world_);
}

AnchorSet SimulatedAnchorSensor::measure(const AnchorSet& session_anchor) {
  const RigidTransform session_to_local =
      compose(invert(local_to_world_), room_->session_to_world.value_or(RigidTransform::identity()));
  AnchorSet local = transform_anchors(session_to_local, session_anchor);
  if (noise_sigma_ > 0.0) {
    std::normal_distribution<double> noise(0.0, noise_sigma_);
    for (auto& p : local.points) {
      p.position.x += noise(rng_);
      p.position.y += noise(rng_);
      p.position.z += noise(rng_);
    }
  }
  return local;
}

// ---------------------------------------------------------------------------

SessionClient::SessionClient(ClientConfig config, std::shared_ptr<AnchorSensor> sensor)
    : config_(std::move(config)), sensor_(std::move(sensor)) {
  prefs_.language = config_.language;
  if (!sensor_) sensor_ = std::make_shared<SimulatedAnchorSensor>(RigidTransform::identity());
}

void SessionClient::set_phase(ClientPhase phase) {
  if (phase_ == phase) return;
  phase_ = phase;
  phase_history_.push_back(phase);
}

void SessionClient::fail(ErrorCode code, std::string message, std::int64_t) {
  last_error_ = msg::Error{code, std::move(message), std::nullopt};
  if (connected_) {
    send(msg::Leave{});
    actions_.push_back(action::Disconnect{});
  }
  connected_ = false;
  retry_at_ms_.reset();
  set_phase(ClientPhase::Failed);
}

void SessionClient::send(Payload payload) {
  actions_.push_back(action::Send{Envelope{client_id_, std::nullopt, std::move(payload)}});
}

std::vector<ClientAction> SessionClient::drain_actions() { return std::exchange(actions_, {}); }

void SessionClient::start(std::int64_t now_ms) {
  left_ = false;
  connect_attempts_ = 0;
  if (config_.server) {
    connect_to(*config_.server, now_ms);
  } else {
    begin_discovery(now_ms);
  }
}

void SessionClient::begin_discovery(std::int64_t now_ms) {
  set_phase(ClientPhase::Discovering);
  replies_.clear();
  probes_sent_ = 1;
  next_probe_ms_ = now_ms + config_.probe_interval_ms;
  actions_.push_back(action::Probe{});
}

void SessionClient::connect_to(Endpoint endpoint, std::int64_t) {
  endpoint_ = std::move(endpoint);
  set_phase(ClientPhase::Connecting);
  ++connect_attempts_;
  retry_at_ms_.reset();
  actions_.push_back(action::Connect{*endpoint_});
}

void SessionClient::on_discovery_reply(const std::string& host, std::string_view datagram,
                                       std::int64_t now_ms) {
  if (phase_ != ClientPhase::Discovering) return;
  auto reply = parse_discovery_reply(datagram);
  if (!reply) return;
  Endpoint ep{host, reply->port};
  if (!config_.preferred_session || reply->session_id == *config_.preferred_session) {
    connect_to(std::move(ep), now_ms);
    return;
  }
  replies_.emplace_back(std::move(ep), std::move(*reply));
}

void SessionClient::on_connected(std::int64_t now_ms) {
  if (phase_ != ClientPhase::Connecting) return;
  connected_ = true;
  connect_attempts_ = 0;
  last_heard_ms_ = now_ms;
  next_heartbeat_ms_ = now_ms + config_.heartbeat_interval_ms;
  set_phase(ClientPhase::AwaitingWelcome);
  client_id_.clear();
  send(msg::JoinRequest{std::string(kProtocolVersion), config_.role});
}

void SessionClient::on_connect_failed(std::int64_t now_ms) {
  if (phase_ != ClientPhase::Connecting) return;
  if (connect_attempts_ >= config_.max_connect_attempts) {
    fail(ErrorCode::NoServerFound, "connection refused after " + std::to_string(connect_attempts_) +
                                       " attempts",
         now_ms);
    return;
  }
  retry_at_ms_ = now_ms + config_.connect_retry_ms;
}

void SessionClient::on_disconnected(std::int64_t now_ms) {
  if (!connected_) {
    // Refused during the connect handshake.
    on_connect_failed(now_ms);
    return;
  }
  connection_lost(now_ms);
}

void SessionClient::connection_lost(std::int64_t now_ms) {
  connected_ = false;
  welcomed_ = false;
  aligned_ = false;
  resyncing_ = false;
  client_id_.clear();
  if (left_ || phase_ == ClientPhase::Failed || phase_ == ClientPhase::Idle) return;
  set_phase(ClientPhase::Reconnecting);
  if (!config_.auto_reconnect) return;
  connect_attempts_ = 0;
  if (endpoint_) {
    connect_to(*endpoint_, now_ms);
  } else {
    begin_discovery(now_ms);
  }
}

void SessionClient::leave(std::int64_t) {
  if (connected_) {
    send(msg::Leave{});
    actions_.push_back(action::Disconnect{});
  }
  connected_ = false;
  welcomed_ = false;
  left_ = true;
  retry_at_ms_.reset();
  set_phase(ClientPhase::Idle);
}

void SessionClient::tick(std::int64_t now_ms) {
  if (phase_ == ClientPhase::Discovering && now_ms >= next_probe_ms_) {
    if (!replies_.empty()) {
      connect_to(replies_.front().first, now_ms);
    } else if (probes_sent_ < config_.max_probes) {
      ++probes_sent_;
      next_probe_ms_ = now_ms + config_.probe_interval_ms;
      actions_.push_back(action::Probe{});
    } else {
      fail(ErrorCode::NoServerFound,
           "no reply to " + std::to_string(probes_sent_) + " discovery probes", now_ms);
    }
    return;
  }
  if (phase_ == ClientPhase::Connecting && retry_at_ms_ && now_ms >= *retry_at_ms_ && endpoint_) {
    connect_to(*endpoint_, now_ms);
    return;
  }
  if (!connected_) return;
  if (now_ms - last_heard_ms_ > config_.server_timeout_ms) {
    actions_.push_back(action::Disconnect{});
    connection_lost(now_ms);
    return;
  }
  if (welcomed_ && now_ms >= next_heartbeat_ms_) {
    next_heartbeat_ms_ = now_ms + config_.heartbeat_interval_ms;
    send(msg::Heartbeat{});
  }
}

void SessionClient::on_envelope(const Envelope& env, std::int64_t now_ms) {
  if (!connected_) return;
  last_heard_ms_ = now_ms;
  if (env.seq) max_seq_seen_ = std::max(max_seq_seen_, *env.seq);

  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, msg::Welcome>) {
          handle_welcome(p, now_ms);
        } else if constexpr (std::is_same_v<T, msg::AnchorInfo>) {
          handle_anchor_info(p, now_ms);
        } else if constexpr (std::is_same_v<T, msg::Update>) {
          handle_update(env, p);
        } else if constexpr (std::is_same_v<T, msg::FullState>) {
          if (p.state && welcomed_) handle_full_state(*p.state);
        } else if constexpr (std::is_same_v<T, msg::Heartbeat>) {
          if (welcomed_ && !resyncing_ && p.server_seq && *p.server_seq > replica_.server_seq) {
            request_resync();
          }
        } else if constexpr (std::is_same_v<T, msg::Error>) {
          if (p.ref) {
            rejections_[*p.ref] = p;
            last_error_ = p;
            return;
          }
          if (!welcomed_ || p.code == ErrorCode::AnchorAlreadySet ||
              (phase_ == ClientPhase::AnchorDefining && p.code == ErrorCode::DegenerateAnchors)) {
            fail(p.code, p.message, now_ms);
            return;
          }
          last_error_ = p;
        }
      },
      env.payload);
}

void SessionClient::reset_replica(SessionState state) {
  replica_ = std::move(state);
  if (config_.record_history) history_ = ReplicaHistory{replica_, {}};
}

void SessionClient::handle_welcome(const msg::Welcome& w, std::int64_t now_ms) {
  if (phase_ != ClientPhase::AwaitingWelcome) return;
  ++welcomes_;
  welcomed_ = true;
  client_id_ = w.client_id;
  session_id_ = w.session_id;
  reset_replica(w.state);
  resyncing_ = false;
  aligned_ = false;
  acks_.clear();
  rejections_.clear();
  anchor_defined_by_me_ = false;
  if (w.anchor_needed) {
    define_anchor(now_ms);
  } else if (w.anchor) {
    align_to(*w.anchor, now_ms);
  } else {
    set_phase(ClientPhase::Aligning);
  }
}

void SessionClient::define_anchor(std::int64_t) {
  set_phase(ClientPhase::AnchorDefining);
  anchor_defined_by_me_ = true;
  anchor_ = sensor_->define_anchor();
  alignment_ = RigidTransform::identity();
  alignment_residual_ = 0.0;
  send(msg::AnchorUpload{*anchor_});
}

void SessionClient::handle_anchor_info(const msg::AnchorInfo& info, std::int64_t now_ms) {
  if (!welcomed_) return;
  if (info.anchor_needed && !info.anchor) {
    if (!aligned_ && config_.role == Role::Participant) define_anchor(now_ms);
    return;
  }
  if (!info.anchor || aligned_) return;
  if (anchor_defined_by_me_ && anchor_ && *info.anchor == *anchor_) {
    aligned_ = true;
    set_phase(resyncing_ ? ClientPhase::Reconnecting : ClientPhase::Synced);
    return;
  }
  align_to(*info.anchor, now_ms);
}

void SessionClient::align_to(const AnchorSet& anchor, std::int64_t now_ms) {
  set_phase(ClientPhase::Aligning);
  anchor_ = anchor;
  try {
    const AnchorSet local = sensor_->measure(anchor);
    const RigidTransform t = solve_alignment(anchor, local);
    const double rms = alignment_rms(t, anchor, local);
    if (!(rms <= config_.alignment_tolerance_m)) {
      fail(ErrorCode::AlignmentFailed, "residual " + std::to_string(rms) + " m", now_ms);
      return;
    }
    alignment_ = t;
    alignment_residual_ = rms;
  } catch (const Error& e) {
    fail(ErrorCode::AlignmentFailed, e.what(), now_ms);
    return;
  }
  aligned_ = true;
  set_phase(resyncing_ ? ClientPhase::Reconnecting : ClientPhase::Synced);
}

void SessionClient::request_resync() {
  resyncing_ = true;
  ++full_state_requests_;
  if (phase_ == ClientPhase::Synced) set_phase(ClientPhase::Reconnecting);
  send(msg::FullState{});
}

void SessionClient::handle_update(const Envelope& env, const msg::Update& u) {
  if (!welcomed_ || resyncing_ || !env.seq) return;
  const std::uint64_t seq = *env.seq;
  if (seq <= replica_.server_seq) return;
  if (seq != replica_.server_seq + 1) {
    request_resync();
    return;
  }
  const bool skip = config_.debug_skip_apply_seq && *config_.debug_skip_apply_seq == seq;
  if (skip) {
    replica_.server_seq = seq;
  } else {
    replica_ = apply_op(std::move(replica_), seq, u.op);
  }
  if (config_.record_history) history_.ops.push_back(AppliedOp{seq, u.op, skip});
  if (u.origin == client_id_ && u.ref != 0) acks_[u.ref] = seq;
}

void SessionClient::handle_full_state(const SessionState& state) {
  if (state.server_seq < replica_.server_seq && !resyncing_) return;
  reset_replica(state);
  if (resyncing_) {
    resyncing_ = false;
    if (phase_ == ClientPhase::Reconnecting && aligned_) set_phase(ClientPhase::Synced);
  }
}

std::uint64_t SessionClient::submit(OpPayload op) {
  if (phase_ != ClientPhase::Synced) {
    throw Error(ErrorCode::NotSynced, "cannot submit in phase " + std::string(to_string(phase_)));
  }
  const std::uint64_t ref = next_ref_++;
  send(msg::SubmitOp{ref, std::move(op)});
  return ref;
}

std::uint64_t SessionClient::publish_pose() {
  Pose session_pose{to_session(head_pose_.position),
                    alignment_.rotation * head_pose_.orientation};
  return submit(op::SetUserPose{"", session_pose});
}

std::optional<std::uint64_t> SessionClient::acknowledged_seq(std::uint64_t ref) const {
  auto it = acks_.find(ref);
  if (it == acks_.end()) return std::nullopt;
  return it->second;
}

std::optional<msg::Error> SessionClient::rejection(std::uint64_t ref) const {
  auto it = rejections_.find(ref);
  if (it == rejections_.end()) return std::nullopt;
  return it->second;
}

void SessionClient::set_language(std::string language) { prefs_.language = std::move(language); }

void SessionClient::on_pointer(const PointerEvent& event) {
  if (event.source == PointerSource::ControllerOrientation && event.orientation) {
    controller_orientation_ = event.orientation;
  }
  prefs_.input = arbitrate_input(prefs_.input, event);
}

Ray SessionClient::current_ray(const std::optional<UnitQuaternion>& controller) const {
  if (phase_ != ClientPhase::Synced) {
    throw Error(ErrorCode::NotSynced, "no session frame in phase " + std::string(to_string(phase_)));
  }
  return compute_ray(prefs_.input.mode, head_pose_, alignment_,
                     controller ? controller : controller_orientation_);
}

}  // namespace datacube
