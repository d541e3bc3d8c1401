#pragma once

// Client state machine. Like the server it performs no I/O: a driver feeds
// it transport events and timer ticks, and executes the actions it drains.
// The replica changes only when server-ordered messages arrive.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "datacube/protocol.hpp"
#include "datacube/viewmath.hpp"

namespace datacube {

enum class ClientPhase {
  Idle,
  Discovering,
  Connecting,
  AwaitingWelcome,
  AnchorDefining,
  Aligning,
  Synced,
  Reconnecting,
  Failed,
};

std::string_view to_string(ClientPhase phase) noexcept;

struct Endpoint {
  std::string host;
  std::uint16_t port = 0;

  bool operator==(const Endpoint&) const = default;
};

struct DiscoveryReply {
  std::uint16_t port = 0;
  std::string session_id;

  bool operator==(const DiscoveryReply&) const = default;
};

// Parses `DATACUBE_DISCOVERY_V1!<port>;<session-id>`.
std::optional<DiscoveryReply> parse_discovery_reply(std::string_view datagram);

// ---------------------------------------------------------------------------
// Input

enum class InputMode { GazeTap, RayPointer };

enum class PointerSource { HandVisible, HandHidden, AirTap, ControllerButton, ControllerOrientation };

inline constexpr PointerSource kAllPointerSources[] = {
    PointerSource::HandVisible, PointerSource::HandHidden, PointerSource::AirTap,
    PointerSource::ControllerButton, PointerSource::ControllerOrientation};

std::string_view to_string(InputMode mode) noexcept;
std::string_view to_string(PointerSource source) noexcept;

struct PointerEvent {
  PointerSource source = PointerSource::AirTap;
  std::int64_t timestamp_ms = 0;
  // Set for ControllerOrientation.
  std::optional<UnitQuaternion> orientation;
};

struct InputState {
  InputMode mode = InputMode::GazeTap;
  bool hand_visible = false;

  bool operator==(const InputState&) const = default;
};

// Hand in view selects gaze-and-tap; a controller action while the hand is
// out of view selects the ray pointer; anything else keeps the mode.
InputState arbitrate_input(const InputState& current, const PointerEvent& event);

struct Ray {
  Vec3 origin;
  Vec3 direction;
};

// Controller ray origin relative to the head, in head coordinates.
inline constexpr Vec3 kControllerOffset{0.2, -0.2, 0.0};

// Ray in the session frame. `head` is in the local frame; `controller` is the
// controller orientation in the local frame. Throws
// MissingControllerOrientation in RayPointer mode without one.
Ray compute_ray(InputMode mode, const Pose& head, const RigidTransform& alignment,
                const std::optional<UnitQuaternion>& controller);

// ---------------------------------------------------------------------------
// Anchors

class AnchorSensor {
 public:
  virtual ~AnchorSensor() = default;
  // Reference points in this device's local frame, used by the first
  // participant to define the session frame.
  virtual AnchorSet define_anchor() = 0;
  // Local-frame observations of the labeled session anchor points.
  virtual AnchorSet measure(const AnchorSet& session_anchor) = 0;
};

// Physical room shared by simulated devices: landmark positions in world
// coordinates, and the world pose of the session frame once a device has
// defined it.
struct SimulatedRoom {
  AnchorSet landmarks;
  std::optional<RigidTransform> session_to_world;
};

// Device whose local frame sits at `local_to_world` in the room. Measurements
// get isotropic Gaussian noise of `noise_sigma` metres. Without a room the
// device gets a private one whose session frame is the world frame.
class SimulatedAnchorSensor final : public AnchorSensor {
 public:
  SimulatedAnchorSensor(RigidTransform local_to_world, double noise_sigma = 0.0,
                        std::uint64_t seed = 0, std::shared_ptr<SimulatedRoom> room = nullptr);

  AnchorSet define_anchor() override;
  AnchorSet measure(const AnchorSet& session_anchor) override;

  const RigidTransform& local_to_world() const noexcept { return local_to_world_; }
  // Alignment a perfect solver would recover.
  RigidTransform expected_alignment() const;
  const std::shared_ptr<SimulatedRoom>& room() const noexcept { return room_; }

 private:
  RigidTransform local_to_world_;
  double noise_sigma_;
  std::mt19937_64 rng_;
  std::shared_ptr<SimulatedRoom> room_;
};

// Four labeled, non-coplanar points around a tabletop.
AnchorSet default_anchor_points();

// ---------------------------------------------------------------------------
// Client

struct ClientConfig {
  Role role = Role::Participant;
  // Skips discovery when set.
  std::optional<Endpoint> server;
  // Discovery policy: this session if it answers, else the first reply.
  std::optional<std::string> preferred_session;
  std::string language = "en";
  std::int64_t heartbeat_interval_ms = 2'000;
  std::int64_t server_timeout_ms = 10'000;
  std::int64_t probe_interval_ms = 1'000;
  int max_probes = 3;
  std::int64_t connect_retry_ms = 500;
  int max_connect_attempts = 40;
  double alignment_tolerance_m = 0.05;
  bool auto_reconnect = true;
  bool record_history = false;
  // Fault injection for harness tests: advance past this seq without
  // applying its op.
  std::optional<std::uint64_t> debug_skip_apply_seq;
};

namespace action {
struct Probe {
  bool operator==(const Probe&) const = default;
};
struct Connect {
  Endpoint endpoint;
  bool operator==(const Connect&) const = default;
};
struct Send {
  Envelope envelope;
  bool operator==(const Send&) const = default;
};
struct Disconnect {
  bool operator==(const Disconnect&) const = default;
};
}  // namespace action

using ClientAction = std::variant<action::Probe, action::Connect, action::Send, action::Disconnect>;

struct AppliedOp {
  std::uint64_t seq = 0;
  OpPayload op;
  bool skipped = false;
};

// State the replica was rebuilt from, plus every op applied on top of it.
struct ReplicaHistory {
  SessionState baseline;
  std::vector<AppliedOp> ops;
};

struct LocalPrefs {
  std::string language = "en";
  InputState input;
};

class SessionClient {
 public:
  SessionClient(ClientConfig config, std::shared_ptr<AnchorSensor> sensor);

  // Begins discovery or connects to the configured endpoint.
  void start(std::int64_t now_ms);
  void leave(std::int64_t now_ms);

  // Transport events.
  void on_discovery_reply(const std::string& host, std::string_view datagram, std::int64_t now_ms);
  void on_connected(std::int64_t now_ms);
  void on_connect_failed(std::int64_t now_ms);
  void on_envelope(const Envelope& envelope, std::int64_t now_ms);
  void on_disconnected(std::int64_t now_ms);
  void tick(std::int64_t now_ms);

  std::vector<ClientAction> drain_actions();

  // Sends an op; returns its correlation ref. Throws NotSynced.
  std::uint64_t submit(OpPayload op);
  // Publishes the head pose, mapped into the session frame.
  std::uint64_t publish_pose();
  std::optional<std::uint64_t> acknowledged_seq(std::uint64_t ref) const;
  std::optional<msg::Error> rejection(std::uint64_t ref) const;

  // Local presentation state; never produces messages.
  void set_language(std::string language);
  void on_pointer(const PointerEvent& event);
  void set_head_pose(const Pose& local_pose) { head_pose_ = local_pose; }

  // Ray in the session frame for the active input mode. Throws NotSynced or
  // MissingControllerOrientation.
  Ray current_ray(const std::optional<UnitQuaternion>& controller = std::nullopt) const;

  Vec3 to_session(const Vec3& local) const { return apply(alignment_, local); }
  Vec3 to_local(const Vec3& session) const { return apply(invert(alignment_), session); }
  RigidTransform to_session(const RigidTransform& local) const { return compose(alignment_, local); }

  ClientPhase phase() const noexcept { return phase_; }
  const std::vector<ClientPhase>& phase_history() const noexcept { return phase_history_; }
  bool synced() const noexcept { return phase_ == ClientPhase::Synced; }
  const ClientConfig& config() const noexcept { return config_; }
  const std::string& client_id() const noexcept { return client_id_; }
  const std::string& session_id() const noexcept { return session_id_; }
  const std::optional<Endpoint>& endpoint() const noexcept { return endpoint_; }
  const RigidTransform& alignment() const noexcept { return alignment_; }
  double alignment_residual() const noexcept { return alignment_residual_; }
  const std::optional<AnchorSet>& anchor() const noexcept { return anchor_; }
  const SessionState& replica() const noexcept { return replica_; }
  const LocalPrefs& local_prefs() const noexcept { return prefs_; }
  const Pose& head_pose() const noexcept { return head_pose_; }
  std::uint64_t max_seq_seen() const noexcept { return max_seq_seen_; }
  const std::optional<msg::Error>& last_error() const noexcept { return last_error_; }
  const ReplicaHistory& history() const noexcept { return history_; }
  std::size_t full_state_requests() const noexcept { return full_state_requests_; }
  std::size_t welcomes() const noexcept { return welcomes_; }

 private:
  void set_phase(ClientPhase phase);
  void fail(ErrorCode code, std::string message, std::int64_t now_ms);
  void send(Payload payload);
  void begin_discovery(std::int64_t now_ms);
  void connect_to(Endpoint endpoint, std::int64_t now_ms);
  void handle_welcome(const msg::Welcome& w, std::int64_t now_ms);
  void handle_anchor_info(const msg::AnchorInfo& info, std::int64_t now_ms);
  void handle_update(const Envelope& env, const msg::Update& u);
  void handle_full_state(const SessionState& state);
  void align_to(const AnchorSet& anchor, std::int64_t now_ms);
  void define_anchor(std::int64_t now_ms);
  void request_resync();
  void reset_replica(SessionState state);
  void connection_lost(std::int64_t now_ms);

  ClientConfig config_;
  std::shared_ptr<AnchorSensor> sensor_;
  ClientPhase phase_ = ClientPhase::Idle;
  std::vector<ClientPhase> phase_history_{ClientPhase::Idle};
  std::vector<ClientAction> actions_;

  // Discovery and connection.
  int probes_sent_ = 0;
  std::int64_t next_probe_ms_ = 0;
  std::vector<std::pair<Endpoint, DiscoveryReply>> replies_;
  std::optional<Endpoint> endpoint_;
  bool connected_ = false;
  int connect_attempts_ = 0;
  std::optional<std::int64_t> retry_at_ms_;
  std::int64_t last_heard_ms_ = 0;
  std::int64_t next_heartbeat_ms_ = 0;
  bool left_ = false;

  // Session.
  std::string client_id_;
  std::string session_id_;
  bool welcomed_ = false;
  bool anchor_defined_by_me_ = false;
  std::optional<AnchorSet> anchor_;
  RigidTransform alignment_;
  double alignment_residual_ = 0.0;
  bool aligned_ = false;
  SessionState replica_;
  bool resyncing_ = false;
  std::uint64_t max_seq_seen_ = 0;
  std::size_t full_state_requests_ = 0;
  std::size_t welcomes_ = 0;
  ReplicaHistory history_;

  std::uint64_t next_ref_ = 1;
  std::map<std::uint64_t, std::uint64_t> acks_;
  std::map<std::uint64_t, msg::Error> rejections_;
  std::optional<msg::Error> last_error_;

  LocalPrefs prefs_;
  Pose head_pose_;
  std::optional<UnitQuaternion> controller_orientation_;
};

}  // namespace datacube
