#pragma once

// Authoritative session host. SessionServer is transport-agnostic: a driver
// (socket loop or simulated network) reports connections and decoded
// envelopes, then drains the resulting outbound envelopes and close
// requests. All registry mutation happens inside these calls, which the
// driver must not make concurrently.

#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "datacube/clock.hpp"
#include "datacube/dataset.hpp"
#include "datacube/protocol.hpp"

namespace datacube {

using ConnectionId = std::uint64_t;

inline constexpr std::uint16_t kDefaultDiscoveryPort = 47799;
inline constexpr std::uint16_t kDefaultTcpPort = 47800;
inline constexpr std::uint16_t kDefaultWebSocketPort = 47801;
inline constexpr std::string_view kDiscoveryProbe = "DATACUBE_DISCOVERY_V1?";
inline constexpr std::string_view kDiscoveryReplyPrefix = "DATACUBE_DISCOVERY_V1!";

struct ServerConfig {
  std::string session_id;
  std::size_t capacity = 6;  // participants; observers are not counted
  std::int64_t heartbeat_timeout_ms = 10'000;
  std::int64_t pose_min_interval_ms = 50;  // 20 pose updates per second
  std::size_t op_log_capacity = 4096;
  std::uint16_t advertised_port = kDefaultTcpPort;
};

struct ClientRecord {
  std::string client_id;
  ConnectionId connection = 0;
  Role role = Role::Participant;
  std::int64_t last_heard_ms = 0;
};

struct LoggedOp {
  std::uint64_t seq = 0;
  std::string origin;
  OpPayload op;
};

struct Outbound {
  ConnectionId connection = 0;
  Envelope envelope;
};

class SessionServer {
 public:
  SessionServer(ServerConfig config, const Clock& clock);

  // Transport events.
  void on_connect(ConnectionId connection);
  void on_disconnect(ConnectionId connection);
  void on_envelope(ConnectionId connection, const Envelope& envelope);
  // A frame from this connection failed to decode.
  void on_malformed(ConnectionId connection, const Error& error);

  // Flushes coalesced poses and expires silent clients.
  void tick();
  // Clients silent for longer than the timeout are removed; returns their ids.
  std::vector<std::string> heartbeat_sweep(std::int64_t now_ms);

  std::vector<Outbound> drain_outbound();
  std::vector<ConnectionId> drain_closes();

  // Response to a UDP discovery datagram, or nothing for foreign payloads.
  std::optional<std::string> discovery_response(std::string_view datagram) const;

  // Datasets the server can serve from its local storage; LoadDataset ops
  // must name one of these by content hash.
  void register_dataset(Dataset dataset);
  const Dataset* dataset_for(std::string_view content_hash) const;
  const Dataset* loaded_dataset() const;

  // Orders and broadcasts an op that originates at the server itself.
  std::uint64_t submit_server_op(OpPayload op);

  const ServerConfig& config() const noexcept { return config_; }
  // For drivers that bind an ephemeral port.
  void set_advertised_port(std::uint16_t port) noexcept { config_.advertised_port = port; }
  const std::string& session_id() const noexcept { return config_.session_id; }
  const SessionState& state() const noexcept { return state_; }
  const std::optional<AnchorSet>& anchor() const noexcept { return anchor_; }
  const std::deque<LoggedOp>& op_log() const noexcept { return op_log_; }
  const std::map<std::string, ClientRecord>& clients() const noexcept { return clients_; }
  std::size_t participant_count() const;
  std::size_t observer_count() const;
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }
  // Coalesced poses waiting for their rate-limit window.
  std::size_t pending_pose_count() const noexcept { return pending_poses_.size(); }

 private:
  void handle_join(ConnectionId conn, const Envelope& env, const msg::JoinRequest& req);
  void handle_anchor_upload(ClientRecord& client, const msg::AnchorUpload& up);
  void handle_submit(ClientRecord& client, const msg::SubmitOp& submit);
  void order(std::string origin, std::uint64_t ref, OpPayload op);
  void remove_client(const std::string& client_id, bool close_connection);
  void flush_poses(bool force);
  void send(ConnectionId conn, Payload payload, std::optional<std::uint64_t> seq = std::nullopt);
  void send_error(ConnectionId conn, ErrorCode code, std::string message,
                  std::optional<std::uint64_t> ref = std::nullopt);
  ClientRecord* client_for(ConnectionId conn);

  struct PendingPose {
    std::uint64_t ref = 0;
    op::SetUserPose op;
  };

  ServerConfig config_;
  const Clock& clock_;
  SessionState state_ = SessionState::initial();
  std::optional<AnchorSet> anchor_;
  std::optional<std::string> anchor_definer_;
  std::uint64_t next_client_number_ = 1;
  std::map<std::string, ClientRecord> clients_;
  std::map<ConnectionId, std::string> connection_clients_;
  std::deque<LoggedOp> op_log_;
  std::map<std::string, std::int64_t> last_pose_ms_;
  std::map<std::string, PendingPose> pending_poses_;
  std::map<std::string, Dataset> datasets_;
  std::vector<Outbound> outbound_;
  std::vector<ConnectionId> closes_;
  std::vector<std::string> warnings_;
};

// Writes `<dir>/<session-id>/snapshots/<id>.snap` per snapshot and
// `<dir>/<session-id>/watchlist.csv`. Stale snapshot files are removed.
// Returns the written paths. Throws NoDatasetLoaded or StorageUnavailable.
std::vector<std::filesystem::path> persist_artifacts(const std::filesystem::path& data_dir,
                                                     const std::string& session_id,
                                                     const SessionState& state,
                                                     const Dataset* dataset);

// Text form of one snapshot file.
std::string snapshot_file_text(const std::string& snapshot_id, const SnapshotState& snapshot);

}  // namespace datacube
