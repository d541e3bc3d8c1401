#pragma once

// Shared session state, the operations that mutate it, and the wire
// messages exchanged between the session server and its clients. Server and
// clients evolve their copies of SessionState with the same pure reducer, so
// replicas that see the same server-ordered op stream end up identical.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "datacube/dataset.hpp"
#include "datacube/error.hpp"
#include "datacube/viewmath.hpp"

namespace datacube {

inline constexpr std::string_view kProtocolVersion = "DATACUBE/1";
inline constexpr std::size_t kMaxFrameBytes = 16u * 1024u * 1024u;
inline constexpr std::string_view kServerSender = "server";

inline constexpr std::string_view kCubeId = "cube";
inline constexpr std::string_view kWallId = "wall";

// Pose plus uniform scale of a shared object in the session frame.
struct Placement {
  RigidTransform pose;
  double scale = 1.0;

  bool operator==(const Placement&) const = default;
};

enum class ObjectKind { DataCube, AnalysisWall, Snapshot };
enum class VizMode { Scatter, BarChart };
enum class Role { Participant, Observer };

std::string_view to_string(ObjectKind kind) noexcept;
std::string_view to_string(VizMode mode) noexcept;
std::string_view to_string(Role role) noexcept;

// Immutable point list shared between copies of the state; compares by value.
class FrozenPoints {
 public:
  FrozenPoints() : points_(std::make_shared<const std::vector<SnapshotPoint>>()) {}
  explicit FrozenPoints(std::vector<SnapshotPoint> points)
      : points_(std::make_shared<const std::vector<SnapshotPoint>>(std::move(points))) {}

  const std::vector<SnapshotPoint>& get() const noexcept { return *points_; }
  std::size_t size() const noexcept { return points_->size(); }

  bool operator==(const FrozenPoints& o) const {
    return points_ == o.points_ || *points_ == *o.points_;
  }

 private:
  std::shared_ptr<const std::vector<SnapshotPoint>> points_;
};

struct CubeState {
  DimensionMapping mapping;
  FilterState filter;
  VizMode viz_mode = VizMode::Scatter;
  std::optional<std::size_t> selected_row;
  Watchlist watchlist;

  bool operator==(const CubeState&) const = default;
};

struct WallState {
  // Snapshot id per slot; deleted snapshots leave their slot free.
  std::vector<std::optional<std::string>> slots;

  bool operator==(const WallState&) const = default;
};

struct SnapshotState {
  FrozenPoints points;
  CubeFace face;
  std::string creator;
  std::int64_t created_at_ms = 0;

  bool operator==(const SnapshotState&) const = default;
};

struct SharedObject {
  std::string id;
  Placement placement;
  std::variant<CubeState, WallState, SnapshotState> state;

  ObjectKind kind() const noexcept { return static_cast<ObjectKind>(state.index()); }
  bool operator==(const SharedObject&) const = default;
};

struct SessionState {
  std::map<std::string, SharedObject> objects;
  std::uint64_t server_seq = 0;
  std::string dataset_ref;                       // content hash, empty when none
  std::vector<ColumnDescriptor> dataset_columns;
  std::vector<std::string> snapshots;            // wall order
  std::map<std::string, Pose> user_poses;

  // Fresh session: one cube and one wall, nothing loaded.
  static SessionState initial();

  const CubeState* cube() const;
  const WallState* wall() const;

  bool operator==(const SessionState&) const = default;
};

// ---------------------------------------------------------------------------
// Operations

namespace op {

struct SetTransform {
  std::string object_id;
  Placement placement;
  bool operator==(const SetTransform&) const = default;
};
struct SetMapping {
  std::string object_id;
  DimensionMapping mapping;
  bool operator==(const SetMapping&) const = default;
};
struct SetFilter {
  std::string object_id;
  FilterState filter;
  bool operator==(const SetFilter&) const = default;
};
struct SetVizMode {
  std::string object_id;
  VizMode mode = VizMode::Scatter;
  bool operator==(const SetVizMode&) const = default;
};
struct SelectRow {
  std::string object_id;
  std::optional<std::size_t> row;
  bool operator==(const SelectRow&) const = default;
};
struct WatchlistAdd {
  std::string object_id;
  std::string individual_id;
  std::int64_t created_at_ms = 0;  // stamped by the server
  bool operator==(const WatchlistAdd&) const = default;
};
struct WatchlistRemove {
  std::string object_id;
  std::string individual_id;
  bool operator==(const WatchlistRemove&) const = default;
};
// The new object's id is derived from the sequence number it is applied at.
struct CreateSnapshot {
  FrozenPoints points;
  CubeFace face;
  std::string creator;             // stamped by the server
  std::int64_t created_at_ms = 0;  // stamped by the server
  bool operator==(const CreateSnapshot&) const = default;
};
struct DeleteSnapshot {
  std::string snapshot_id;
  bool operator==(const DeleteSnapshot&) const = default;
};
struct SetUserPose {
  std::string client_id;  // stamped by the server
  Pose pose;
  bool operator==(const SetUserPose&) const = default;
};
// Server-originated when a client leaves or times out.
struct ClearUserPose {
  std::string client_id;
  bool operator==(const ClearUserPose&) const = default;
};
struct LoadDataset {
  std::string content_hash;
  std::vector<ColumnDescriptor> columns;
  bool operator==(const LoadDataset&) const = default;
};

}  // namespace op

using OpPayload =
    std::variant<op::SetTransform, op::SetMapping, op::SetFilter, op::SetVizMode, op::SelectRow,
                 op::WatchlistAdd, op::WatchlistRemove, op::CreateSnapshot, op::DeleteSnapshot,
                 op::SetUserPose, op::ClearUserPose, op::LoadDataset>;

std::string_view op_name(const OpPayload& op) noexcept;

std::string snapshot_id_for_seq(std::uint64_t seq);

using WarningSink = std::function<void(std::string_view)>;

// Deterministic reducer. Requires seq == state.server_seq + 1 (throws
// SequenceGap otherwise). Last writer wins per field; ops that reference a
// missing object leave the state unchanged apart from server_seq and report
// a warning to the sink.
SessionState apply_op(SessionState state, std::uint64_t seq, const OpPayload& op,
                      const WarningSink& warn = {});

// Field-level checks of an op against the current state (schema of the
// loaded dataset, value ranges). Throws SchemaViolation.
void validate_op(const SessionState& state, const OpPayload& op);

// Canonical text form hashed by state_digest: sorted ids, fixed field order,
// shortest round-trip floats.
std::string canonical_text(const SessionState& state);
std::uint64_t state_digest(const SessionState& state);

// ---------------------------------------------------------------------------
// Messages

enum class MessageKind {
  JoinRequest,
  Welcome,
  AnchorUpload,
  AnchorInfo,
  SubmitOp,
  Update,
  FullState,
  Heartbeat,
  Leave,
  Error,
};

std::string_view to_string(MessageKind kind) noexcept;

namespace msg {

struct JoinRequest {
  std::string version{kProtocolVersion};
  Role role = Role::Participant;
  bool operator==(const JoinRequest&) const = default;
};
struct Welcome {
  std::string client_id;
  std::string session_id;
  bool anchor_needed = false;
  std::optional<AnchorSet> anchor;
  SessionState state;
  bool operator==(const Welcome&) const = default;
};
struct AnchorUpload {
  AnchorSet anchor;
  bool operator==(const AnchorUpload&) const = default;
};
// Server -> client: the stored session anchor, or a request that the
// receiver define it.
struct AnchorInfo {
  std::optional<AnchorSet> anchor;
  bool anchor_needed = false;
  bool operator==(const AnchorInfo&) const = default;
};
struct SubmitOp {
  std::uint64_t ref = 0;  // client-local correlation id
  OpPayload op;
  bool operator==(const SubmitOp&) const = default;
};
struct Update {
  std::string origin;
  std::uint64_t ref = 0;
  OpPayload op;
  bool operator==(const Update&) const = default;
};
// Without a state this is a resynchronization request.
struct FullState {
  std::optional<SessionState> state;
  bool operator==(const FullState&) const = default;
};
// Server replies carry the current server_seq so clients notice lost updates.
struct Heartbeat {
  std::optional<std::uint64_t> server_seq;
  bool operator==(const Heartbeat&) const = default;
};
struct Leave {
  bool operator==(const Leave&) const = default;
};
struct Error {
  ErrorCode code = ErrorCode::SchemaViolation;
  std::string message;
  std::optional<std::uint64_t> ref;
  bool operator==(const Error&) const = default;
};

}  // namespace msg

// Alternative order mirrors MessageKind.
using Payload = std::variant<msg::JoinRequest, msg::Welcome, msg::AnchorUpload, msg::AnchorInfo,
                             msg::SubmitOp, msg::Update, msg::FullState, msg::Heartbeat,
                             msg::Leave, msg::Error>;

struct Envelope {
  std::string sender;
  std::optional<std::uint64_t> seq;
  Payload payload;

  MessageKind kind() const noexcept { return static_cast<MessageKind>(payload.index()); }
  bool operator==(const Envelope&) const = default;
};

// Body: UTF-8 JSON object with fields in a fixed order.
std::string encode_body(const Envelope& envelope);
// Throws MalformedFrame, UnknownKind or SchemaViolation.
Envelope decode_body(std::string_view body);

// Frame: 4-byte big-endian body length, then the body.
std::string encode(const Envelope& envelope);
// Exactly one frame. Throws FrameTooLarge, MalformedFrame, UnknownKind,
// SchemaViolation.
Envelope decode(std::string_view frame);

// Incremental decoder for stream transports.
class FrameDecoder {
 public:
  void feed(std::string_view bytes);
  // Next complete frame, if any. Throws like decode().
  std::optional<Envelope> next();
  std::size_t buffered() const noexcept { return buffer_.size(); }

 private:
  std::string buffer_;
};

}  // namespace datacube
