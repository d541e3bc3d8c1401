#include "datacube/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "datacube/numfmt.hpp"

namespace datacube {

std::string_view to_string(ObjectKind kind) noexcept {
  switch (kind) {
    case ObjectKind::DataCube: return "DataCube";
    case ObjectKind::AnalysisWall: return "AnalysisWall";
    case ObjectKind::Snapshot: return "Snapshot";
  }
  return "DataCube";
}

std::string_view to_string(VizMode mode) noexcept {
  return mode == VizMode::Scatter ? "Scatter" : "BarChart";
}

std::string_view to_string(Role role) noexcept {
  return role == Role::Participant ? "Participant" : "Observer";
}

std::string_view to_string(MessageKind kind) noexcept {
  switch (kind) {
    case MessageKind::JoinRequest: return "JoinRequest";
    case MessageKind::Welcome: return "Welcome";
    case MessageKind::AnchorUpload: return "AnchorUpload";
    case MessageKind::AnchorInfo: return "AnchorInfo";
    case MessageKind::SubmitOp: return "SubmitOp";
    case MessageKind::Update: return "Update";
    case MessageKind::FullState: return "FullState";
    case MessageKind::Heartbeat: return "Heartbeat";
    case MessageKind::Leave: return "Leave";
    case MessageKind::Error: return "Error";
  }
  return "Error";
}

std::string_view op_name(const OpPayload& op) noexcept {
  static constexpr std::string_view kNames[] = {
      "SetTransform", "SetMapping",     "SetFilter",      "SetVizMode",
      "SelectRow",    "WatchlistAdd",   "WatchlistRemove", "CreateSnapshot",
      "DeleteSnapshot", "SetUserPose",  "ClearUserPose",  "LoadDataset",
  };
  return kNames[op.index()];
}

std::string snapshot_id_for_seq(std::uint64_t seq) { return "snapshot-" + std::to_string(seq); }

SessionState SessionState::initial() {
  SessionState s;
  SharedObject cube{std::string(kCubeId), {}, CubeState{}};
  cube.placement.pose.translation = {0.0, 0.8, -1.5};
  cube.placement.scale = 0.6;
  SharedObject wall{std::string(kWallId), {}, WallState{}};
  wall.placement.pose.translation = {0.0, 1.5, -3.0};
  s.objects.emplace(cube.id, std::move(cube));
  s.objects.emplace(wall.id, std::move(wall));
  return s;
}

const CubeState* SessionState::cube() const {
  auto it = objects.find(std::string(kCubeId));
  if (it == objects.end()) return nullptr;
  return std::get_if<CubeState>(&it->second.state);
}

const WallState* SessionState::wall() const {
  auto it = objects.find(std::string(kWallId));
  if (it == objects.end()) return nullptr;
  return std::get_if<WallState>(&it->second.state);
}

// ---------------------------------------------------------------------------
// Reducer

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

class Reducer {
 public:
  Reducer(SessionState& state, std::uint64_t seq, const WarningSink& warn)
      : s_(state), seq_(seq), warn_(warn) {}

  void operator()(const op::SetTransform& o) {
    auto it = s_.objects.find(o.object_id);
    if (it == s_.objects.end()) return missing(o.object_id);
    it->second.placement = o.placement;
  }

  void operator()(const op::SetMapping& o) {
    if (auto* cube = cube_state(o.object_id)) cube->mapping = o.mapping;
  }

  void operator()(const op::SetFilter& o) {
    if (auto* cube = cube_state(o.object_id)) cube->filter = o.filter;
  }

  void operator()(const op::SetVizMode& o) {
    if (auto* cube = cube_state(o.object_id)) cube->viz_mode = o.mode;
  }

  void operator()(const op::SelectRow& o) {
    if (auto* cube = cube_state(o.object_id)) cube->selected_row = o.row;
  }

  void operator()(const op::WatchlistAdd& o) {
    if (auto* cube = cube_state(o.object_id)) cube->watchlist.insert(o.individual_id, o.created_at_ms);
  }

  void operator()(const op::WatchlistRemove& o) {
    if (auto* cube = cube_state(o.object_id)) cube->watchlist.erase(o.individual_id);
  }

  void operator()(const op::CreateSnapshot& o) {
    const std::string id = snapshot_id_for_seq(seq_);
    SharedObject obj{id, {}, SnapshotState{o.points, o.face, o.creator, o.created_at_ms}};
    s_.objects.insert_or_assign(id, std::move(obj));
    s_.snapshots.push_back(id);
    if (auto* wall = wall_state()) {
      auto free = std::find(wall->slots.begin(), wall->slots.end(), std::nullopt);
      if (free != wall->slots.end()) {
        *free = id;
      } else {
        wall->slots.emplace_back(id);
      }
    }
  }

  void operator()(const op::DeleteSnapshot& o) {
    auto it = s_.objects.find(o.snapshot_id);
    if (it == s_.objects.end() || it->second.kind() != ObjectKind::Snapshot)
      return missing(o.snapshot_id);
    s_.objects.erase(it);
    std::erase(s_.snapshots, o.snapshot_id);
    if (auto* wall = wall_state()) {
      for (auto& slot : wall->slots) {
        if (slot == o.snapshot_id) slot.reset();
      }
    }
  }

  void operator()(const op::SetUserPose& o) { s_.user_poses.insert_or_assign(o.client_id, o.pose); }

  void operator()(const op::ClearUserPose& o) { s_.user_poses.erase(o.client_id); }

  void operator()(const op::LoadDataset& o) {
    s_.dataset_ref = o.content_hash;
    s_.dataset_columns = o.columns;
    std::vector<std::string> numeric;
    for (const auto& c : o.columns) {
      if (c.kind == ColumnKind::Numeric) numeric.push_back(c.name);
    }
    for (auto& [id, obj] : s_.objects) {
      if (auto* cube = std::get_if<CubeState>(&obj.state)) {
        cube->mapping = default_mapping(numeric);
        cube->filter = FilterState{};
        cube->selected_row.reset();
        cube->watchlist = Watchlist{};
      }
    }
  }

 private:
  void missing(const std::string& id) {
    if (warn_) warn_("seq " + std::to_string(seq_) + ": no object `" + id + "`, op ignored");
  }

  CubeState* cube_state(const std::string& id) {
    auto it = s_.objects.find(id);
    if (it != s_.objects.end()) {
      if (auto* cube = std::get_if<CubeState>(&it->second.state)) return cube;
    }
    missing(id);
    return nullptr;
  }

  WallState* wall_state() {
    auto it = s_.objects.find(std::string(kWallId));
    if (it == s_.objects.end()) return nullptr;
    return std::get_if<WallState>(&it->second.state);
  }

  SessionState& s_;
  std::uint64_t seq_;
  const WarningSink& warn_;
};

}  // namespace

SessionState apply_op(SessionState state, std::uint64_t seq, const OpPayload& op,
                      const WarningSink& warn) {
  if (seq != state.server_seq + 1)
    throw Error(ErrorCode::SequenceGap, "expected seq " + std::to_string(state.server_seq + 1) +
                                            ", got " + std::to_string(seq));
  std::visit(Reducer(state, seq, warn), op);
  state.server_seq = seq;
  return state;
}

// ---------------------------------------------------------------------------
// Validation

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::SchemaViolation, what);
}

bool is_unit(double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; }

bool numeric_in_schema(const SessionState& s, const std::string& name) {
  return std::any_of(s.dataset_columns.begin(), s.dataset_columns.end(), [&](const auto& c) {
    return c.kind == ColumnKind::Numeric && c.name == name;
  });
}

void check_placement(const Placement& p) {
  require(is_finite(p.pose.translation), "non-finite translation");
  require(std::isfinite(p.scale) && p.scale > 0.0, "scale must be positive");
}

void check_pose(const Pose& p) { require(is_finite(p.position), "non-finite pose position"); }

void check_columns(const std::vector<ColumnDescriptor>& cols) {
  int ids = 0;
  int years = 0;
  int regions = 0;
  std::set<std::string> names;
  for (const auto& c : cols) {
    require(!c.name.empty(), "empty column name");
    require(names.insert(c.name).second, "duplicate column `" + c.name + "`");
    ids += c.kind == ColumnKind::Id;
    years += c.kind == ColumnKind::Year;
    regions += c.kind == ColumnKind::Region;
  }
  require(ids == 1 && years == 1 && regions <= 1, "schema needs one id and one year column");
}

}  // namespace

void validate_op(const SessionState& state, const OpPayload& payload) {
  std::visit(
      Overloaded{
          [](const op::SetTransform& o) { check_placement(o.placement); },
          [&](const op::SetMapping& o) {
            for (const std::string* c : {&o.mapping.x, &o.mapping.y, &o.mapping.z,
                                         &o.mapping.color, &o.mapping.size}) {
              require(numeric_in_schema(state, *c), "mapping column `" + *c + "` not numeric");
            }
          },
          [&](const op::SetFilter& o) {
            require(o.filter.year_range.lo <= o.filter.year_range.hi, "year range lo > hi");
            for (const auto& [col, r] : o.filter.numeric_ranges) {
              require(numeric_in_schema(state, col), "filter column `" + col + "` not numeric");
              require(!std::isnan(r.lo) && !std::isnan(r.hi) && r.lo <= r.hi,
                      "range on `" + col + "` has lo > hi");
            }
            if (o.filter.regions) {
              require(std::any_of(state.dataset_columns.begin(), state.dataset_columns.end(),
                                  [](const auto& c) { return c.kind == ColumnKind::Region; }),
                      "region filter without a region column");
            }
          },
          [](const op::SetVizMode&) {},
          [](const op::SelectRow&) {},
          [](const op::WatchlistAdd& o) { require(!o.individual_id.empty(), "empty individual"); },
          [](const op::WatchlistRemove& o) {
            require(!o.individual_id.empty(), "empty individual");
          },
          [](const op::CreateSnapshot& o) {
            for (const auto& p : o.points.get()) {
              require(is_unit(p.u) && is_unit(p.v) && is_unit(p.color) && is_unit(p.size),
                      "snapshot point outside [0, 1]");
            }
          },
          [](const op::DeleteSnapshot& o) { require(!o.snapshot_id.empty(), "empty snapshot id"); },
          [](const op::SetUserPose& o) { check_pose(o.pose); },
          [](const op::ClearUserPose&) {},
          [](const op::LoadDataset& o) {
            require(!o.content_hash.empty(), "empty content hash");
            check_columns(o.columns);
          },
      },
      payload);
}

// ---------------------------------------------------------------------------
// Canonical form and digest

namespace {

class CanonicalWriter {
 public:
  CanonicalWriter& key(std::string_view k) {
    out_ += k;
    out_ += '=';
    return *this;
  }
  CanonicalWriter& num(double v) {
    out_ += format_shortest(v);
    out_ += ';';
    return *this;
  }
  CanonicalWriter& integer(std::int64_t v) {
    out_ += std::to_string(v);
    out_ += ';';
    return *this;
  }
  CanonicalWriter& uinteger(std::uint64_t v) {
    out_ += std::to_string(v);
    out_ += ';';
    return *this;
  }
  // Length-prefixed so that no string content can forge a delimiter.
  CanonicalWriter& str(std::string_view v) {
    out_ += std::to_string(v.size());
    out_ += ':';
    out_ += v;
    out_ += ';';
    return *this;
  }
  CanonicalWriter& newline() {
    out_ += '\n';
    return *this;
  }

  void vec(const Vec3& v) { num(v.x).num(v.y).num(v.z); }
  void quat(const UnitQuaternion& q) { num(q.w()).num(q.x()).num(q.y()).num(q.z()); }
  void pose(const Pose& p) {
    vec(p.position);
    quat(p.orientation);
  }

  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

void write_cube(CanonicalWriter& w, const CubeState& c) {
  const auto& m = c.mapping;
  w.key("mapping").str(m.x).str(m.y).str(m.z).str(m.color).str(m.size).integer(m.traces_enabled);
  w.newline();
  w.key("years").integer(c.filter.year_range.lo).integer(c.filter.year_range.hi).newline();
  for (const auto& [col, r] : c.filter.numeric_ranges) {
    w.key("range").str(col).num(r.lo).num(r.hi).newline();
  }
  if (c.filter.regions) {
    w.key("regions").uinteger(c.filter.regions->size());
    for (const auto& r : *c.filter.regions) w.str(r);
    w.newline();
  }
  w.key("viz").str(to_string(c.viz_mode)).newline();
  if (c.selected_row) w.key("selected").uinteger(*c.selected_row).newline();
  for (const auto& e : c.watchlist.entries()) {
    w.key("watch").str(e.individual_id).integer(e.created_at_ms).newline();
  }
}

void write_wall(CanonicalWriter& w, const WallState& wall) {
  w.key("slots").uinteger(wall.slots.size());
  for (const auto& slot : wall.slots) {
    if (slot) {
      w.str(*slot);
    } else {
      w.str("");
    }
  }
  w.newline();
}

void write_snapshot(CanonicalWriter& w, const SnapshotState& snap) {
  w.key("face").str(to_string(snap.face)).key("creator").str(snap.creator);
  w.key("created").integer(snap.created_at_ms).newline();
  w.key("points").uinteger(snap.points.size());
  for (const auto& p : snap.points.get()) w.num(p.u).num(p.v).num(p.color).num(p.size);
  w.newline();
}

}  // namespace

std::string canonical_text(const SessionState& state) {
  CanonicalWriter w;
  w.key("seq").uinteger(state.server_seq).newline();
  w.key("dataset").str(state.dataset_ref).newline();
  for (const auto& c : state.dataset_columns) {
    w.key("column").str(c.name).str(to_string(c.kind)).newline();
  }
  for (const auto& [id, obj] : state.objects) {
    w.key("object").str(id).str(to_string(obj.kind())).newline();
    w.key("placement");
    w.quat(obj.placement.pose.rotation);
    w.vec(obj.placement.pose.translation);
    w.num(obj.placement.scale).newline();
    std::visit(Overloaded{
                   [&](const CubeState& c) { write_cube(w, c); },
                   [&](const WallState& c) { write_wall(w, c); },
                   [&](const SnapshotState& c) { write_snapshot(w, c); },
               },
               obj.state);
  }
  w.key("snapshots").uinteger(state.snapshots.size());
  for (const auto& id : state.snapshots) w.str(id);
  w.newline();
  for (const auto& [client, pose] : state.user_poses) {
    w.key("pose").str(client);
    w.pose(pose);
    w.newline();
  }
  return w.take();
}

std::uint64_t state_digest(const SessionState& state) { return fnv1a64(canonical_text(state)); }

}  // namespace datacube
