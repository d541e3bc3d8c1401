#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>

#include "datacube/protocol.hpp"

namespace datacube {
namespace {

using Json = nlohmann::ordered_json;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

[[noreturn]] void schema(const std::string& what) {
  throw Error(ErrorCode::SchemaViolation, what);
}

// ---------------------------------------------------------------------------
// Encoding

Json bound(double v) {
  if (v == std::numeric_limits<double>::infinity()) return "inf";
  if (v == -std::numeric_limits<double>::infinity()) return "-inf";
  return v;
}

Json vec(const Vec3& v) { return Json::array({v.x, v.y, v.z}); }
Json quat(const UnitQuaternion& q) { return Json::array({q.w(), q.x(), q.y(), q.z()}); }

Json pose(const Pose& p) {
  Json j;
  j["position"] = vec(p.position);
  j["orientation"] = quat(p.orientation);
  return j;
}

Json placement(const Placement& p) {
  Json j;
  j["rotation"] = quat(p.pose.rotation);
  j["translation"] = vec(p.pose.translation);
  j["scale"] = p.scale;
  return j;
}

Json columns(const std::vector<ColumnDescriptor>& cols) {
  Json arr = Json::array();
  for (const auto& c : cols) arr.push_back(Json::array({c.name, to_string(c.kind)}));
  return arr;
}

Json mapping(const DimensionMapping& m) {
  Json j;
  j["x"] = m.x;
  j["y"] = m.y;
  j["z"] = m.z;
  j["color"] = m.color;
  j["size"] = m.size;
  j["traces"] = m.traces_enabled;
  return j;
}

Json filter(const FilterState& f) {
  Json j;
  Json ranges = Json::array();
  for (const auto& [col, r] : f.numeric_ranges) ranges.push_back(Json::array({col, bound(r.lo), bound(r.hi)}));
  j["ranges"] = std::move(ranges);
  j["years"] = Json::array({f.year_range.lo, f.year_range.hi});
  if (f.regions) {
    j["regions"] = Json(std::vector<std::string>(f.regions->begin(), f.regions->end()));
  } else {
    j["regions"] = nullptr;
  }
  return j;
}

Json points(const FrozenPoints& pts) {
  Json arr = Json::array();
  for (const auto& p : pts.get()) arr.push_back(Json::array({p.u, p.v, p.color, p.size}));
  return arr;
}

Json anchor(const AnchorSet& a) {
  Json arr = Json::array();
  for (const auto& p : a.points) {
    Json e;
    e["label"] = p.label;
    e["position"] = vec(p.position);
    arr.push_back(std::move(e));
  }
  return arr;
}

Json optional_anchor(const std::optional<AnchorSet>& a) { return a ? anchor(*a) : Json(nullptr); }

Json watchlist(const Watchlist& w) {
  Json arr = Json::array();
  for (const auto& e : w.entries()) arr.push_back(Json::array({e.individual_id, e.created_at_ms}));
  return arr;
}

Json object_state(const SharedObject& obj) {
  Json j;
  std::visit(Overloaded{
                 [&](const CubeState& c) {
                   j["mapping"] = mapping(c.mapping);
                   j["filter"] = filter(c.filter);
                   j["viz_mode"] = to_string(c.viz_mode);
                   j["selected_row"] = c.selected_row ? Json(*c.selected_row) : Json(nullptr);
                   j["watchlist"] = watchlist(c.watchlist);
                 },
                 [&](const WallState& w) {
                   Json slots = Json::array();
                   for (const auto& s : w.slots) slots.push_back(s ? Json(*s) : Json(nullptr));
                   j["slots"] = std::move(slots);
                 },
                 [&](const SnapshotState& s) {
                   j["face"] = to_string(s.face);
                   j["creator"] = s.creator;
                   j["created_at"] = s.created_at_ms;
                   j["points"] = points(s.points);
                 },
             },
             obj.state);
  return j;
}

Json state(const SessionState& s) {
  Json j;
  j["server_seq"] = s.server_seq;
  j["dataset_ref"] = s.dataset_ref;
  j["dataset_columns"] = columns(s.dataset_columns);
  Json objects = Json::array();
  for (const auto& [id, obj] : s.objects) {
    Json o;
    o["id"] = id;
    o["kind"] = to_string(obj.kind());
    o["placement"] = placement(obj.placement);
    o["state"] = object_state(obj);
    objects.push_back(std::move(o));
  }
  j["objects"] = std::move(objects);
  j["snapshots"] = s.snapshots;
  Json poses = Json::array();
  for (const auto& [client, p] : s.user_poses) {
    Json e;
    e["client"] = client;
    e["pose"] = pose(p);
    poses.push_back(std::move(e));
  }
  j["user_poses"] = std::move(poses);
  return j;
}

Json op_payload(const OpPayload& payload) {
  Json j;
  j["op"] = op_name(payload);
  std::visit(Overloaded{
                 [&](const op::SetTransform& o) {
                   j["object"] = o.object_id;
                   j["placement"] = placement(o.placement);
                 },
                 [&](const op::SetMapping& o) {
                   j["object"] = o.object_id;
                   j["mapping"] = mapping(o.mapping);
                 },
                 [&](const op::SetFilter& o) {
                   j["object"] = o.object_id;
                   j["filter"] = filter(o.filter);
                 },
                 [&](const op::SetVizMode& o) {
                   j["object"] = o.object_id;
                   j["mode"] = to_string(o.mode);
                 },
                 [&](const op::SelectRow& o) {
                   j["object"] = o.object_id;
                   j["row"] = o.row ? Json(*o.row) : Json(nullptr);
                 },
                 [&](const op::WatchlistAdd& o) {
                   j["object"] = o.object_id;
                   j["individual"] = o.individual_id;
                   j["created_at"] = o.created_at_ms;
                 },
                 [&](const op::WatchlistRemove& o) {
                   j["object"] = o.object_id;
                   j["individual"] = o.individual_id;
                 },
                 [&](const op::CreateSnapshot& o) {
                   j["face"] = to_string(o.face);
                   j["creator"] = o.creator;
                   j["created_at"] = o.created_at_ms;
                   j["points"] = points(o.points);
                 },
                 [&](const op::DeleteSnapshot& o) { j["snapshot"] = o.snapshot_id; },
                 [&](const op::SetUserPose& o) {
                   j["client"] = o.client_id;
                   j["pose"] = pose(o.pose);
                 },
                 [&](const op::ClearUserPose& o) { j["client"] = o.client_id; },
                 [&](const op::LoadDataset& o) {
                   j["content_hash"] = o.content_hash;
                   j["columns"] = columns(o.columns);
                 },
             },
             payload);
  return j;
}

Json payload_json(const Payload& payload) {
  Json j = Json::object();
  std::visit(Overloaded{
                 [&](const msg::JoinRequest& m) {
                   j["version"] = m.version;
                   j["role"] = to_string(m.role);
                 },
                 [&](const msg::Welcome& m) {
                   j["client_id"] = m.client_id;
                   j["session_id"] = m.session_id;
                   j["anchor_needed"] = m.anchor_needed;
                   j["anchor"] = optional_anchor(m.anchor);
                   j["state"] = state(m.state);
                 },
                 [&](const msg::AnchorUpload& m) { j["anchor"] = anchor(m.anchor); },
                 [&](const msg::AnchorInfo& m) {
                   j["anchor"] = optional_anchor(m.anchor);
                   j["anchor_needed"] = m.anchor_needed;
                 },
                 [&](const msg::SubmitOp& m) {
                   j["ref"] = m.ref;
                   j["op"] = op_payload(m.op);
                 },
                 [&](const msg::Update& m) {
                   j["origin"] = m.origin;
                   j["ref"] = m.ref;
                   j["op"] = op_payload(m.op);
                 },
                 [&](const msg::FullState& m) {
                   j["state"] = m.state ? state(*m.state) : Json(nullptr);
                 },
                 [&](const msg::Heartbeat& m) {
                   j["server_seq"] = m.server_seq ? Json(*m.server_seq) : Json(nullptr);
                 },
                 [&](const msg::Leave&) {},
                 [&](const msg::Error& m) {
                   j["code"] = to_string(m.code);
                   j["message"] = m.message;
                   j["ref"] = m.ref ? Json(*m.ref) : Json(nullptr);
                 },
             },
             payload);
  return j;
}

// ---------------------------------------------------------------------------
// Decoding

const Json& field(const Json& j, const char* name) {
  if (!j.is_object()) schema(std::string("expected object holding `") + name + "`");
  auto it = j.find(name);
  if (it == j.end()) schema(std::string("missing field `") + name + "`");
  return *it;
}

std::string get_string(const Json& j, const char* name) {
  const Json& v = field(j, name);
  if (!v.is_string()) schema(std::string("field `") + name + "` must be a string");
  return v.get<std::string>();
}

bool get_bool(const Json& j, const char* name) {
  const Json& v = field(j, name);
  if (!v.is_boolean()) schema(std::string("field `") + name + "` must be a boolean");
  return v.get<bool>();
}

std::uint64_t as_uint(const Json& v, const char* what) {
  if (!v.is_number_unsigned()) {
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return v.get<std::uint64_t>();
    schema(std::string("`") + what + "` must be a nonnegative integer");
  }
  return v.get<std::uint64_t>();
}

std::int64_t as_int(const Json& v, const char* what) {
  if (!v.is_number_integer()) schema(std::string("`") + what + "` must be an integer");
  if (v.is_number_unsigned() &&
      v.get<std::uint64_t>() > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max()))
    schema(std::string("`") + what + "` out of range");
  return v.get<std::int64_t>();
}

double as_finite(const Json& v, const char* what) {
  if (!v.is_number()) schema(std::string("`") + what + "` must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) schema(std::string("`") + what + "` must be finite");
  return d;
}

double as_bound(const Json& v, const char* what) {
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    schema(std::string("`") + what + "` bad bound");
  }
  return as_finite(v, what);
}

const Json& array_of(const Json& v, std::size_t n, const char* what) {
  if (!v.is_array() || (n != 0 && v.size() != n))
    schema(std::string("`") + what + "` must be an array" +
           (n ? " of " + std::to_string(n) : std::string()));
  return v;
}

Vec3 read_vec(const Json& v, const char* what) {
  array_of(v, 3, what);
  return {as_finite(v[0], what), as_finite(v[1], what), as_finite(v[2], what)};
}

UnitQuaternion read_quat(const Json& v, const char* what) {
  array_of(v, 4, what);
  return UnitQuaternion::from_components(as_finite(v[0], what), as_finite(v[1], what),
                                         as_finite(v[2], what), as_finite(v[3], what));
}

Pose read_pose(const Json& j) {
  return Pose{read_vec(field(j, "position"), "position"),
              read_quat(field(j, "orientation"), "orientation")};
}

Placement read_placement(const Json& j) {
  Placement p;
  p.pose.rotation = read_quat(field(j, "rotation"), "rotation");
  p.pose.translation = read_vec(field(j, "translation"), "translation");
  p.scale = as_finite(field(j, "scale"), "scale");
  if (!(p.scale > 0.0)) schema("scale must be positive");
  return p;
}

std::vector<ColumnDescriptor> read_columns(const Json& v) {
  array_of(v, 0, "columns");
  std::vector<ColumnDescriptor> out;
  for (const auto& e : v) {
    array_of(e, 2, "column");
    if (!e[0].is_string() || !e[1].is_string()) schema("column entries are strings");
    auto kind = column_kind_from_string(e[1].get<std::string>());
    if (!kind) schema("unknown column kind");
    out.push_back({e[0].get<std::string>(), *kind});
  }
  return out;
}

DimensionMapping read_mapping(const Json& j) {
  DimensionMapping m;
  m.x = get_string(j, "x");
  m.y = get_string(j, "y");
  m.z = get_string(j, "z");
  m.color = get_string(j, "color");
  m.size = get_string(j, "size");
  m.traces_enabled = get_bool(j, "traces");
  return m;
}

FilterState read_filter(const Json& j) {
  FilterState f;
  for (const auto& r : array_of(field(j, "ranges"), 0, "ranges")) {
    array_of(r, 3, "range");
    if (!r[0].is_string()) schema("range column must be a string");
    NumericRange range{as_bound(r[1], "lo"), as_bound(r[2], "hi")};
    if (range.lo > range.hi) schema("range lo > hi");
    if (!f.numeric_ranges.emplace(r[0].get<std::string>(), range).second)
      schema("duplicate range column");
  }
  const Json& years = array_of(field(j, "years"), 2, "years");
  const auto lo = as_int(years[0], "years");
  const auto hi = as_int(years[1], "years");
  if (lo > hi || lo < std::numeric_limits<int>::min() || hi > std::numeric_limits<int>::max())
    schema("bad year range");
  f.year_range = {static_cast<int>(lo), static_cast<int>(hi)};
  const Json& regions = field(j, "regions");
  if (!regions.is_null()) {
    std::set<std::string> set;
    for (const auto& r : array_of(regions, 0, "regions")) {
      if (!r.is_string()) schema("region must be a string");
      set.insert(r.get<std::string>());
    }
    f.regions = std::move(set);
  }
  return f;
}

VizMode read_viz(const Json& v) {
  if (v == "Scatter") return VizMode::Scatter;
  if (v == "BarChart") return VizMode::BarChart;
  schema("unknown viz mode");
}

CubeFace read_face(const Json& v) {
  if (!v.is_string()) schema("face must be a string");
  auto f = cube_face_from_string(v.get<std::string>());
  if (!f) schema("unknown face");
  return *f;
}

FrozenPoints read_points(const Json& v) {
  array_of(v, 0, "points");
  std::vector<SnapshotPoint> pts;
  pts.reserve(v.size());
  for (const auto& p : v) {
    array_of(p, 4, "point");
    SnapshotPoint sp{as_finite(p[0], "u"), as_finite(p[1], "v"), as_finite(p[2], "color"),
                     as_finite(p[3], "size")};
    for (double c : {sp.u, sp.v, sp.color, sp.size}) {
      if (c < 0.0 || c > 1.0) schema("snapshot point outside [0, 1]");
    }
    pts.push_back(sp);
  }
  return FrozenPoints(std::move(pts));
}

AnchorSet read_anchor(const Json& v) {
  AnchorSet a;
  for (const auto& e : array_of(v, 0, "anchor")) {
    a.points.push_back({get_string(e, "label"), read_vec(field(e, "position"), "position")});
  }
  return a;
}

std::optional<AnchorSet> read_optional_anchor(const Json& v) {
  if (v.is_null()) return std::nullopt;
  return read_anchor(v);
}

Watchlist read_watchlist(const Json& v) {
  Watchlist w;
  for (const auto& e : array_of(v, 0, "watchlist")) {
    array_of(e, 2, "watch entry");
    if (!e[0].is_string()) schema("watch id must be a string");
    if (!w.insert(e[0].get<std::string>(), as_int(e[1], "created_at")))
      schema("duplicate watchlist entry");
  }
  return w;
}

std::optional<std::size_t> read_optional_index(const Json& v, const char* what) {
  if (v.is_null()) return std::nullopt;
  return static_cast<std::size_t>(as_uint(v, what));
}

SharedObject read_object(const Json& j) {
  SharedObject obj;
  obj.id = get_string(j, "id");
  obj.placement = read_placement(field(j, "placement"));
  const std::string kind = get_string(j, "kind");
  const Json& st = field(j, "state");
  if (kind == "DataCube") {
    CubeState c;
    c.mapping = read_mapping(field(st, "mapping"));
    c.filter = read_filter(field(st, "filter"));
    c.viz_mode = read_viz(field(st, "viz_mode"));
    c.selected_row = read_optional_index(field(st, "selected_row"), "selected_row");
    c.watchlist = read_watchlist(field(st, "watchlist"));
    obj.state = std::move(c);
  } else if (kind == "AnalysisWall") {
    WallState w;
    for (const auto& s : array_of(field(st, "slots"), 0, "slots")) {
      if (s.is_null()) {
        w.slots.emplace_back(std::nullopt);
      } else if (s.is_string()) {
        w.slots.emplace_back(s.get<std::string>());
      } else {
        schema("slot must be a string or null");
      }
    }
    obj.state = std::move(w);
  } else if (kind == "Snapshot") {
    SnapshotState s;
    s.face = read_face(field(st, "face"));
    s.creator = get_string(st, "creator");
    s.created_at_ms = as_int(field(st, "created_at"), "created_at");
    s.points = read_points(field(st, "points"));
    obj.state = std::move(s);
  } else {
    schema("unknown object kind `" + kind + "`");
  }
  return obj;
}

SessionState read_state(const Json& j) {
  SessionState s;
  s.server_seq = as_uint(field(j, "server_seq"), "server_seq");
  s.dataset_ref = get_string(j, "dataset_ref");
  s.dataset_columns = read_columns(field(j, "dataset_columns"));
  for (const auto& o : array_of(field(j, "objects"), 0, "objects")) {
    SharedObject obj = read_object(o);
    std::string id = obj.id;
    if (!s.objects.emplace(std::move(id), std::move(obj)).second) schema("duplicate object id");
  }
  for (const auto& id : array_of(field(j, "snapshots"), 0, "snapshots")) {
    if (!id.is_string()) schema("snapshot id must be a string");
    auto it = s.objects.find(id.get<std::string>());
    if (it == s.objects.end() || it->second.kind() != ObjectKind::Snapshot)
      schema("wall lists unknown snapshot");
    s.snapshots.push_back(id.get<std::string>());
  }
  for (const auto& e : array_of(field(j, "user_poses"), 0, "user_poses")) {
    s.user_poses.insert_or_assign(get_string(e, "client"), read_pose(field(e, "pose")));
  }
  return s;
}

OpPayload read_op(const Json& j) {
  const std::string name = get_string(j, "op");
  if (name == "SetTransform")
    return op::SetTransform{get_string(j, "object"), read_placement(field(j, "placement"))};
  if (name == "SetMapping")
    return op::SetMapping{get_string(j, "object"), read_mapping(field(j, "mapping"))};
  if (name == "SetFilter")
    return op::SetFilter{get_string(j, "object"), read_filter(field(j, "filter"))};
  if (name == "SetVizMode")
    return op::SetVizMode{get_string(j, "object"), read_viz(field(j, "mode"))};
  if (name == "SelectRow")
    return op::SelectRow{get_string(j, "object"), read_optional_index(field(j, "row"), "row")};
  if (name == "WatchlistAdd")
    return op::WatchlistAdd{get_string(j, "object"), get_string(j, "individual"),
                            as_int(field(j, "created_at"), "created_at")};
  if (name == "WatchlistRemove")
    return op::WatchlistRemove{get_string(j, "object"), get_string(j, "individual")};
  if (name == "CreateSnapshot")
    return op::CreateSnapshot{read_points(field(j, "points")), read_face(field(j, "face")),
                              get_string(j, "creator"),
                              as_int(field(j, "created_at"), "created_at")};
  if (name == "DeleteSnapshot") return op::DeleteSnapshot{get_string(j, "snapshot")};
  if (name == "SetUserPose")
    return op::SetUserPose{get_string(j, "client"), read_pose(field(j, "pose"))};
  if (name == "ClearUserPose") return op::ClearUserPose{get_string(j, "client")};
  if (name == "LoadDataset")
    return op::LoadDataset{get_string(j, "content_hash"), read_columns(field(j, "columns"))};
  schema("unknown op `" + name + "`");
}

std::optional<std::uint64_t> read_optional_uint(const Json& v, const char* what) {
  if (v.is_null()) return std::nullopt;
  return as_uint(v, what);
}

Role read_role(const Json& v) {
  if (v == "Participant") return Role::Participant;
  if (v == "Observer") return Role::Observer;
  schema("unknown role");
}

Payload read_payload(const std::string& kind, const Json& p) {
  if (kind == "JoinRequest") return msg::JoinRequest{get_string(p, "version"), read_role(field(p, "role"))};
  if (kind == "Welcome")
    return msg::Welcome{get_string(p, "client_id"), get_string(p, "session_id"),
                        get_bool(p, "anchor_needed"), read_optional_anchor(field(p, "anchor")),
                        read_state(field(p, "state"))};
  if (kind == "AnchorUpload") return msg::AnchorUpload{read_anchor(field(p, "anchor"))};
  if (kind == "AnchorInfo")
    return msg::AnchorInfo{read_optional_anchor(field(p, "anchor")), get_bool(p, "anchor_needed")};
  if (kind == "SubmitOp") return msg::SubmitOp{as_uint(field(p, "ref"), "ref"), read_op(field(p, "op"))};
  if (kind == "Update")
    return msg::Update{get_string(p, "origin"), as_uint(field(p, "ref"), "ref"),
                       read_op(field(p, "op"))};
  if (kind == "FullState") {
    const Json& st = field(p, "state");
    return msg::FullState{st.is_null() ? std::nullopt : std::optional(read_state(st))};
  }
  if (kind == "Heartbeat")
    return msg::Heartbeat{read_optional_uint(field(p, "server_seq"), "server_seq")};
  if (kind == "Leave") return msg::Leave{};
  if (kind == "Error") {
    auto code = error_code_from_string(get_string(p, "code"));
    if (!code) schema("unknown error code");
    return msg::Error{*code, get_string(p, "message"), read_optional_uint(field(p, "ref"), "ref")};
  }
  throw Error(ErrorCode::UnknownKind, "message kind `" + kind + "`");
}

std::uint32_t read_be32(std::string_view bytes) {
  return (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[0])) << 24) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[1])) << 16) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[2])) << 8) |
         static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[3]));
}

}  // namespace

std::string encode_body(const Envelope& envelope) {
  Json j;
  j["kind"] = to_string(envelope.kind());
  j["sender"] = envelope.sender;
  if (envelope.seq) j["seq"] = *envelope.seq;
  j["payload"] = payload_json(envelope.payload);
  return j.dump();
}

Envelope decode_body(std::string_view body) {
  Json j;
  try {
    j = Json::parse(body.begin(), body.end());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedFrame, e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::MalformedFrame, "body is not an object");
  try {
    Envelope env;
    const std::string kind = get_string(j, "kind");
    static constexpr std::array<std::string_view, 10> kKinds{"JoinRequest", "Welcome",  "AnchorUpload", "AnchorInfo",
                                                             "SubmitOp",    "Update",   "FullState",    "Heartbeat",
                                                             "Leave",       "Error"};
    if (std::find(kKinds.begin(), kKinds.end(), kind) == kKinds.end())
      throw Error(ErrorCode::UnknownKind, "message kind `" + kind + "`");
    env.sender = get_string(j, "sender");
    if (auto it = j.find("seq"); it != j.end()) env.seq = as_uint(*it, "seq");
    env.payload = read_payload(kind, field(j, "payload"));
    return env;
  } catch (const nlohmann::json::exception& e) {
    schema(e.what());
  }
}

std::string encode(const Envelope& envelope) {
  const std::string body = encode_body(envelope);
  if (body.size() > kMaxFrameBytes)
    throw Error(ErrorCode::FrameTooLarge, std::to_string(body.size()) + " bytes");
  const auto n = static_cast<std::uint32_t>(body.size());
  std::string frame;
  frame.reserve(4 + body.size());
  frame.push_back(static_cast<char>((n >> 24) & 0xFF));
  frame.push_back(static_cast<char>((n >> 16) & 0xFF));
  frame.push_back(static_cast<char>((n >> 8) & 0xFF));
  frame.push_back(static_cast<char>(n & 0xFF));
  frame += body;
  return frame;
}

Envelope decode(std::string_view frame) {
  if (frame.size() < 4) throw Error(ErrorCode::MalformedFrame, "frame shorter than its header");
  const std::uint32_t n = read_be32(frame);
  if (n > kMaxFrameBytes) throw Error(ErrorCode::FrameTooLarge, std::to_string(n) + " bytes");
  if (frame.size() - 4 != n)
    throw Error(ErrorCode::MalformedFrame, "length says " + std::to_string(n) + ", body has " +
                                               std::to_string(frame.size() - 4));
  return decode_body(frame.substr(4));
}

void FrameDecoder::feed(std::string_view bytes) { buffer_.append(bytes); }

std::optional<Envelope> FrameDecoder::next() {
  if (buffer_.size() < 4) return std::nullopt;
  const std::uint32_t n = read_be32(buffer_);
  if (n > kMaxFrameBytes) throw Error(ErrorCode::FrameTooLarge, std::to_string(n) + " bytes");
  if (buffer_.size() < 4 + static_cast<std::size_t>(n)) return std::nullopt;
  std::string body = buffer_.substr(4, n);
  buffer_.erase(0, 4 + static_cast<std::size_t>(n));
  return decode_body(body);
}

}  // namespace datacube
