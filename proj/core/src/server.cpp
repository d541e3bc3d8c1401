#include "datacube/server.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <system_error>

#include "datacube/numfmt.hpp"

namespace datacube {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

// Numeric part of "c<N>", for join-order comparisons.
std::uint64_t client_number(const std::string& id) {
  std::uint64_t n = 0;
  if (id.size() > 1) std::from_chars(id.data() + 1, id.data() + id.size(), n);
  return n;
}

}  // namespace

SessionServer::SessionServer(ServerConfig config, const Clock& clock)
    : config_(std::move(config)), clock_(clock) {
  if (config_.capacity == 0) throw Error(ErrorCode::BadConfig, "capacity must be positive");
  if (config_.op_log_capacity == 0) config_.op_log_capacity = 1;
}

std::size_t SessionServer::participant_count() const {
  return static_cast<std::size_t>(std::count_if(clients_.begin(), clients_.end(), [](const auto& kv) {
    return kv.second.role == Role::Participant;
  }));
}

std::size_t SessionServer::observer_count() const { return clients_.size() - participant_count(); }

ClientRecord* SessionServer::client_for(ConnectionId conn) {
  auto it = connection_clients_.find(conn);
  if (it == connection_clients_.end()) return nullptr;
  auto c = clients_.find(it->second);
  return c == clients_.end() ? nullptr : &c->second;
}

void SessionServer::send(ConnectionId conn, Payload payload, std::optional<std::uint64_t> seq) {
  outbound_.push_back(Outbound{conn, Envelope{std::string(kServerSender), seq, std::move(payload)}});
}

void SessionServer::send_error(ConnectionId conn, ErrorCode code, std::string message,
                               std::optional<std::uint64_t> ref) {
  send(conn, msg::Error{code, std::move(message), ref});
}

void SessionServer::on_connect(ConnectionId) {}

void SessionServer::on_disconnect(ConnectionId connection) {
  auto it = connection_clients_.find(connection);
  if (it == connection_clients_.end()) return;
  remove_client(std::string(it->second), false);
}

void SessionServer::on_malformed(ConnectionId connection, const Error& error) {
  send_error(connection, error.code(), error.detail());
}

void SessionServer::on_envelope(ConnectionId connection, const Envelope& env) {
  const std::int64_t now = clock_.now_ms();
  if (const auto* join = std::get_if<msg::JoinRequest>(&env.payload)) {
    if (client_for(connection) != nullptr) {
      send_error(connection, ErrorCode::SchemaViolation, "connection already joined");
      return;
    }
    handle_join(connection, env, *join);
    return;
  }

  ClientRecord* client = client_for(connection);
  if (client == nullptr) {
    std::optional<std::uint64_t> ref;
    if (const auto* s = std::get_if<msg::SubmitOp>(&env.payload)) ref = s->ref;
    send_error(connection, ErrorCode::NotJoined, "join before sending " +
                                                     std::string(to_string(env.kind())),
               ref);
    return;
  }
  client->last_heard_ms = now;

  std::visit(Overloaded{
                 [&](const msg::AnchorUpload& up) { handle_anchor_upload(*client, up); },
                 [&](const msg::SubmitOp& s) { handle_submit(*client, s); },
                 [&](const msg::FullState& f) {
                   if (f.state) {
                     send_error(connection, ErrorCode::SchemaViolation,
                                "clients may only request full state");
                     return;
                   }
                   send(connection, msg::FullState{state_}, state_.server_seq);
                 },
                 [&](const msg::Heartbeat&) {
                   send(connection, msg::Heartbeat{state_.server_seq});
                 },
                 [&](const msg::Leave&) {
                   remove_client(std::string(client->client_id), true);
                 },
                 [&](const auto& other) {
                   (void)other;
                   send_error(connection, ErrorCode::SchemaViolation,
                              std::string(to_string(env.kind())) + " is server-to-client only");
                 },
             },
             env.payload);
}

void SessionServer::handle_join(ConnectionId conn, const Envelope&, const msg::JoinRequest& req) {
  if (req.version != kProtocolVersion) {
    send_error(conn, ErrorCode::VersionMismatch,
               "server speaks " + std::string(kProtocolVersion) + ", client " + req.version);
    return;
  }
  if (req.role == Role::Participant && participant_count() >= config_.capacity) {
    send_error(conn, ErrorCode::SessionFull,
               "session has " + std::to_string(config_.capacity) + " participants");
    return;
  }
  ClientRecord rec;
  rec.client_id = "c" + std::to_string(next_client_number_++);
  rec.connection = conn;
  rec.role = req.role;
  rec.last_heard_ms = clock_.now_ms();

  msg::Welcome welcome;
  welcome.client_id = rec.client_id;
  welcome.session_id = config_.session_id;
  welcome.anchor = anchor_;
  if (req.role == Role::Participant && !anchor_ && !anchor_definer_) {
    anchor_definer_ = rec.client_id;
    welcome.anchor_needed = true;
  }
  welcome.state = state_;

  connection_clients_[conn] = rec.client_id;
  clients_.emplace(rec.client_id, rec);
  send(conn, std::move(welcome), state_.server_seq);
}

void SessionServer::handle_anchor_upload(ClientRecord& client, const msg::AnchorUpload& up) {
  if (anchor_) {
    send_error(client.connection, ErrorCode::AnchorAlreadySet, "session anchor is immutable");
    return;
  }
  if (anchor_definer_ != client.client_id) {
    send_error(client.connection, ErrorCode::SchemaViolation,
               "anchor is defined by " + anchor_definer_.value_or("the first participant"));
    return;
  }
  try {
    validate_anchors(up.anchor);
  } catch (const Error& e) {
    send_error(client.connection, e.code(), e.detail());
    return;
  }
  anchor_ = up.anchor;
  anchor_definer_.reset();
  for (const auto& [id, c] : clients_) send(c.connection, msg::AnchorInfo{anchor_, false});
}

void SessionServer::handle_submit(ClientRecord& client, const msg::SubmitOp& submit) {
  const ConnectionId conn = client.connection;
  const std::uint64_t ref = submit.ref;
  OpPayload op = submit.op;

  if (client.role == Role::Observer && !std::holds_alternative<op::SetUserPose>(op)) {
    send_error(conn, ErrorCode::ObserverWriteDenied,
               "observers may only publish their pose, not " + std::string(op_name(op)), ref);
    return;
  }
  if (std::holds_alternative<op::ClearUserPose>(op)) {
    send_error(conn, ErrorCode::SchemaViolation, "ClearUserPose is server-originated", ref);
    return;
  }
  try {
    validate_op(state_, op);
    const Dataset* loaded = loaded_dataset();
    if (const auto* load = std::get_if<op::LoadDataset>(&op)) {
      const Dataset* ds = dataset_for(load->content_hash);
      if (ds == nullptr) {
        throw Error(ErrorCode::SchemaViolation,
                    "dataset " + load->content_hash + " is not in server storage");
      }
      if (ds->columns() != load->columns) {
        throw Error(ErrorCode::SchemaViolation, "columns do not match stored dataset");
      }
    } else if (const auto* sel = std::get_if<op::SelectRow>(&op)) {
      if (sel->row && (loaded == nullptr || *sel->row >= loaded->size())) {
        throw Error(ErrorCode::IndexOutOfRange, "row " + std::to_string(*sel->row));
      }
    } else if (const auto* add = std::get_if<op::WatchlistAdd>(&op)) {
      if (loaded == nullptr || !loaded->has_individual(add->individual_id)) {
        throw Error(ErrorCode::UnknownIndividual, add->individual_id);
      }
    }
  } catch (const Error& e) {
    send_error(conn, e.code(), e.detail(), ref);
    return;
  }

  const std::int64_t now = clock_.now_ms();
  if (auto* add = std::get_if<op::WatchlistAdd>(&op)) add->created_at_ms = now;
  if (auto* snap = std::get_if<op::CreateSnapshot>(&op)) {
    snap->creator = client.client_id;
    snap->created_at_ms = now;
  }
  if (auto* pose = std::get_if<op::SetUserPose>(&op)) {
    pose->client_id = client.client_id;
    auto last = last_pose_ms_.find(client.client_id);
    if (last != last_pose_ms_.end() && now - last->second < config_.pose_min_interval_ms) {
      pending_poses_[client.client_id] = PendingPose{ref, std::move(*pose)};
      return;
    }
    pending_poses_.erase(client.client_id);
    last_pose_ms_[client.client_id] = now;
  }
  order(client.client_id, ref, std::move(op));
}

void SessionServer::order(std::string origin, std::uint64_t ref, OpPayload op) {
  const std::uint64_t seq = state_.server_seq + 1;
  state_ = apply_op(std::move(state_), seq, op,
                    [this](std::string_view w) { warnings_.emplace_back(w); });
  op_log_.push_back(LoggedOp{seq, origin, op});
  while (op_log_.size() > config_.op_log_capacity) op_log_.pop_front();
  for (const auto& [id, c] : clients_) {
    send(c.connection, msg::Update{origin, ref, op}, seq);
  }
}

std::uint64_t SessionServer::submit_server_op(OpPayload op) {
  validate_op(state_, op);
  order(std::string(kServerSender), 0, std::move(op));
  return state_.server_seq;
}

void SessionServer::remove_client(const std::string& client_id, bool close_connection) {
  auto it = clients_.find(client_id);
  if (it == clients_.end()) return;
  const ClientRecord rec = it->second;
  clients_.erase(it);
  connection_clients_.erase(rec.connection);
  pending_poses_.erase(client_id);
  last_pose_ms_.erase(client_id);
  if (close_connection) closes_.push_back(rec.connection);

  if (state_.user_poses.count(client_id) != 0) {
    order(std::string(kServerSender), 0, op::ClearUserPose{client_id});
  }
  if (anchor_definer_ == client_id) {
    anchor_definer_.reset();
    const ClientRecord* next = nullptr;
    for (const auto& [id, c] : clients_) {
      if (c.role != Role::Participant) continue;
      if (next == nullptr || client_number(c.client_id) < client_number(next->client_id)) {
        next = &c;
      }
    }
    if (next != nullptr) {
      anchor_definer_ = next->client_id;
      send(next->connection, msg::AnchorInfo{std::nullopt, true});
    }
  }
}

void SessionServer::flush_poses(bool force) {
  const std::int64_t now = clock_.now_ms();
  std::vector<std::string> ready;
  for (const auto& [id, p] : pending_poses_) {
    auto last = last_pose_ms_.find(id);
    if (force || last == last_pose_ms_.end() || now - last->second >= config_.pose_min_interval_ms) {
      ready.push_back(id);
    }
  }
  for (const auto& id : ready) {
    PendingPose p = std::move(pending_poses_.at(id));
    pending_poses_.erase(id);
    last_pose_ms_[id] = now;
    order(id, p.ref, std::move(p.op));
  }
}

void SessionServer::tick() {
  flush_poses(false);
  heartbeat_sweep(clock_.now_ms());
}

std::vector<std::string> SessionServer::heartbeat_sweep(std::int64_t now_ms) {
  std::vector<std::string> expired;
  for (const auto& [id, c] : clients_) {
    if (now_ms - c.last_heard_ms > config_.heartbeat_timeout_ms) expired.push_back(id);
  }
  for (const auto& id : expired) remove_client(id, true);
  return expired;
}

std::vector<Outbound> SessionServer::drain_outbound() { return std::exchange(outbound_, {}); }

std::vector<ConnectionId> SessionServer::drain_closes() { return std::exchange(closes_, {}); }

std::optional<std::string> SessionServer::discovery_response(std::string_view datagram) const {
  if (datagram != kDiscoveryProbe) return std::nullopt;
  return std::string(kDiscoveryReplyPrefix) + std::to_string(config_.advertised_port) + ";" +
         config_.session_id;
}

void SessionServer::register_dataset(Dataset dataset) {
  std::string hash = content_hash(dataset);
  datasets_.insert_or_assign(std::move(hash), std::move(dataset));
}

const Dataset* SessionServer::dataset_for(std::string_view content_hash) const {
  auto it = datasets_.find(std::string(content_hash));
  return it == datasets_.end() ? nullptr : &it->second;
}

const Dataset* SessionServer::loaded_dataset() const {
  if (state_.dataset_ref.empty()) return nullptr;
  return dataset_for(state_.dataset_ref);
}

// ---------------------------------------------------------------------------
// Artifacts

std::string snapshot_file_text(const std::string& snapshot_id, const SnapshotState& snapshot) {
  std::string out = "DATACUBE-SNAPSHOT 1\n";
  out += "id " + snapshot_id + "\n";
  out += "face " + to_string(snapshot.face) + "\n";
  out += "creator " + snapshot.creator + "\n";
  out += "created_at_ms " + std::to_string(snapshot.created_at_ms) + "\n";
  out += "points " + std::to_string(snapshot.points.size()) + "\n";
  out += "u,v,color,size\n";
  for (const auto& p : snapshot.points.get()) {
    out += format_shortest(p.u) + "," + format_shortest(p.v) + "," + format_shortest(p.color) +
           "," + format_shortest(p.size) + "\n";
  }
  return out;
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::StorageUnavailable, "cannot open " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.close();
  if (!out) throw Error(ErrorCode::StorageUnavailable, "cannot write " + path.string());
}

}  // namespace

std::vector<std::filesystem::path> persist_artifacts(const std::filesystem::path& data_dir,
                                                     const std::string& session_id,
                                                     const SessionState& state,
                                                     const Dataset* dataset) {
  namespace fs = std::filesystem;
  if (dataset == nullptr || state.dataset_ref.empty()) {
    throw Error(ErrorCode::NoDatasetLoaded, "nothing to persist without a dataset");
  }
  if (session_id.empty() || session_id.find_first_of("/\\") != std::string::npos ||
      session_id == "." || session_id == "..") {
    throw Error(ErrorCode::StorageUnavailable, "unusable session id `" + session_id + "`");
  }
  const fs::path root = data_dir / session_id;
  const fs::path snap_dir = root / "snapshots";
  std::error_code ec;
  fs::create_directories(snap_dir, ec);
  if (ec) throw Error(ErrorCode::StorageUnavailable, snap_dir.string() + ": " + ec.message());

  std::set<std::string> wanted;
  for (const auto& id : state.snapshots) wanted.insert(id + ".snap");
  for (auto it = fs::directory_iterator(snap_dir, ec); !ec && it != fs::directory_iterator();
       it.increment(ec)) {
    const auto name = it->path().filename().string();
    if (it->path().extension() == ".snap" && wanted.count(name) == 0) fs::remove(it->path(), ec);
  }
  if (ec) throw Error(ErrorCode::StorageUnavailable, snap_dir.string() + ": " + ec.message());

  std::vector<fs::path> written;
  for (const auto& id : state.snapshots) {
    auto obj = state.objects.find(id);
    if (obj == state.objects.end()) continue;
    const auto* snap = std::get_if<SnapshotState>(&obj->second.state);
    if (snap == nullptr) continue;
    fs::path p = snap_dir / (id + ".snap");
    write_file(p, snapshot_file_text(id, *snap));
    written.push_back(std::move(p));
  }
  const CubeState* cube = state.cube();
  fs::path wl = root / "watchlist.csv";
  write_file(wl, watchlist_export(cube != nullptr ? cube->watchlist : Watchlist{}, *dataset));
  written.push_back(std::move(wl));
  return written;
}

}  // namespace datacube
