#include "datacube/scenario.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <memory>
#include <numbers>
#include <random>
#include <set>

#include "datacube/numfmt.hpp"
#include "datacube/synthetic.hpp"

namespace datacube {

// ---------------------------------------------------------------------------
// Parsing

namespace {

[[noreturn]] void parse_error(std::size_t line, const std::string& what) {
  throw Error(ErrorCode::ScenarioParseError, "line " + std::to_string(line) + ": " + what);
}

std::vector<std::string> split_words(std::string_view line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    if (j > i) out.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

template <class T>
T parse_number(const std::string& word, std::size_t line, const char* what) {
  T value{};
  auto [ptr, ec] = std::from_chars(word.data(), word.data() + word.size(), value);
  if (ec != std::errc{} || ptr != word.data() + word.size()) {
    parse_error(line, std::string("bad ") + what + " `" + word + "`");
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(value)) parse_error(line, std::string("non-finite ") + what);
  }
  return value;
}

std::int64_t parse_ms(const std::string& w, std::size_t line) {
  const auto v = parse_number<std::int64_t>(w, line, "time");
  if (v < 0) parse_error(line, "negative time");
  return v;
}

void expect_args(const std::vector<std::string>& words, std::size_t min, std::size_t max,
                 std::size_t line) {
  const std::size_t n = words.size() - 1;
  if (n < min || n > max) {
    parse_error(line, "`" + words[0] + "` takes " +
                          (min == max ? std::to_string(min)
                                      : std::to_string(min) + ".." + std::to_string(max)) +
                          " arguments");
  }
}

}  // namespace

void Scenario::validate() const {
  if (participants + observers == 0) throw Error(ErrorCode::ScenarioParseError, "no bots");
  if (capacity == 0) throw Error(ErrorCode::ScenarioParseError, "capacity must be positive");
  if (languages.empty()) throw Error(ErrorCode::ScenarioParseError, "no languages");
  if (op_interval_ms <= 0) throw Error(ErrorCode::ScenarioParseError, "op interval must be positive");
  if (dataset_individuals == 0 || dataset_years == 0) {
    throw Error(ErrorCode::ScenarioParseError, "dataset must be nonempty");
  }
  try {
    net.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::ScenarioParseError, e.detail());
  }
  for (const auto& d : net.disconnects) {
    if (d.client >= bot_count()) {
      throw Error(ErrorCode::ScenarioParseError, "disconnect names unknown bot " + std::to_string(d.client));
    }
  }
  for (const auto& e : bot_events) {
    if (e.bot >= bot_count()) {
      throw Error(ErrorCode::ScenarioParseError, "event names unknown bot " + std::to_string(e.bot));
    }
  }
  for (const auto& op : script) {
    if (op.bot >= bot_count()) parse_error(op.line, "unknown bot " + std::to_string(op.bot));
  }
  for (const auto& [bot, seq] : corruptions) {
    if (bot >= bot_count()) {
      throw Error(ErrorCode::ScenarioParseError, "corrupt names unknown bot " + std::to_string(bot));
    }
  }
}

Scenario parse_scenario(std::string_view text) {
  Scenario sc;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const auto w = split_words(line);
    if (w.empty()) continue;
    const std::string& d = w[0];
    const std::size_t L = line_no;
    auto count = [&](std::size_t i) { return parse_number<std::size_t>(w[i], L, "count"); };

    if (d == "session") {
      expect_args(w, 1, 1, L);
      sc.session_id = w[1];
    } else if (d == "participants") {
      expect_args(w, 1, 1, L);
      sc.participants = count(1);
    } else if (d == "observers") {
      expect_args(w, 1, 1, L);
      sc.observers = count(1);
    } else if (d == "capacity") {
      expect_args(w, 1, 1, L);
      sc.capacity = count(1);
    } else if (d == "seed") {
      expect_args(w, 1, 1, L);
      sc.net.seed = parse_number<std::uint64_t>(w[1], L, "seed");
    } else if (d == "languages") {
      expect_args(w, 1, 64, L);
      sc.languages.assign(w.begin() + 1, w.end());
      for (const auto& lang : sc.languages) {
        if (!is_language_code(lang)) parse_error(L, "bad language `" + lang + "`");
      }
    } else if (d == "latency_ms") {
      expect_args(w, 2, 2, L);
      sc.net.latency_min_ms = parse_ms(w[1], L);
      sc.net.latency_max_ms = parse_ms(w[2], L);
    } else if (d == "drop_probability") {
      expect_args(w, 1, 1, L);
      sc.net.drop_probability = parse_number<double>(w[1], L, "probability");
    } else if (d == "drop_window_ms") {
      expect_args(w, 1, 1, L);
      sc.net.drop_window_ms = parse_ms(w[1], L);
    } else if (d == "dataset") {
      expect_args(w, 2, 2, L);
      sc.dataset_individuals = count(1);
      sc.dataset_years = count(2);
    } else if (d == "random_ops") {
      expect_args(w, 1, 1, L);
      sc.random_ops = count(1);
    } else if (d == "op_interval_ms") {
      expect_args(w, 1, 1, L);
      sc.op_interval_ms = parse_ms(w[1], L);
    } else if (d == "ops_start_ms") {
      expect_args(w, 1, 1, L);
      sc.ops_start_ms = parse_ms(w[1], L);
    } else if (d == "join_stagger_ms") {
      expect_args(w, 1, 1, L);
      sc.join_stagger_ms = parse_ms(w[1], L);
    } else if (d == "settle_ms") {
      expect_args(w, 1, 1, L);
      sc.settle_ms = parse_ms(w[1], L);
    } else if (d == "max_time_ms") {
      expect_args(w, 1, 1, L);
      sc.max_time_ms = parse_ms(w[1], L);
    } else if (d == "offsets") {
      expect_args(w, 1, 1, L);
      if (w[1] != "random" && w[1] != "none") parse_error(L, "offsets must be random or none");
      sc.random_offsets = w[1] == "random";
    } else if (d == "anchor_noise_m") {
      expect_args(w, 1, 1, L);
      sc.anchor_noise_m = parse_number<double>(w[1], L, "noise");
      if (sc.anchor_noise_m < 0) parse_error(L, "negative noise");
    } else if (d == "join" || d == "leave" || d == "rejoin") {
      expect_args(w, 2, 2, L);
      BotEvent ev;
      ev.kind = d == "join" ? BotEvent::Kind::Join
                            : (d == "leave" ? BotEvent::Kind::Leave : BotEvent::Kind::Rejoin);
      ev.bot = count(1);
      ev.at_ms = parse_ms(w[2], L);
      sc.bot_events.push_back(ev);
    } else if (d == "disconnect") {
      expect_args(w, 3, 4, L);
      DisconnectEvent ev;
      ev.client = count(1);
      ev.at_ms = parse_ms(w[2], L);
      ev.duration_ms = parse_ms(w[3], L);
      if (w.size() == 5) {
        if (w[4] != "silent") parse_error(L, "expected `silent`");
        ev.silent = true;
      }
      sc.net.disconnects.push_back(ev);
    } else if (d == "corrupt") {
      expect_args(w, 2, 2, L);
      sc.corruptions.emplace_back(count(1), parse_number<std::uint64_t>(w[2], L, "seq"));
    } else if (d == "op") {
      if (w.size() < 4) parse_error(L, "`op` needs <at_ms> <bot> <kind>");
      ScriptedOp op;
      op.at_ms = parse_ms(w[1], L);
      op.bot = count(2);
      op.kind = w[3];
      op.args.assign(w.begin() + 4, w.end());
      op.line = L;
      static const std::set<std::string> kKinds{
          "move",          "mapping", "filter-year", "filter-range", "filter-regions",
          "filter-clear",  "viz",     "select",      "watch",        "unwatch",
          "snapshot",      "delete",  "pose"};
      if (kKinds.count(op.kind) == 0) parse_error(L, "unknown op kind `" + op.kind + "`");
      sc.script.push_back(std::move(op));
    } else {
      parse_error(L, "unknown directive `" + d + "`");
    }
  }
  sc.validate();
  return sc;
}

// ---------------------------------------------------------------------------
// Running

namespace {

constexpr double kPi = std::numbers::pi;

struct Rng {
  std::mt19937_64& engine;
  double uniform() { return unit_double(engine()); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::size_t index(std::size_t n) {
    return std::min(n - 1, static_cast<std::size_t>(uniform() * static_cast<double>(n)));
  }
  bool chance(double p) { return uniform() < p; }
  UnitQuaternion rotation(double max_angle) {
    const double z = uniform(-1.0, 1.0);
    const double phi = uniform(0.0, 2.0 * kPi);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    return UnitQuaternion::from_axis_angle({r * std::cos(phi), r * std::sin(phi), z},
                                           uniform(0.0, max_angle));
  }
};

struct Bot {
  std::size_t index = 0;
  std::string name;
  Role role = Role::Participant;
  std::string language;
  std::shared_ptr<SimulatedAnchorSensor> sensor;
  std::unique_ptr<SessionClient> client;
  std::size_t sim_index = 0;
  bool started = false;
  bool left = false;
  std::size_t submitted = 0;
  std::vector<std::uint64_t> refs;
  std::string label;
};

Placement random_placement(Rng& rng) {
  Placement p;
  p.pose.rotation = rng.rotation(kPi);
  p.pose.translation = {rng.uniform(-1.0, 1.0), rng.uniform(0.5, 1.8), rng.uniform(-2.5, -0.5)};
  p.scale = rng.uniform(0.3, 1.0);
  return p;
}

const std::vector<std::string>& mapping_pool(const Dataset& ds) { return ds.numeric_columns(); }

OpPayload snapshot_op(const SessionClient& client, const Dataset& ds,
                      const std::optional<CubeFace>& forced) {
  const SessionState& rep = client.replica();
  const CubeState* cube = rep.cube();
  const auto& cube_obj = rep.objects.at(std::string(kCubeId));
  RowSet visible;
  try {
    visible = apply_filters(ds, cube->filter);
  } catch (const Error&) {
    visible = all_rows(ds);
  }
  const auto points = project_points(ds, cube->mapping, visible);
  CubeFace face{Axis::Z, 1};
  if (forced) {
    face = *forced;
  } else {
    const Vec3 head = client.to_session(client.head_pose().position);
    const Vec3 dir = cube_obj.placement.pose.translation - head;
    if (norm(dir) > 1e-9) face = select_face(dir * (1.0 / norm(dir)), cube_obj.placement.pose.rotation);
  }
  return op::CreateSnapshot{FrozenPoints(project_snapshot(points, face)), face, "", 0};
}

Pose random_head_pose(Rng& rng) {
  Pose p;
  const double angle = rng.uniform(0.0, 2.0 * kPi);
  const double radius = rng.uniform(0.8, 2.0);
  p.position = {radius * std::sin(angle), rng.uniform(1.4, 1.9), -1.5 + radius * std::cos(angle)};
  p.orientation = UnitQuaternion::from_axis_angle(kUp, angle + rng.uniform(-0.3, 0.3));
  return p;
}

OpPayload random_op(SessionClient& client, const Dataset& ds, Rng& rng) {
  const SessionState& rep = client.replica();
  const CubeState* cube = rep.cube();
  const double r = rng.uniform();
  const auto& cols = mapping_pool(ds);

  if (client.config().role == Role::Observer || r < 0.22) {
    client.set_head_pose(random_head_pose(rng));
    const Pose& h = client.head_pose();
    return op::SetUserPose{"", Pose{client.to_session(h.position),
                                    client.alignment().rotation * h.orientation}};
  }
  if (r < 0.40) {
    std::string target(kCubeId);
    const double t = rng.uniform();
    if (t < 0.2) {
      target = std::string(kWallId);
    } else if (t < 0.35 && !rep.snapshots.empty()) {
      target = rep.snapshots[rng.index(rep.snapshots.size())];
    } else if (t < 0.38) {
      target = "snapshot-0";  // never exists
    }
    Placement local = random_placement(rng);
    local.pose = client.to_session(local.pose);
    return op::SetTransform{target, local};
  }
  if (r < 0.48) {
    DimensionMapping m;
    m.x = cols[rng.index(cols.size())];
    m.y = cols[rng.index(cols.size())];
    m.z = cols[rng.index(cols.size())];
    m.color = cols[rng.index(cols.size())];
    m.size = cols[rng.index(cols.size())];
    m.traces_enabled = rng.chance(0.5);
    return op::SetMapping{std::string(kCubeId), m};
  }
  if (r < 0.58) {
    FilterState f;
    const auto& rows = ds.rows();
    int ymin = kMaxYear, ymax = kMinYear;
    for (const auto& rec : rows) {
      ymin = std::min(ymin, rec.year);
      ymax = std::max(ymax, rec.year);
    }
    if (rng.chance(0.6)) {
      const int a = ymin + static_cast<int>(rng.index(static_cast<std::size_t>(ymax - ymin + 1)));
      const int b = ymin + static_cast<int>(rng.index(static_cast<std::size_t>(ymax - ymin + 1)));
      f.year_range = {std::min(a, b), std::max(a, b)};
    }
    if (rng.chance(0.5)) {
      const std::string& col = cols[rng.index(cols.size())];
      const std::size_t ci = ds.require_numeric(col);
      const double a = rows[rng.index(rows.size())].values[ci];
      const double b = rows[rng.index(rows.size())].values[ci];
      f.numeric_ranges[col] = NumericRange{std::min(a, b), std::max(a, b)};
      if (rng.chance(0.05)) f.numeric_ranges[col] = NumericRange{std::max(a, b) + 1.0, std::min(a, b)};
    }
    if (ds.has_region() && rng.chance(0.3)) {
      std::set<std::string> all;
      for (const auto& rec : rows) all.insert(*rec.region);
      std::set<std::string> pick;
      for (const auto& reg : all) {
        if (rng.chance(0.5)) pick.insert(reg);
      }
      f.regions = pick;
    }
    return op::SetFilter{std::string(kCubeId), f};
  }
  if (r < 0.63) {
    return op::SetVizMode{std::string(kCubeId), rng.chance(0.5) ? VizMode::Scatter : VizMode::BarChart};
  }
  if (r < 0.71) {
    std::optional<std::size_t> row;
    if (rng.chance(0.85)) row = rng.index(ds.size());
    return op::SelectRow{std::string(kCubeId), row};
  }
  if (r < 0.80) {
    const auto& ids = ds.individuals();
    auto it = ids.begin();
    std::advance(it, static_cast<std::ptrdiff_t>(rng.index(ids.size())));
    return op::WatchlistAdd{std::string(kCubeId), it->first, 0};
  }
  if (r < 0.85) {
    std::string id;
    if (cube != nullptr && !cube->watchlist.entries().empty() && rng.chance(0.8)) {
      const auto& e = cube->watchlist.entries();
      id = e[rng.index(e.size())].individual_id;
    } else {
      auto it = ds.individuals().begin();
      std::advance(it, static_cast<std::ptrdiff_t>(rng.index(ds.individuals().size())));
      id = it->first;
    }
    return op::WatchlistRemove{std::string(kCubeId), id};
  }
  if (r < 0.93) return snapshot_op(client, ds, std::nullopt);
  if (!rep.snapshots.empty()) {
    return op::DeleteSnapshot{rep.snapshots[rng.index(rep.snapshots.size())]};
  }
  return op::DeleteSnapshot{"snapshot-0"};
}

double parse_arg(const ScriptedOp& op, std::size_t i) {
  if (i >= op.args.size()) parse_error(op.line, "`" + op.kind + "` is missing arguments");
  return parse_number<double>(op.args[i], op.line, "number");
}

OpPayload scripted_op(const ScriptedOp& op, Bot& bot, const Dataset& ds) {
  const std::string cube(kCubeId);
  const auto& a = op.args;
  auto need = [&](std::size_t lo, std::size_t hi) {
    if (a.size() < lo || a.size() > hi) parse_error(op.line, "wrong argument count for `" + op.kind + "`");
  };
  if (op.kind == "move") {
    need(4, 6);
    Placement p;
    p.pose.translation = {parse_arg(op, 1), parse_arg(op, 2), parse_arg(op, 3)};
    if (a.size() >= 5) p.pose.rotation = UnitQuaternion::from_axis_angle(kUp, parse_arg(op, 4) * kPi / 180.0);
    if (a.size() >= 6) p.scale = parse_arg(op, 5);
    p.pose = bot.client->to_session(p.pose);
    return op::SetTransform{a[0], p};
  }
  if (op.kind == "mapping") {
    need(5, 6);
    DimensionMapping m{a[0], a[1], a[2], a[3], a[4], a.size() == 6};
    if (a.size() == 6 && a[5] != "traces") parse_error(op.line, "expected `traces`");
    return op::SetMapping{cube, m};
  }
  if (op.kind.rfind("filter-", 0) == 0) {
    FilterState f = bot.client->replica().cube()->filter;
    if (op.kind == "filter-year") {
      need(2, 2);
      f.year_range = {parse_number<int>(a[0], op.line, "year"), parse_number<int>(a[1], op.line, "year")};
    } else if (op.kind == "filter-range") {
      need(3, 3);
      f.numeric_ranges[a[0]] = NumericRange{parse_arg(op, 1), parse_arg(op, 2)};
    } else if (op.kind == "filter-regions") {
      f.regions = std::set<std::string>(a.begin(), a.end());
    } else {
      need(0, 0);
      f = FilterState{};
    }
    return op::SetFilter{cube, f};
  }
  if (op.kind == "viz") {
    need(1, 1);
    if (a[0] != "scatter" && a[0] != "bar") parse_error(op.line, "viz takes scatter or bar");
    return op::SetVizMode{cube, a[0] == "bar" ? VizMode::BarChart : VizMode::Scatter};
  }
  if (op.kind == "select") {
    need(1, 1);
    std::optional<std::size_t> row;
    if (a[0] != "none") row = parse_number<std::size_t>(a[0], op.line, "row");
    return op::SelectRow{cube, row};
  }
  if (op.kind == "watch") {
    need(1, 1);
    return op::WatchlistAdd{cube, a[0], 0};
  }
  if (op.kind == "unwatch") {
    need(1, 1);
    return op::WatchlistRemove{cube, a[0]};
  }
  if (op.kind == "snapshot") {
    need(0, 1);
    std::optional<CubeFace> face;
    if (!a.empty()) {
      face = cube_face_from_string(a[0]);
      if (!face) parse_error(op.line, "bad face `" + a[0] + "`");
    }
    return snapshot_op(*bot.client, ds, face);
  }
  if (op.kind == "delete") {
    need(1, 1);
    return op::DeleteSnapshot{a[0]};
  }
  // pose
  need(3, 4);
  Pose p;
  p.position = {parse_arg(op, 0), parse_arg(op, 1), parse_arg(op, 2)};
  if (a.size() == 4) p.orientation = UnitQuaternion::from_axis_angle(kUp, parse_arg(op, 3) * kPi / 180.0);
  bot.client->set_head_pose(p);
  return op::SetUserPose{"", Pose{bot.client->to_session(p.position),
                                  bot.client->alignment().rotation * p.orientation}};
}

std::string phase_label_key(ClientPhase phase) {
  switch (phase) {
    case ClientPhase::Discovering: return "session.discovering";
    case ClientPhase::Connecting: return "session.connecting";
    case ClientPhase::AwaitingWelcome: return "session.joining";
    case ClientPhase::AnchorDefining: return "session.defining_anchor";
    case ClientPhase::Aligning: return "session.aligning";
    case ClientPhase::Synced: return "session.synced";
    case ClientPhase::Reconnecting: return "session.reconnecting";
    case ClientPhase::Failed: return "error.generic";
    case ClientPhase::Idle: return "session.leave";
  }
  return "error.generic";
}

// Digest after each seq of the server log replayed from a fresh session,
// indexed by seq; empty if the log no longer starts at seq 1.
std::vector<std::uint64_t> server_digest_chain(const SessionServer& server) {
  const auto& log = server.op_log();
  std::vector<std::uint64_t> chain;
  if (!log.empty() && log.front().seq != 1) return chain;
  SessionState s = SessionState::initial();
  chain.push_back(state_digest(s));
  for (const auto& e : log) {
    s = apply_op(std::move(s), e.seq, e.op);
    chain.push_back(state_digest(s));
  }
  return chain;
}

void locate_divergence(BotReport& rep, const SessionClient& client, const SessionServer& server,
                       const std::vector<std::uint64_t>& chain) {
  const ReplicaHistory& h = client.history();
  if (chain.empty()) {
    rep.divergence_detail = "server log truncated; cannot replay";
    return;
  }
  std::map<std::uint64_t, const OpPayload*> server_ops;
  for (const auto& e : server.op_log()) server_ops[e.seq] = &e.op;
  auto server_digest = [&](std::uint64_t seq) -> std::optional<std::uint64_t> {
    if (seq < chain.size()) return chain[seq];
    return std::nullopt;
  };

  SessionState s = h.baseline;
  if (server_digest(s.server_seq) != state_digest(s)) {
    rep.first_divergent_seq = s.server_seq;
    rep.divergence_detail = "baseline state differs";
    return;
  }
  for (const auto& a : h.ops) {
    auto it = server_ops.find(a.seq);
    if (it == server_ops.end() || !(*it->second == a.op)) {
      rep.first_divergent_seq = a.seq;
      rep.divergence_detail = "op differs from server log (" + std::string(op_name(a.op)) + ")";
      return;
    }
    if (a.skipped) {
      s.server_seq = a.seq;
    } else {
      s = apply_op(std::move(s), a.seq, a.op);
    }
    if (server_digest(a.seq) != state_digest(s)) {
      rep.first_divergent_seq = a.seq;
      rep.divergence_detail = std::string(a.skipped ? "op not applied" : "state differs after") + " (" +
                              std::string(op_name(a.op)) + ")";
      return;
    }
  }
  rep.first_divergent_seq = s.server_seq + 1;
  rep.divergence_detail = "replica stopped at seq " + std::to_string(s.server_seq);
}

}  // namespace

OpPayload make_random_op(SessionClient& client, const Dataset& dataset, std::mt19937_64& rng) {
  Rng r{rng};
  return random_op(client, dataset, r);
}

Dataset scenario_dataset(const Scenario& sc) {
  SyntheticSpec spec;
  spec.individuals = sc.dataset_individuals;
  spec.years = sc.dataset_years;
  spec.missing_year_probability = 0.15;
  spec.seed = sc.net.seed;
  return generate_dataset(spec);
}

SimReport run_scenario(const Scenario& sc) {
  static const Localizer localizer;
  return run_scenario(sc, localizer);
}

SimReport run_scenario(const Scenario& sc, const Localizer& localizer) {
  sc.validate();
  SimNetwork net(sc.net);
  std::mt19937_64 engine(sc.net.seed ^ 0x9E3779B97F4A7C15ull);
  Rng rng{engine};

  ServerConfig scfg;
  scfg.session_id = sc.session_id;
  scfg.capacity = sc.capacity;
  SessionServer server(scfg, net.clock());
  net.add_server(server, "10.0.0.1");

  const Dataset dataset = scenario_dataset(sc);
  server.register_dataset(dataset);
  server.submit_server_op(op::LoadDataset{content_hash(dataset), dataset.columns()});

  auto room = std::make_shared<SimulatedRoom>();
  room->landmarks = default_anchor_points();

  std::vector<Bot> bots(sc.bot_count());
  for (std::size_t i = 0; i < bots.size(); ++i) {
    Bot& b = bots[i];
    b.index = i;
    b.name = "bot" + std::to_string(i);
    b.role = i < sc.participants ? Role::Participant : Role::Observer;
    b.language = sc.languages[i % sc.languages.size()];
    RigidTransform offset;
    if (sc.random_offsets) {
      offset.rotation = rng.rotation(kPi);
      offset.translation = {rng.uniform(-2.0, 2.0), rng.uniform(-0.5, 0.5), rng.uniform(-2.0, 2.0)};
    }
    b.sensor = std::make_shared<SimulatedAnchorSensor>(offset, sc.anchor_noise_m,
                                                       sc.net.seed * 1000003u + i, room);
    ClientConfig cc;
    cc.role = b.role;
    cc.language = b.language;
    cc.record_history = true;
    for (const auto& [bot, seq] : sc.corruptions) {
      if (bot == i) cc.debug_skip_apply_seq = seq;
    }
    b.client = std::make_unique<SessionClient>(cc, b.sensor);
    b.sim_index = net.add_client(*b.client);
  }

  // Lifecycle.
  std::vector<bool> explicit_join(bots.size(), false);
  std::int64_t last_event_ms = 0;
  for (const auto& ev : sc.bot_events) {
    if (ev.kind == BotEvent::Kind::Join) explicit_join[ev.bot] = true;
    last_event_ms = std::max(last_event_ms, ev.at_ms);
  }
  for (std::size_t i = 0; i < bots.size(); ++i) {
    if (!explicit_join[i]) {
      net.at(static_cast<std::int64_t>(i) * sc.join_stagger_ms, [&, i] {
        bots[i].started = true;
        bots[i].client->start(net.now());
      });
    }
  }
  for (const auto& ev : sc.bot_events) {
    net.at(ev.at_ms, [&, ev] {
      Bot& b = bots[ev.bot];
      if (ev.kind == BotEvent::Kind::Leave) {
        b.left = true;
        b.client->leave(net.now());
      } else {
        b.started = true;
        b.left = false;
        b.client->start(net.now());
      }
    });
  }
  for (const auto& d : sc.net.disconnects) last_event_ms = std::max(last_event_ms, d.at_ms + d.duration_ms);

  std::map<std::string, std::size_t> not_synced;
  auto submit = [&](Bot& b, OpPayload op) {
    b.refs.push_back(b.client->submit(std::move(op)));
    ++b.submitted;
  };

  // Scripted ops.
  for (const auto& op : sc.script) {
    last_event_ms = std::max(last_event_ms, op.at_ms);
    net.at(op.at_ms, [&, op] {
      Bot& b = bots[op.bot];
      if (!b.client->synced()) {
        ++not_synced[b.name];
        return;
      }
      submit(b, scripted_op(op, b, dataset));
    });
  }

  // Random ops, one every op_interval_ms, each from a random synced bot.
  std::size_t issued = 0;
  std::int64_t last_random_ms = 0;
  std::function<void()> next_random = [&] {
    if (issued >= sc.random_ops) return;
    const std::size_t start = rng.index(bots.size());
    for (std::size_t k = 0; k < bots.size(); ++k) {
      Bot& b = bots[(start + k) % bots.size()];
      if (!b.client->synced()) continue;
      submit(b, random_op(*b.client, dataset, rng));
      if (rng.chance(0.02)) b.label = localizer.translate("menu.snapshot", b.language);
      ++issued;
      last_random_ms = net.now();
      break;
    }
    net.at(net.now() + sc.op_interval_ms, next_random);
  };
  if (sc.random_ops > 0) net.at(sc.ops_start_ms, next_random);

  // Capacity watch: sample after every event boundary via the done predicate.
  std::size_t max_participants = 0;
  auto expected_connected = [&](const Bot& b) {
    return b.started && !b.left && b.client->phase() != ClientPhase::Failed;
  };
  auto quiet = [&] {
    max_participants = std::max(max_participants, server.participant_count());
    if (issued < sc.random_ops) return false;
    const std::int64_t busy_until = std::max({last_event_ms, last_random_ms, sc.ops_start_ms});
    if (net.now() < busy_until + sc.settle_ms) return false;
    if (net.in_flight() != 0 || server.pending_pose_count() != 0) return false;
    for (const auto& b : bots) {
      if (expected_connected(b) && !b.client->synced()) return false;
    }
    return true;
  };
  const bool quiesced = net.run_until(sc.max_time_ms, quiet);

  SimReport rep;
  rep.seed = sc.net.seed;
  rep.quiesced = quiesced;
  rep.canonical_digest = state_digest(server.state());
  rep.server_seq = server.state().server_seq;
  rep.participants_admitted = server.participant_count();
  rep.observers_admitted = server.observer_count();
  rep.max_participants_seen = max_participants;
  rep.virtual_time_ms = net.now();
  rep.ops_phase_ms = std::max<std::int64_t>(0, last_random_ms - sc.ops_start_ms);
  rep.net = net.stats();
  rep.server_warnings = server.warnings();

  const auto chain_needed = [&] {
    for (const auto& b : bots) {
      if (expected_connected(b) && state_digest(b.client->replica()) != rep.canonical_digest) return true;
    }
    return false;
  }();
  const std::vector<std::uint64_t> chain = chain_needed ? server_digest_chain(server)
                                                        : std::vector<std::uint64_t>{};

  bool all_ok = quiesced;
  for (auto& b : bots) {
    BotReport br;
    br.name = b.name;
    br.client_id = b.client->client_id();
    br.role = b.role;
    br.language = b.language;
    br.phase = b.client->phase();
    br.label = localizer.translate(phase_label_key(br.phase), b.language);
    br.expected_connected = expected_connected(b);
    br.digest = state_digest(b.client->replica());
    br.server_seq = b.client->replica().server_seq;
    br.submitted = b.submitted;
    br.welcomes = b.client->welcomes();
    br.full_state_requests = b.client->full_state_requests();
    for (auto ref : b.refs) {
      if (auto err = b.client->rejection(ref)) {
        ++br.rejections[std::string(to_string(err->code))];
        ++rep.ops_rejected;
      }
    }
    if (auto it = not_synced.find(b.name); it != not_synced.end()) br.rejections["NotSynced"] += it->second;
    if (br.phase == ClientPhase::Failed && b.client->last_error()) {
      br.failure = b.client->last_error()->code;
      if (*br.failure == ErrorCode::SessionFull) ++rep.session_full_rejections;
    }
    if (b.client->welcomes() > 0 && br.phase == ClientPhase::Synced) {
      const RigidTransform expect = b.sensor->expected_alignment();
      br.alignment_error = geodesic_distance(expect.rotation, b.client->alignment().rotation) +
                           norm(expect.translation - b.client->alignment().translation);
    }
    rep.ops_submitted += b.submitted;
    if (br.expected_connected) {
      br.converged = br.digest == rep.canonical_digest;
      if (!br.converged) locate_divergence(br, *b.client, server, chain);
      all_ok = all_ok && br.converged;
    } else if (br.failure && *br.failure != ErrorCode::SessionFull) {
      all_ok = false;
    }
    rep.bots.push_back(std::move(br));
  }
  rep.converged = all_ok;
  return rep;
}

std::string SimReport::text() const {
  std::string out;
  auto line = [&out](const std::string& s) {
    out += s;
    out += '\n';
  };
  line("datacube simulation report");
  line("seed " + std::to_string(seed));
  line("result " + std::string(converged ? "PASS" : "FAIL") + (quiesced ? "" : " (no quiescence)"));
  line("canonical_digest " + to_hex(canonical_digest) + " server_seq " + std::to_string(server_seq));
  line("admitted participants " + std::to_string(participants_admitted) + " observers " +
       std::to_string(observers_admitted) + " peak_participants " +
       std::to_string(max_participants_seen) + " session_full " +
       std::to_string(session_full_rejections));
  line("ops submitted " + std::to_string(ops_submitted) + " rejected " + std::to_string(ops_rejected));
  const double secs = static_cast<double>(ops_phase_ms) / 1000.0;
  line("throughput " +
       (secs > 0 ? format_significant(static_cast<double>(ops_submitted) / secs, 4) : std::string("n/a")) +
       " ops/s " + (real_time ? "wall" : "virtual") + " over " + std::to_string(ops_phase_ms) + " ms");
  line(std::string(real_time ? "elapsed_ms " : "virtual_time_ms ") + std::to_string(virtual_time_ms));
  line("net frames " + std::to_string(net.frames) + " bytes " + std::to_string(net.bytes) +
       " dropped_updates " + std::to_string(net.dropped_updates) + " dark_losses " +
       std::to_string(net.dark_losses) + " connections " + std::to_string(net.connections) +
       " refused " + std::to_string(net.refused_connects));
  line("server_warnings " + std::to_string(server_warnings.size()));
  for (const auto& b : bots) {
    std::string s = "client " + b.name + " id=" + (b.client_id.empty() ? "-" : b.client_id) +
                    " role=" + std::string(to_string(b.role)) + " lang=" + b.language +
                    " phase=" + std::string(to_string(b.phase)) + " label=\"" + b.label + "\"" +
                    " seq=" + std::to_string(b.server_seq) + " digest=" + to_hex(b.digest) +
                    " submitted=" + std::to_string(b.submitted) +
                    " welcomes=" + std::to_string(b.welcomes) +
                    " resyncs=" + std::to_string(b.full_state_requests) +
                    " align_err=" + format_significant(b.alignment_error, 3);
    for (const auto& [code, n] : b.rejections) s += " rejected." + code + "=" + std::to_string(n);
    if (b.failure) s += " failure=" + std::string(to_string(*b.failure));
    if (b.expected_connected) s += b.converged ? " OK" : " DIVERGED";
    line(s);
  }
  for (const auto& b : bots) {
    if (!b.expected_connected || b.converged) continue;
    line("divergence " + b.name + " first_seq " +
         (b.first_divergent_seq ? std::to_string(*b.first_divergent_seq) : std::string("?")) + ": " +
         b.divergence_detail);
  }
  return out;
}

}  // namespace datacube
