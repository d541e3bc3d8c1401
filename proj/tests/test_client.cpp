#include <set>

#include "datacube/client.hpp"
#include "datacube/server.hpp"
#include "support.hpp"

using namespace datacube;

namespace {

// Wires one server to any number of clients with zero latency.
class DirectLink {
 public:
  explicit DirectLink(SessionServer& server) : server_(server) {}

  std::size_t add(SessionClient& c) {
    clients_.push_back(&c);
    return clients_.size() - 1;
  }

  void pump(std::int64_t now) {
    for (int round = 0; round < 100; ++round) {
      bool moved = false;
      for (std::size_t i = 0; i < clients_.size(); ++i) {
        for (auto& a : clients_[i]->drain_actions()) {
          moved = true;
          const auto conn = static_cast<ConnectionId>(i + 1);
          if (std::holds_alternative<action::Connect>(a)) {
            server_.on_connect(conn);
            clients_[i]->on_connected(now);
          } else if (auto* s = std::get_if<action::Send>(&a)) {
            server_.on_envelope(conn, decode(encode(s->envelope)));
          } else if (std::holds_alternative<action::Disconnect>(a)) {
            server_.on_disconnect(conn);
          } else {
            probes++;
          }
        }
      }
      for (auto& o : server_.drain_outbound()) {
        moved = true;
        const std::size_t i = o.connection - 1;
        if (std::holds_alternative<msg::Update>(o.envelope.payload) && drop_next_update_.erase(i)) continue;
        clients_[i]->on_envelope(decode(encode(o.envelope)), now);
      }
      server_.drain_closes();
      if (!moved) return;
    }
  }

  void drop_next_update(std::size_t client) { drop_next_update_.insert(client); }
  int probes = 0;

 private:
  SessionServer& server_;
  std::vector<SessionClient*> clients_;
  std::set<std::size_t> drop_next_update_;
};

ClientConfig direct_config(Role role = Role::Participant) {
  ClientConfig c;
  c.role = role;
  c.server = Endpoint{"127.0.0.1", 47800};
  return c;
}

struct ClientFixture : ::testing::Test {
  ManualClock clock{0};
  SessionServer server{[] {
                         ServerConfig c;
                         c.session_id = "lab";
                         return c;
                       }(),
                       clock};
  DirectLink link{server};
  std::shared_ptr<SimulatedRoom> room = [] {
    auto r = std::make_shared<SimulatedRoom>();
    r->landmarks = default_anchor_points();
    return r;
  }();
};

}  // namespace

TEST(DiscoveryReply, Parse) {
  EXPECT_EQ(parse_discovery_reply("DATACUBE_DISCOVERY_V1!47800;lab"), (DiscoveryReply{47800, "lab"}));
  EXPECT_FALSE(parse_discovery_reply("DATACUBE_DISCOVERY_V1!0;lab"));
  EXPECT_FALSE(parse_discovery_reply("DATACUBE_DISCOVERY_V1!70000;lab"));
  EXPECT_FALSE(parse_discovery_reply("DATACUBE_DISCOVERY_V1!80;"));
  EXPECT_FALSE(parse_discovery_reply("DATACUBE_DISCOVERY_V1!x;lab"));
  EXPECT_FALSE(parse_discovery_reply("OTHER!80;lab"));
}

TEST(ClientDiscovery, NoServerFoundAfterThreeProbes) {
  ClientConfig cfg;
  SessionClient c(cfg, nullptr);
  c.start(0);
  int probes = 0;
  for (std::int64_t t = 0; t <= 5'000 && c.phase() != ClientPhase::Failed; t += 100) {
    c.tick(t);
    for (auto& a : c.drain_actions()) probes += std::holds_alternative<action::Probe>(a);
  }
  EXPECT_EQ(probes, 3);
  EXPECT_EQ(c.phase(), ClientPhase::Failed);
  ASSERT_TRUE(c.last_error());
  EXPECT_EQ(c.last_error()->code, ErrorCode::NoServerFound);
}

TEST(ClientDiscovery, PreferredSessionWins) {
  ClientConfig cfg;
  cfg.preferred_session = "b";
  SessionClient c(cfg, nullptr);
  c.start(0);
  c.drain_actions();
  c.on_discovery_reply("10.0.0.1", "DATACUBE_DISCOVERY_V1!4000;a", 10);
  EXPECT_EQ(c.phase(), ClientPhase::Discovering);
  c.on_discovery_reply("10.0.0.2", "DATACUBE_DISCOVERY_V1!4001;b", 20);
  EXPECT_EQ(c.phase(), ClientPhase::Connecting);
  EXPECT_EQ(c.endpoint(), (Endpoint{"10.0.0.2", 4001}));
}

TEST(ClientDiscovery, FallsBackToFirstReply) {
  ClientConfig cfg;
  cfg.preferred_session = "z";
  SessionClient c(cfg, nullptr);
  c.start(0);
  c.on_discovery_reply("10.0.0.1", "DATACUBE_DISCOVERY_V1!4000;a", 10);
  c.on_discovery_reply("10.0.0.2", "DATACUBE_DISCOVERY_V1!4001;b", 20);
  c.tick(1'000);
  EXPECT_EQ(c.endpoint(), (Endpoint{"10.0.0.1", 4000}));
}

TEST(ClientConnect, RetriesThenFails) {
  ClientConfig cfg = direct_config();
  cfg.max_connect_attempts = 3;
  SessionClient c(cfg, nullptr);
  c.start(0);
  int connects = 0;
  for (std::int64_t t = 0; t < 10'000 && c.phase() != ClientPhase::Failed; t += 100) {
    for (auto& a : c.drain_actions()) {
      if (std::holds_alternative<action::Connect>(a)) {
        ++connects;
        c.on_connect_failed(t);
      }
    }
    c.tick(t);
  }
  EXPECT_EQ(connects, 3);
  EXPECT_EQ(c.last_error()->code, ErrorCode::NoServerFound);
}

TEST_F(ClientFixture, PhasesAndAlignment) {
  std::mt19937_64 rng(31);
  const RigidTransform off_a = dctest::random_transform(rng), off_b = dctest::random_transform(rng);
  auto sa = std::make_shared<SimulatedAnchorSensor>(off_a, 0.0, 1, room);
  auto sb = std::make_shared<SimulatedAnchorSensor>(off_b, 0.0, 2, room);
  SessionClient a(direct_config(), sa), b(direct_config(), sb);
  link.add(a);
  link.add(b);
  a.start(0);
  link.pump(0);
  b.start(0);
  link.pump(0);
  EXPECT_EQ(a.phase_history(), (std::vector<ClientPhase>{ClientPhase::Idle, ClientPhase::Connecting,
                                                         ClientPhase::AwaitingWelcome, ClientPhase::AnchorDefining,
                                                         ClientPhase::Synced}));
  EXPECT_EQ(b.phase_history(), (std::vector<ClientPhase>{ClientPhase::Idle, ClientPhase::Connecting,
                                                         ClientPhase::AwaitingWelcome, ClientPhase::Aligning,
                                                         ClientPhase::Synced}));
  EXPECT_LT(dctest::transform_error(b.alignment(), sb->expected_alignment()), 1e-6);
  // A room point seen by both devices maps to the same session point.
  const Vec3 world{0.3, 1.1, -1.4};
  const Vec3 pa = a.to_session(apply(invert(off_a), world));
  const Vec3 pb = b.to_session(apply(invert(off_b), world));
  EXPECT_LT(norm(pa - pb), 1e-6);
}

TEST_F(ClientFixture, SubmitBeforeSyncThrows) {
  SessionClient a(direct_config(), nullptr);
  EXPECT_DC_ERROR(a.submit(op::SetVizMode{"cube", VizMode::BarChart}), ErrorCode::NotSynced);
  EXPECT_DC_ERROR(a.current_ray(), ErrorCode::NotSynced);
}

TEST_F(ClientFixture, AckAndRejection) {
  SessionClient a(direct_config(), nullptr);
  link.add(a);
  a.start(0);
  link.pump(0);
  ASSERT_TRUE(a.synced());
  const auto ok = a.submit(op::SetVizMode{"cube", VizMode::BarChart});
  const auto bad = a.submit(op::WatchlistAdd{"cube", "ghost", 0});
  link.pump(0);
  EXPECT_EQ(a.acknowledged_seq(ok), 1u);
  EXPECT_FALSE(a.acknowledged_seq(bad));
  ASSERT_TRUE(a.rejection(bad));
  EXPECT_EQ(a.rejection(bad)->code, ErrorCode::UnknownIndividual);
  EXPECT_EQ(a.replica(), server.state());
}

TEST_F(ClientFixture, GapTriggersFullStateResync) {
  SessionClient a(direct_config(), nullptr), b(direct_config(), nullptr);
  link.add(a);
  link.add(b);
  a.start(0);
  b.start(0);
  link.pump(0);
  link.drop_next_update(1);
  a.submit(op::SetVizMode{"cube", VizMode::BarChart});
  link.pump(0);
  EXPECT_EQ(b.replica().server_seq, 0u);
  a.submit(op::SetVizMode{"cube", VizMode::Scatter});
  link.pump(0);
  EXPECT_EQ(b.full_state_requests(), 1u);
  EXPECT_TRUE(b.synced());
  EXPECT_EQ(b.replica(), server.state());
  EXPECT_EQ(state_digest(a.replica()), state_digest(b.replica()));
}

TEST_F(ClientFixture, TailGapCaughtByHeartbeat) {
  SessionClient a(direct_config(), nullptr), b(direct_config(), nullptr);
  link.add(a);
  link.add(b);
  a.start(0);
  b.start(0);
  link.pump(0);
  link.drop_next_update(1);
  a.submit(op::SetVizMode{"cube", VizMode::BarChart});
  link.pump(0);
  EXPECT_NE(b.replica(), server.state());
  clock.set(2'500);
  b.tick(2'500);
  link.pump(2'500);
  EXPECT_EQ(b.replica(), server.state());
}

TEST_F(ClientFixture, LocalPreferencesSendNothing) {
  SessionClient a(direct_config(), nullptr);
  link.add(a);
  a.start(0);
  link.pump(0);
  const auto before = server.state();
  a.set_language("ja");
  a.on_pointer({PointerSource::HandHidden, 1, std::nullopt});
  a.on_pointer({PointerSource::ControllerButton, 2, std::nullopt});
  EXPECT_TRUE(a.drain_actions().empty());
  EXPECT_EQ(a.local_prefs().language, "ja");
  EXPECT_EQ(a.local_prefs().input.mode, InputMode::RayPointer);
  EXPECT_EQ(server.state(), before);
}

TEST_F(ClientFixture, ServerSilenceTriggersReconnect) {
  SessionClient a(direct_config(), nullptr);
  a.start(0);
  a.drain_actions();
  a.on_connected(0);
  a.drain_actions();
  a.tick(10'001);
  EXPECT_EQ(a.phase(), ClientPhase::Connecting);
  bool disconnected = false;
  for (auto& act : a.drain_actions()) disconnected |= std::holds_alternative<action::Disconnect>(act);
  EXPECT_TRUE(disconnected);
}

TEST_F(ClientFixture, PublishedPoseIsInSessionFrame) {
  std::mt19937_64 rng(32);
  auto sa = std::make_shared<SimulatedAnchorSensor>(dctest::random_transform(rng), 0.0, 1, room);
  auto sb = std::make_shared<SimulatedAnchorSensor>(dctest::random_transform(rng), 0.0, 2, room);
  SessionClient a(direct_config(), sa), b(direct_config(), sb);
  link.add(a);
  link.add(b);
  a.start(0);
  link.pump(0);
  b.start(0);
  link.pump(0);
  const Pose head{{0.1, 1.6, 0.2}, UnitQuaternion::from_axis_angle({0, 1, 0}, 0.7)};
  b.set_head_pose(head);
  b.publish_pose();
  link.pump(0);
  const Pose& p = server.state().user_poses.at(b.client_id());
  const Vec3 world = apply(sb->local_to_world(), head.position);
  const Vec3 expect = apply(invert(*room->session_to_world), world);
  EXPECT_LT(norm(p.position - expect), 1e-9);
}

TEST(InputArbitration, Transitions) {
  const InputState gaze_hand{InputMode::GazeTap, true};
  const InputState gaze_nohand{InputMode::GazeTap, false};
  const InputState ray_nohand{InputMode::RayPointer, false};
  EXPECT_EQ(arbitrate_input(ray_nohand, {PointerSource::HandVisible, 0, {}}), gaze_hand);
  EXPECT_EQ(arbitrate_input(gaze_nohand, {PointerSource::ControllerButton, 0, {}}), ray_nohand);
  EXPECT_EQ(arbitrate_input(gaze_hand, {PointerSource::ControllerButton, 0, {}}), gaze_hand);
  EXPECT_EQ(arbitrate_input(gaze_hand, {PointerSource::HandHidden, 0, {}}), gaze_nohand);
  EXPECT_EQ(arbitrate_input(ray_nohand, {PointerSource::AirTap, 0, {}}), ray_nohand);
}

TEST(ComputeRay, GazeFollowsHead) {
  const Pose head{{0, 1.5, 0}, UnitQuaternion::from_axis_angle({0, 1, 0}, M_PI / 2)};
  const Ray r = compute_ray(InputMode::GazeTap, head, RigidTransform::identity(), std::nullopt);
  EXPECT_NEAR(r.origin.y, 1.5, 1e-12);
  EXPECT_NEAR(r.direction.x, -1, 1e-12);
  EXPECT_NEAR(r.direction.z, 0, 1e-12);
}

TEST(ComputeRay, PointerUsesControllerOffset) {
  const Pose head{{0, 1.5, 0}, {}};
  const auto down = UnitQuaternion::from_axis_angle({1, 0, 0}, -M_PI / 2);
  const Ray r = compute_ray(InputMode::RayPointer, head, RigidTransform::identity(), down);
  EXPECT_NEAR(r.origin.x, 0.2, 1e-12);
  EXPECT_NEAR(r.origin.y, 1.3, 1e-12);
  EXPECT_NEAR(r.direction.y, -1, 1e-12);
  EXPECT_DC_ERROR(compute_ray(InputMode::RayPointer, head, RigidTransform::identity(), std::nullopt),
                  ErrorCode::MissingControllerOrientation);
}

TEST(ComputeRay, AlignmentMapsIntoSessionFrame) {
  std::mt19937_64 rng(33);
  for (int i = 0; i < 100; ++i) {
    const RigidTransform t = dctest::random_transform(rng);
    const Pose head{{dctest::uniform(rng, -1, 1), 1.6, 0}, dctest::random_rotation(rng)};
    const Ray local = compute_ray(InputMode::GazeTap, head, RigidTransform::identity(), std::nullopt);
    const Ray session = compute_ray(InputMode::GazeTap, head, t, std::nullopt);
    EXPECT_LT(norm(session.origin - apply(t, local.origin)), 1e-12);
    EXPECT_LT(norm(session.direction - apply_direction(t, local.direction)), 1e-12);
  }
}
