#include <random>

#include <benchmark/benchmark.h>

#include "datacube/client.hpp"
#include "datacube/dataset.hpp"
#include "datacube/protocol.hpp"
#include "datacube/scenario.hpp"
#include "datacube/synthetic.hpp"
#include "datacube/viewmath.hpp"

using namespace datacube;

namespace {

UnitQuaternion rotation_from(std::mt19937_64& rng) {
  return UnitQuaternion::normalized(unit_double(rng()) - 0.5, unit_double(rng()) - 0.5, unit_double(rng()) - 0.5,
                                    unit_double(rng()) - 0.5);
}

SessionState busy_state(std::size_t snapshots) {
  SessionState s = SessionState::initial();
  std::vector<SnapshotPoint> pts(200, SnapshotPoint{0.25, 0.5, 0.75, 0.1});
  for (std::size_t i = 0; i < snapshots; ++i)
    s = apply_op(std::move(s), s.server_seq + 1, op::CreateSnapshot{FrozenPoints(pts), {Axis::Z, -1}, "c1", 0});
  return s;
}

void BM_EncodeUpdate(benchmark::State& st) {
  const Envelope e{"server", 42, msg::Update{"c1", 7, op::SetTransform{"cube", Placement{}}}};
  for (auto _ : st) benchmark::DoNotOptimize(encode(e));
}
BENCHMARK(BM_EncodeUpdate);

void BM_DecodeUpdate(benchmark::State& st) {
  const std::string frame = encode({"server", 42, msg::Update{"c1", 7, op::SetTransform{"cube", Placement{}}}});
  for (auto _ : st) benchmark::DoNotOptimize(decode(frame));
}
BENCHMARK(BM_DecodeUpdate);

void BM_EncodeFullState(benchmark::State& st) {
  const Envelope e{"server", 1, msg::FullState{busy_state(static_cast<std::size_t>(st.range(0)))}};
  for (auto _ : st) benchmark::DoNotOptimize(encode(e));
}
BENCHMARK(BM_EncodeFullState)->Arg(0)->Arg(8);

void BM_ApplySetTransform(benchmark::State& st) {
  SessionState s = busy_state(static_cast<std::size_t>(st.range(0)));
  const OpPayload op = op::SetTransform{"cube", Placement{}};
  for (auto _ : st) s = apply_op(std::move(s), s.server_seq + 1, op);
}
BENCHMARK(BM_ApplySetTransform)->Arg(0)->Arg(8);

void BM_StateDigest(benchmark::State& st) {
  const SessionState s = busy_state(4);
  for (auto _ : st) benchmark::DoNotOptimize(state_digest(s));
}
BENCHMARK(BM_StateDigest);

void BM_SolveAlignment(benchmark::State& st) {
  std::mt19937_64 rng(1);
  const AnchorSet session = default_anchor_points();
  const RigidTransform t{rotation_from(rng), {1, 2, 3}};
  const AnchorSet local = transform_anchors(invert(t), session);
  for (auto _ : st) benchmark::DoNotOptimize(solve_alignment(session, local));
}
BENCHMARK(BM_SolveAlignment);

void BM_SelectFace(benchmark::State& st) {
  std::mt19937_64 rng(2);
  const UnitQuaternion q = rotation_from(rng);
  const Vec3 view{0.3, -0.2, -0.93};
  for (auto _ : st) benchmark::DoNotOptimize(select_face(view, q));
}
BENCHMARK(BM_SelectFace);

void BM_PickPoint(benchmark::State& st) {
  std::mt19937_64 rng(3);
  std::vector<PickSphere> spheres;
  for (std::int64_t i = 0; i < st.range(0); ++i)
    spheres.push_back({{unit_double(rng()), unit_double(rng()), unit_double(rng())}, 0.01, static_cast<std::size_t>(i)});
  for (auto _ : st) benchmark::DoNotOptimize(pick_point({0.5, 0.5, 2}, {0, 0, -1}, spheres));
}
BENCHMARK(BM_PickPoint)->Arg(1'000)->Arg(10'000);

void BM_ParseCsv(benchmark::State& st) {
  SyntheticSpec spec;
  spec.individuals = static_cast<std::size_t>(st.range(0));
  const std::string text = export_csv(generate_dataset(spec));
  for (auto _ : st) benchmark::DoNotOptimize(parse_csv(text));
  st.SetBytesProcessed(static_cast<std::int64_t>(st.iterations() * text.size()));
}
BENCHMARK(BM_ParseCsv)->Arg(200)->Arg(2'000);

void BM_AggregateBars(benchmark::State& st) {
  SyntheticSpec spec;
  spec.individuals = 2'000;
  const Dataset ds = generate_dataset(spec);
  for (auto _ : st) benchmark::DoNotOptimize(aggregate_bars(ds, "glucose", FilterState{}));
}
BENCHMARK(BM_AggregateBars);

void BM_SimulateSession(benchmark::State& st) {
  Scenario sc;
  sc.participants = 5;
  sc.random_ops = static_cast<std::size_t>(st.range(0));
  std::uint64_t seed = 1;
  for (auto _ : st) {
    sc.net.seed = seed++;
    benchmark::DoNotOptimize(run_scenario(sc));
  }
  st.SetItemsProcessed(static_cast<std::int64_t>(st.iterations()) * st.range(0));
}
BENCHMARK(BM_SimulateSession)->Arg(1'000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
