// Acceptance gate: one PASS/FAIL line per criterion, exit status 0 only when
// every line passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "datacube/client.hpp"
#include "datacube/dataset.hpp"
#include "datacube/localization.hpp"
#include "datacube/scenario.hpp"
#include "datacube/synthetic.hpp"
#include "datacube/viewmath.hpp"

using namespace datacube;

namespace {

// Pinned tolerances and sizes.
constexpr int kConvergenceSeeds = 100;
constexpr std::size_t kConvergenceBots = 5;
constexpr std::size_t kConvergenceOps = 1000;
constexpr double kConvergenceBudgetS = 60.0;
constexpr std::size_t kStormParticipants = 10;
constexpr std::size_t kStormObservers = 2;
constexpr std::size_t kCapacity = 6;
constexpr std::size_t kReconnectOps = 50;
constexpr int kAlignmentTrials = 1000;
constexpr double kAlignmentTolerance = 1e-6;
constexpr double kAnchorNoiseSigma = 1e-3;
constexpr double kNoisyRmsBound = 5e-3;
constexpr int kFaceTrials = 10000;
constexpr int kSnapshotTrials = 200;
constexpr int kStatsDatasets = 100;
constexpr std::size_t kStatsMaxRows = 1000;
constexpr double kStatsRelTolerance = 1e-12;
constexpr int kCsvFiles = 100;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * unit_double(rng()); }

UnitQuaternion random_rotation(std::mt19937_64& rng) {
  const double u1 = unit_double(rng()), u2 = unit_double(rng()), u3 = unit_double(rng());
  const double a = std::sqrt(1 - u1), b = std::sqrt(u1);
  return UnitQuaternion::normalized(b * std::cos(2 * M_PI * u3), a * std::sin(2 * M_PI * u2),
                                    a * std::cos(2 * M_PI * u2), b * std::sin(2 * M_PI * u3));
}

Vec3 random_direction(std::mt19937_64& rng) {
  for (;;) {
    Vec3 v{uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1)};
    const double n = norm(v);
    if (n > 1e-3 && n <= 1) return v * (1 / n);
  }
}

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(3);
  ss << v;
  return ss.str();
}

// ---------------------------------------------------------------------------

Outcome convergence() {
  const auto t0 = std::chrono::steady_clock::now();
  int passed = 0;
  std::string first_failure;
  for (int seed = 1; seed <= kConvergenceSeeds; ++seed) {
    Scenario sc;
    sc.participants = kConvergenceBots;
    sc.random_ops = kConvergenceOps;
    sc.net.seed = static_cast<std::uint64_t>(seed);
    sc.net.latency_min_ms = 5;
    sc.net.latency_max_ms = 50;
    const SimReport rep = run_scenario(sc);
    bool ok = rep.converged && rep.ops_submitted == kConvergenceOps;
    for (const auto& b : rep.bots) ok = ok && b.expected_connected && b.digest == rep.canonical_digest;
    if (ok) {
      ++passed;
    } else if (first_failure.empty()) {
      first_failure = " first failing seed " + std::to_string(seed);
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {passed == kConvergenceSeeds && secs < kConvergenceBudgetS,
          std::to_string(passed) + "/" + std::to_string(kConvergenceSeeds) + " seeds converged in " + fmt(secs) +
              " s (budget " + fmt(kConvergenceBudgetS) + " s)" + first_failure};
}

Outcome capacity() {
  Scenario sc;
  sc.participants = kStormParticipants;
  sc.observers = kStormObservers;
  sc.capacity = kCapacity;
  sc.random_ops = 100;
  sc.net.seed = 2024;
  const SimReport rep = run_scenario(sc);
  std::size_t full = 0;
  for (const auto& b : rep.bots)
    if (b.failure == ErrorCode::SessionFull) ++full;
  const bool ok = rep.converged && rep.participants_admitted == kCapacity && rep.max_participants_seen == kCapacity &&
                  full == kStormParticipants - kCapacity && rep.observers_admitted == kStormObservers;
  return {ok, "admitted " + std::to_string(rep.participants_admitted) + " participants (peak " +
                  std::to_string(rep.max_participants_seen) + "), SessionFull " + std::to_string(full) +
                  ", observers " + std::to_string(rep.observers_admitted)};
}

Outcome reconnect() {
  Scenario sc;
  sc.participants = 3;
  sc.random_ops = 0;
  sc.net.seed = 99;
  sc.net.disconnects.push_back({2, 2'000, 1'500, false});
  const char* viz[] = {"bar", "scatter"};
  for (std::size_t i = 0; i < kReconnectOps; ++i) {
    ScriptedOp op;
    op.at_ms = 2'100 + static_cast<std::int64_t>(i) * 15;
    op.bot = i % 2;
    if (i % 3 == 0) {
      op.kind = "viz";
      op.args = {viz[i % 2]};
    } else {
      op.kind = "move";
      op.args = {"cube", std::to_string(0.01 * static_cast<double>(i)), "1", "-1.5", std::to_string(i)};
    }
    sc.script.push_back(op);
  }
  const SimReport rep = run_scenario(sc);
  const BotReport& b = rep.bots.at(2);
  const bool ok = rep.converged && rep.ops_submitted == kReconnectOps && rep.ops_rejected == 0 && b.welcomes == 2 &&
                  b.full_state_requests <= 1 && b.digest == rep.canonical_digest;
  return {ok, std::to_string(rep.ops_submitted) + " ops while away; rejoined with " + std::to_string(b.welcomes - 1) +
                  " welcome and " + std::to_string(b.full_state_requests) + " resync; digest " +
                  (b.digest == rep.canonical_digest ? "matches" : "differs")};
}

Outcome alignment() {
  std::mt19937_64 rng(7);
  const AnchorSet session = default_anchor_points();
  double worst = 0;
  for (int i = 0; i < kAlignmentTrials; ++i) {
    const RigidTransform t{random_rotation(rng), {uniform(rng, -5, 5), uniform(rng, -5, 5), uniform(rng, -5, 5)}};
    // local = t^-1(session), so the recovered local->session map must equal t.
    AnchorSet local = session;
    const RigidTransform inv = invert(t);
    for (auto& p : local.points) p.position = apply(inv, p.position);
    const RigidTransform got = solve_alignment(session, local);
    const double err = geodesic_distance(got.rotation, t.rotation) + norm(got.translation - t.translation);
    worst = std::max(worst, err);
  }
  double worst_rms = 0;
  std::normal_distribution<double> noise(0, kAnchorNoiseSigma);
  for (int i = 0; i < kAlignmentTrials; ++i) {
    const RigidTransform t{random_rotation(rng), {uniform(rng, -5, 5), uniform(rng, -5, 5), uniform(rng, -5, 5)}};
    AnchorSet local = session;
    const RigidTransform inv = invert(t);
    for (auto& p : local.points)
      p.position = apply(inv, p.position) + Vec3{noise(rng), noise(rng), noise(rng)};
    const RigidTransform got = solve_alignment(session, local);
    worst_rms = std::max(worst_rms, alignment_rms(got, session, local));
  }
  return {worst < kAlignmentTolerance && worst_rms <= kNoisyRmsBound,
          "noiseless max error " + fmt(worst) + " (< " + fmt(kAlignmentTolerance) + "), noisy max rms " +
              fmt(worst_rms) + " m (<= " + fmt(kNoisyRmsBound) + ")"};
}

Outcome face_selection() {
  std::mt19937_64 rng(8);
  int agree = 0;
  for (int i = 0; i < kFaceTrials; ++i) {
    const Vec3 view = random_direction(rng);
    const UnitQuaternion q = random_rotation(rng);
    // Brute force: outward normal with the most negative dot product; the
    // enumeration order breaks ties.
    const Vec3 normals[6] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
    std::size_t best = 0;
    double best_dot = std::numeric_limits<double>::infinity();
    for (std::size_t f = 0; f < 6; ++f) {
      const double d = dot(view, q.rotate(normals[f]));
      if (d < best_dot) {
        best_dot = d;
        best = f;
      }
    }
    if (select_face(view, q) == kAllFaces[best]) ++agree;
  }
  return {agree == kFaceTrials, std::to_string(agree) + "/" + std::to_string(kFaceTrials) + " match brute force"};
}

Outcome snapshot_projection() {
  std::mt19937_64 rng(9);
  std::size_t checked = 0, bad = 0;
  for (int trial = 0; trial < kSnapshotTrials; ++trial) {
    std::vector<NormalizedPoint> pts(1 + rng() % 50);
    for (std::size_t i = 0; i < pts.size(); ++i)
      pts[i] = {i, unit_double(rng()), unit_double(rng()), unit_double(rng()), unit_double(rng()), unit_double(rng())};
    std::map<std::pair<int, int>, std::vector<SnapshotPoint>> by_face;
    for (const auto& face : kAllFaces) by_face[{static_cast<int>(face.axis), face.sign}] = project_snapshot(pts, face);
    for (int axis = 0; axis < 3; ++axis) {
      const int a = axis == 0 ? 1 : 0;
      const int b = axis == 2 ? 1 : 2;
      const auto& neg = by_face[{axis, -1}];
      const auto& pos = by_face[{axis, 1}];
      for (std::size_t i = 0; i < pts.size(); ++i) {
        const double c[3] = {pts[i].x, pts[i].y, pts[i].z};
        ++checked;
        const bool exact = neg[i].u == c[a] && neg[i].v == c[b] && pos[i].u == 1.0 - c[a] && pos[i].v == c[b] &&
                           neg[i].color == pts[i].color && neg[i].size == pts[i].size;
        const bool mirror = pos[i].u == 1.0 - neg[i].u && pos[i].v == neg[i].v;
        if (!exact || !mirror) ++bad;
      }
    }
  }
  return {bad == 0, std::to_string(checked - bad) + "/" + std::to_string(checked) +
                        " face/point pairs bit-equal with mirrored opposite faces"};
}

bool close_rel(double got, long double want) {
  if (want == 0) return got == 0;
  return std::fabs(static_cast<long double>(got) - want) <= kStatsRelTolerance * std::fabs(want);
}

Outcome statistics_and_bars() {
  std::mt19937_64 rng(10);
  std::size_t checks = 0, bad = 0;
  for (int d = 0; d < kStatsDatasets; ++d) {
    SyntheticSpec spec;
    spec.individuals = 1 + rng() % (kStatsMaxRows / 5);
    spec.years = 1 + rng() % 5;
    spec.missing_year_probability = 0.2;
    spec.seed = rng();
    const Dataset ds = generate_dataset(spec);
    FilterState f;
    f.year_range = {spec.first_year + static_cast<int>(rng() % 2), spec.first_year + static_cast<int>(spec.years)};
    if (rng() % 2) f.numeric_ranges["age"] = {uniform(rng, 20, 50), uniform(rng, 50, 90)};
    const RowSet vis = apply_filters(ds, f);

    const auto& cols = ds.numeric_columns();
    const auto stats = subset_statistics(ds, f, cols);
    for (std::size_t c = 0; c < cols.size(); ++c) {
      long double sum = 0;
      double lo = INFINITY, hi = -INFINITY;
      for (auto i : vis) {
        const double v = ds.row(i).values[c];
        sum += v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      ++checks;
      if (stats[c].count != vis.size()) {
        ++bad;
        continue;
      }
      if (vis.empty()) {
        if (stats[c].mean) ++bad;
        continue;
      }
      const long double mean = sum / vis.size();
      long double ss = 0;
      for (auto i : vis) ss += (ds.row(i).values[c] - mean) * (ds.row(i).values[c] - mean);
      const long double sd = std::sqrt(ss / vis.size());
      if (!close_rel(*stats[c].mean, mean) || !close_rel(*stats[c].stddev, sd) || *stats[c].min != lo ||
          *stats[c].max != hi)
        ++bad;
    }

    const std::string value_col = cols[rng() % cols.size()];
    const std::size_t k = *ds.numeric_index(value_col);
    std::map<std::pair<std::string, int>, std::pair<long double, std::size_t>> groups;
    for (auto i : vis) {
      auto& g = groups[{*ds.row(i).region, ds.row(i).year}];
      g.first += ds.row(i).values[k];
      ++g.second;
    }
    const BarGrid grid = aggregate_bars(ds, value_col, f);
    ++checks;
    if (grid.size() != groups.size()) {
      ++bad;
      continue;
    }
    long double lo = INFINITY, hi = -INFINITY;
    for (const auto& [key, g] : groups) {
      lo = std::min(lo, g.first / g.second);
      hi = std::max(hi, g.first / g.second);
    }
    for (const auto& [key, g] : groups) {
      ++checks;
      auto it = grid.find(BarKey{key.first, key.second});
      if (it == grid.end()) {
        ++bad;
        continue;
      }
      const long double mean = g.first / g.second;
      const long double height = hi > lo ? (mean - lo) / (hi - lo) : 0.5L;
      // Heights live on [0, 1]; compare them on that scale.
      if (it->second.count != g.second || !close_rel(it->second.value, mean) ||
          std::fabs(static_cast<long double>(it->second.height) - height) > kStatsRelTolerance)
        ++bad;
    }
  }
  return {bad == 0, std::to_string(checks - bad) + "/" + std::to_string(checks) + " checks within " +
                        fmt(kStatsRelTolerance) + " on " + std::to_string(kStatsDatasets) + " datasets"};
}

Outcome csv_round_trip() {
  std::mt19937_64 rng(11);
  int fixpoints = 0;
  for (int i = 0; i < kCsvFiles; ++i) {
    SyntheticSpec spec;
    spec.individuals = 1 + rng() % 40;
    spec.years = 1 + rng() % 6;
    spec.with_region = rng() % 2 == 0;
    spec.missing_year_probability = 0.3;
    spec.seed = rng();
    const std::string text = export_csv(generate_dataset(spec));
    const Dataset once = parse_csv(text);
    const std::string again = export_csv(once);
    if (again == text && parse_csv(again) == once) ++fixpoints;
  }
  const std::pair<ErrorCode, const char*> crafted[] = {
      {ErrorCode::MissingHeader, ""},
      {ErrorCode::DuplicateColumn, "id,year,bmi,bmi\np1,2020,1,2\n"},
      {ErrorCode::MissingIdOrYearColumn, "id,bmi\np1,1\n"},
      {ErrorCode::NonNumericValue, "id,year,zipcode,glucose\np1,2020,92093,abc\n"},
      {ErrorCode::DuplicateIdYearPair, "id,year,bmi\np1,2020,1\np1,2020,2\n"},
  };
  int classes = 0;
  for (const auto& [code, text] : crafted) {
    try {
      parse_csv(text);
    } catch (const Error& e) {
      if (e.code() == code) ++classes;
    }
  }
  return {fixpoints == kCsvFiles && classes == 5,
          std::to_string(fixpoints) + "/" + std::to_string(kCsvFiles) + " fixpoints, " + std::to_string(classes) +
              "/5 error classes raised"};
}

Outcome localization() {
  auto run = [](std::vector<std::string> langs) {
    Scenario sc;
    sc.participants = 2;
    sc.random_ops = 300;
    sc.net.seed = 31;
    sc.languages = std::move(langs);
    return run_scenario(sc);
  };
  const SimReport en = run({"en"}), ja = run({"ja"}), mixed = run({"en", "ja"});
  bool ok = en.converged && ja.converged && mixed.converged && en.canonical_digest == ja.canonical_digest &&
            en.canonical_digest == mixed.canonical_digest;
  for (const auto& b : mixed.bots) ok = ok && b.digest == mixed.canonical_digest;
  const bool labels_differ = mixed.bots.at(0).label != mixed.bots.at(1).label;
  const auto missing = completeness_check(TranslationTable::bundled());
  return {ok && labels_differ && missing.empty(),
          std::string("en/ja digests ") + (ok ? "equal" : "differ") + ", labels " +
              (labels_differ ? "localized" : "identical") + ", bundled table missing " +
              std::to_string(missing.size())};
}

Outcome input_arbitration() {
  // Oracle: a visible hand selects gaze; a controller action with no hand in
  // view selects the ray; every other event leaves the mode alone.
  auto oracle = [](InputState s, PointerSource e) {
    switch (e) {
      case PointerSource::HandVisible: return InputState{InputMode::GazeTap, true};
      case PointerSource::HandHidden: return InputState{s.mode, false};
      case PointerSource::ControllerButton:
      case PointerSource::ControllerOrientation:
        return s.hand_visible ? s : InputState{InputMode::RayPointer, false};
      default: return s;
    }
  };
  std::size_t cases = 0, bad = 0;
  const InputMode modes[] = {InputMode::GazeTap, InputMode::RayPointer};
  for (InputMode m : modes) {
    for (bool hand : {false, true}) {
      for (PointerSource e : kAllPointerSources) {
        ++cases;
        const InputState s{m, hand};
        if (arbitrate_input(s, {e, 0, std::nullopt}) != oracle(s, e)) ++bad;
      }
      // Every event sequence of length 4 from this start state.
      for (int code = 0; code < 625; ++code) {
        InputState got{m, hand}, want{m, hand};
        int c = code;
        for (int step = 0; step < 4; ++step, c /= 5) {
          const PointerSource e = kAllPointerSources[c % 5];
          got = arbitrate_input(got, {e, step, std::nullopt});
          want = oracle(want, e);
        }
        ++cases;
        if (got != want) ++bad;
      }
    }
  }
  return {bad == 0, std::to_string(cases - bad) + "/" + std::to_string(cases) + " mode x event cases"};
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"convergence", convergence},
      {"capacity", capacity},
      {"reconnect", reconnect},
      {"anchor-alignment", alignment},
      {"face-selection", face_selection},
      {"snapshot-projection", snapshot_projection},
      {"statistics-aggregation", statistics_and_bars},
      {"csv-round-trip", csv_round_trip},
      {"localization-isolation", localization},
      {"input-arbitration", input_arbitration},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("threw ") + e.what()};
    }
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
