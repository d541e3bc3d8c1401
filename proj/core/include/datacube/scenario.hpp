#pragma once

// Scripted and randomized multi-client sessions over SimNetwork, with a
// convergence report.
//
// Scenario files hold one directive per line; `#` starts a comment.
//
//   session <id>                       participants <n>      observers <n>
//   capacity <n>                       seed <u64>            languages <code>...
//   latency_ms <min> <max>             drop_probability <p>  drop_window_ms <ms>
//   dataset <individuals> <years>      random_ops <n>        op_interval_ms <ms>
//   ops_start_ms <ms>                  join_stagger_ms <ms>  settle_ms <ms>
//   max_time_ms <ms>                   offsets random|none   anchor_noise_m <sigma>
//   join <bot> <at_ms>                 leave <bot> <at_ms>   rejoin <bot> <at_ms>
//   disconnect <bot> <at_ms> <duration_ms> [silent]
//   corrupt <bot> <seq>
//   op <at_ms> <bot> <kind> <args>...
//
// Script op kinds:
//   move <object> <x> <y> <z> [<yaw_deg> [<scale>]]
//   mapping <x> <y> <z> <color> <size> [traces]
//   filter-year <lo> <hi>              filter-range <column> <lo> <hi>
//   filter-regions <region>...         filter-clear
//   viz scatter|bar                    select <row>|none
//   watch <individual>                 unwatch <individual>
//   snapshot [<face>]                  delete <snapshot-id>
//   pose <x> <y> <z> [<yaw_deg>]
//
// Bots are numbered from 0: participants first, then observers.

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "datacube/client.hpp"
#include "datacube/localization.hpp"
#include "datacube/protocol.hpp"
#include "datacube/simnet.hpp"

namespace datacube {

struct ScriptedOp {
  std::int64_t at_ms = 0;
  std::size_t bot = 0;
  std::string kind;
  std::vector<std::string> args;
  std::size_t line = 0;
};

struct BotEvent {
  enum class Kind { Join, Leave, Rejoin };
  Kind kind = Kind::Join;
  std::size_t bot = 0;
  std::int64_t at_ms = 0;
};

struct Scenario {
  std::string session_id = "sim";
  std::size_t participants = 5;
  std::size_t observers = 0;
  std::size_t capacity = 6;
  std::vector<std::string> languages{"en"};
  std::size_t dataset_individuals = 12;
  std::size_t dataset_years = 4;
  std::size_t random_ops = 1000;
  std::int64_t op_interval_ms = 5;
  std::int64_t ops_start_ms = 1'500;
  std::int64_t join_stagger_ms = 0;
  std::int64_t settle_ms = 5'000;
  std::int64_t max_time_ms = 600'000;
  bool random_offsets = true;
  double anchor_noise_m = 0.0;
  SimNetConfig net;
  std::vector<BotEvent> bot_events;
  std::vector<ScriptedOp> script;
  std::vector<std::pair<std::size_t, std::uint64_t>> corruptions;

  std::size_t bot_count() const noexcept { return participants + observers; }
  // Throws ScenarioParseError for out-of-range bot indices and the like.
  void validate() const;
};

// Throws ScenarioParseError with the offending line number.
Scenario parse_scenario(std::string_view text);

struct BotReport {
  std::string name;
  std::string client_id;
  Role role = Role::Participant;
  std::string language;
  std::string label;  // a localized UI string rendered by the bot
  ClientPhase phase = ClientPhase::Idle;
  bool expected_connected = false;
  std::uint64_t digest = 0;
  std::uint64_t server_seq = 0;
  std::size_t submitted = 0;
  std::map<std::string, std::size_t> rejections;  // error code -> count
  std::optional<ErrorCode> failure;
  std::size_t welcomes = 0;
  std::size_t full_state_requests = 0;
  double alignment_error = 0.0;  // vs. the true device offset
  bool converged = false;
  // First seq at which this replica's history departs from the server log.
  std::optional<std::uint64_t> first_divergent_seq;
  std::string divergence_detail;
};

struct SimReport {
  std::uint64_t seed = 0;
  bool converged = false;
  bool quiesced = false;
  std::uint64_t canonical_digest = 0;
  std::uint64_t server_seq = 0;
  std::size_t participants_admitted = 0;
  std::size_t observers_admitted = 0;
  std::size_t max_participants_seen = 0;
  std::size_t session_full_rejections = 0;
  std::size_t ops_submitted = 0;
  std::size_t ops_rejected = 0;
  // Loopback runs measure wall-clock time instead of simulated time.
  bool real_time = false;
  std::int64_t virtual_time_ms = 0;
  std::int64_t ops_phase_ms = 0;
  SimNetStats net;
  std::vector<BotReport> bots;
  std::vector<std::string> server_warnings;

  // Deterministic text form: identical scenario and seed give identical bytes.
  std::string text() const;
};

// Dataset the server loads at the start of a run.
Dataset scenario_dataset(const Scenario& scenario);

// One random op drawn against the client's replica. Pose ops move the
// client's head pose first. Observers only ever get pose ops.
OpPayload make_random_op(SessionClient& client, const Dataset& dataset, std::mt19937_64& rng);

// Runs the scenario to quiescence (or max_time_ms). Throws
// ScenarioParseError for script ops that cannot be built.
SimReport run_scenario(const Scenario& scenario, const Localizer& localizer);
SimReport run_scenario(const Scenario& scenario);

}  // namespace datacube
