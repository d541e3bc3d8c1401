#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "datacube/dataset.hpp"
#include "datacube/localization.hpp"
#include "datacube/net.hpp"
#include "datacube/numfmt.hpp"
#include "datacube/scenario.hpp"
#include "datacube/server.hpp"

namespace datacube::cli {

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Error(ErrorCode::IoError, "read failed: " + path.string());
  return ss.str();
}

Localizer make_localizer(const std::optional<std::filesystem::path>& lang_table) {
  if (!lang_table) return Localizer{};
  TranslationTable table = TranslationTable::load(*lang_table);
  const auto missing = completeness_check(table);
  if (missing.empty()) {
    spdlog::info("translation table {}: {} entries, complete", lang_table->string(), table.entry_count());
  } else {
    spdlog::warn("translation table {}: {} missing entries", lang_table->string(), missing.size());
    for (const auto& m : missing) spdlog::warn("  missing {} [{}]", m.key, m.language);
  }
  return Localizer(std::move(table));
}

}  // namespace

int exit_code_for(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::BadConfig:
    case ErrorCode::PortInUse:
      return kExitUsage;
    default:
      return kExitFailure;
  }
}

void serve(const ServeOptions& opt, const std::atomic<bool>& stop, std::ostream& out) {
  if (opt.capacity == 0) throw Error(ErrorCode::BadConfig, "capacity must be positive");
  const Localizer localizer = make_localizer(opt.lang_table);

  SystemClock clock;
  ServerConfig scfg;
  scfg.session_id = opt.session_id;
  scfg.capacity = opt.capacity;
  SessionServer core(scfg, clock);

  std::optional<Dataset> first;
  for (const auto& path : opt.datasets) {
    Dataset ds = parse_csv(read_file(path));
    spdlog::info("dataset {}: {} rows, hash {}", path.string(), ds.size(), content_hash(ds));
    if (!first) first = ds;
    core.register_dataset(std::move(ds));
  }
  if (first) core.submit_server_op(op::LoadDataset{content_hash(*first), first->columns()});

  NetServerConfig ncfg;
  ncfg.bind_address = opt.bind_address;
  ncfg.tcp_port = opt.port;
  ncfg.ws_port = opt.ws_port;
  ncfg.discovery_port = opt.discovery_port;
  ncfg.ui_root = opt.ui_root;
  NetServer server(core, ncfg);
  server.start();
  out << "session " << opt.session_id << " tcp " << server.tcp_port() << " websocket " << server.ws_port()
      << " discovery " << server.discovery_port() << std::endl;

  const auto started = std::chrono::steady_clock::now();
  while (!stop.load()) {
    if (opt.run_for_ms > 0 && std::chrono::steady_clock::now() - started >= std::chrono::milliseconds(opt.run_for_ms)) {
      break;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  server.stop();

  try {
    const auto written = persist_artifacts(opt.data_dir, opt.session_id, core.state(), core.loaded_dataset());
    for (const auto& p : written) out << "wrote " << p.string() << "\n";
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NoDatasetLoaded) throw;
    spdlog::warn("no dataset loaded; nothing to persist");
  }
  out << "session " << opt.session_id << " stopped at seq " << core.state().server_seq << std::endl;
}

int simulate(const SimulateOptions& opt, std::ostream& out, std::ostream& err) {
  Scenario sc = parse_scenario(read_file(opt.scenario));
  if (opt.seed) sc.net.seed = *opt.seed;
  const Localizer localizer = make_localizer(opt.lang_table);

  const auto t0 = std::chrono::steady_clock::now();
  const SimReport rep = opt.real_sockets ? run_scenario_over_loopback(sc, localizer) : run_scenario(sc, localizer);
  const double wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  out << rep.text();
  err << "wall_clock " << format_significant(wall_s, 4) << " s, "
      << (wall_s > 0 ? format_significant(static_cast<double>(rep.ops_submitted) / wall_s, 4) : std::string("n/a"))
      << " ops/s\n";
  if (!rep.converged) {
    err << to_string(ErrorCode::DivergenceDetected) << ": "
        << (rep.quiesced ? "replica digests differ from canonical" : "session did not quiesce") << "\n";
    return kExitFailure;
  }
  return kExitOk;
}

int validate(const std::filesystem::path& csv, std::ostream& out) {
  const CsvReport report = validate_csv(read_file(csv));
  out << "file " << csv.string() << "\n";
  if (report.dataset) {
    const Dataset& ds = *report.dataset;
    out << "columns " << ds.columns().size() << "\n";
    for (const auto& c : ds.columns()) out << "  " << c.name << " " << to_string(c.kind) << "\n";
    out << "rows " << ds.size() << "\n";
    out << "individuals " << ds.individuals().size() << "\n";
    out << "content_hash " << content_hash(ds) << "\n";
    out << "valid\n";
    return kExitOk;
  }
  out << "errors " << report.issues.size() << "\n";
  for (const auto& issue : report.issues) {
    out << "line " << issue.line << ": " << to_string(issue.code);
    if (!issue.column.empty()) out << " [" << issue.column << "]";
    out << ": " << issue.message << "\n";
  }
  out << "invalid\n";
  return kExitFailure;
}

void export_subset(const ExportOptions& opt, std::ostream& out) {
  const Dataset ds = parse_csv(read_file(opt.input));
  for (const auto& id : opt.individuals) {
    if (!ds.has_individual(id)) throw Error(ErrorCode::UnknownIndividual, id);
  }
  FilterState filter;
  if (opt.year_from) filter.year_range.lo = *opt.year_from;
  if (opt.year_to) filter.year_range.hi = *opt.year_to;
  validate_filter(ds, filter);
  RowSet rows;
  for (std::size_t i : apply_filters(ds, filter)) {
    if (opt.individuals.empty() ||
        std::find(opt.individuals.begin(), opt.individuals.end(), ds.row(i).individual_id) != opt.individuals.end()) {
      rows.push_back(i);
    }
  }
  const std::string text = export_csv(ds, rows);
  if (!opt.output) {
    out << text;
    return;
  }
  std::ofstream f(*opt.output, std::ios::binary | std::ios::trunc);
  f << text;
  if (!f) throw Error(ErrorCode::IoError, "cannot write " + opt.output->string());
}

namespace {
std::atomic<bool> g_stop{false};
extern "C" void on_signal(int) { g_stop.store(true); }
}  // namespace

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"datacube: collaborative data cube session server and tools"};
  app.require_subcommand(1);

  ServeOptions serve_opt;
  auto* serve_cmd = app.add_subcommand("serve", "run the session server");
  serve_cmd->add_option("--port", serve_opt.port, "TCP port for framed clients");
  serve_cmd->add_option("--ws-port", serve_opt.ws_port, "WebSocket and /ui port");
  serve_cmd->add_option("--discovery-port", serve_opt.discovery_port, "UDP discovery port");
  serve_cmd->add_option("--bind", serve_opt.bind_address, "listen address");
  serve_cmd->add_option("--session", serve_opt.session_id, "session id");
  serve_cmd->add_option("--data-dir", serve_opt.data_dir, "artifact directory");
  serve_cmd->add_option("--dataset", serve_opt.datasets, "CSV dataset (repeatable; the first is loaded)")
      ->check(CLI::ExistingFile);
  serve_cmd->add_option("--ui-root", serve_opt.ui_root, "static files served under /ui");
  serve_cmd->add_option("--lang-table", serve_opt.lang_table, "translation table to check");
  serve_cmd->add_option("--capacity", serve_opt.capacity, "participant limit");
  serve_cmd->add_option("--run-for-ms", serve_opt.run_for_ms, "stop after this many milliseconds");

  SimulateOptions sim_opt;
  auto* sim_cmd = app.add_subcommand("simulate", "run a scenario against an in-process server");
  sim_cmd->add_option("--scenario", sim_opt.scenario, "scenario file")->required();
  sim_cmd->add_option("--seed", sim_opt.seed, "override the scenario seed");
  sim_cmd->add_flag("--real-sockets", sim_opt.real_sockets, "use loopback TCP instead of the simulated network");
  sim_cmd->add_option("--lang-table", sim_opt.lang_table, "translation table for bot labels");

  std::filesystem::path validate_path;
  auto* validate_cmd = app.add_subcommand("validate", "check a CSV dataset");
  validate_cmd->add_option("csv", validate_path, "dataset file")->required();

  ExportOptions export_opt;
  auto* export_cmd = app.add_subcommand("export", "write a subset of a CSV dataset");
  export_cmd->add_option("csv", export_opt.input, "dataset file")->required();
  export_cmd->add_option("--individuals", export_opt.individuals, "individual ids")->delimiter(',');
  export_cmd->add_option("--year-from", export_opt.year_from, "first year, inclusive");
  export_cmd->add_option("--year-to", export_opt.year_to, "last year, inclusive");
  export_cmd->add_option("-o,--output", export_opt.output, "output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*serve_cmd) {
      g_stop.store(false);
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      serve(serve_opt, g_stop, out);
      return kExitOk;
    }
    if (*sim_cmd) return simulate(sim_opt, out, err);
    if (*validate_cmd) return validate(validate_path, out);
    if (*export_cmd) {
      export_subset(export_opt, out);
      return kExitOk;
    }
  } catch (const Error& e) {
    err << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace datacube::cli
