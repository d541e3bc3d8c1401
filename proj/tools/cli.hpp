#pragma once

// The `datacube` command: serve, simulate, validate, export.
//
// Exit codes: 0 success, 1 validation failure or divergence, 2 usage or
// configuration error.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "datacube/error.hpp"

namespace datacube::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

int exit_code_for(ErrorCode code) noexcept;

struct ServeOptions {
  std::string session_id = "datacube";
  std::string bind_address = "0.0.0.0";
  std::uint16_t port = 47800;
  std::uint16_t ws_port = 47801;
  std::uint16_t discovery_port = 47799;
  std::filesystem::path data_dir = "datacube-data";
  std::vector<std::filesystem::path> datasets;
  std::filesystem::path ui_root;
  std::optional<std::filesystem::path> lang_table;
  std::size_t capacity = 6;
  // Stop after this long; 0 runs until `stop` is set.
  std::int64_t run_for_ms = 0;
};

// Runs until `stop` becomes true, then persists artifacts. Throws Error.
void serve(const ServeOptions& options, const std::atomic<bool>& stop, std::ostream& out);

struct SimulateOptions {
  std::filesystem::path scenario;
  std::optional<std::uint64_t> seed;
  bool real_sockets = false;
  std::optional<std::filesystem::path> lang_table;
};

// Prints the report to `out` and returns the exit code.
int simulate(const SimulateOptions& options, std::ostream& out, std::ostream& err);

// Prints the schema report; returns 0 iff the file is valid.
int validate(const std::filesystem::path& csv, std::ostream& out);

struct ExportOptions {
  std::filesystem::path input;
  std::optional<std::filesystem::path> output;
  std::vector<std::string> individuals;
  std::optional<int> year_from;
  std::optional<int> year_to;
};

void export_subset(const ExportOptions& options, std::ostream& out);

// Parses arguments and dispatches. Never throws.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace datacube::cli
