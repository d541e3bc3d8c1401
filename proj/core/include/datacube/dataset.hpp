#pragma once

// Population health dataset: CSV ingestion and export, filtering, and the
// mapping of records onto the six visual channels of the cube.
//
// File format: UTF-8, comma separated, header row first. `id` and `year`
// are required, `zipcode` is the optional region column, and every other
// column is numeric. Values must not contain quotes or commas.

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "datacube/error.hpp"

namespace datacube {

enum class ColumnKind { Id, Year, Region, Numeric };

std::string_view to_string(ColumnKind kind) noexcept;
std::optional<ColumnKind> column_kind_from_string(std::string_view name) noexcept;

// Column-name conventions of the file format.
inline constexpr std::string_view kIdColumn = "id";
inline constexpr std::string_view kYearColumn = "year";
inline constexpr std::string_view kRegionColumn = "zipcode";

inline constexpr int kMinYear = 1900;
inline constexpr int kMaxYear = 2200;

struct ColumnDescriptor {
  std::string name;
  ColumnKind kind = ColumnKind::Numeric;

  bool operator==(const ColumnDescriptor&) const = default;
};

// Kind implied by a header name.
ColumnKind kind_for_column_name(std::string_view name) noexcept;

struct Record {
  std::string individual_id;
  int year = 0;
  std::optional<std::string> region;
  // One value per Numeric column, in schema order.
  std::vector<double> values;

  bool operator==(const Record&) const = default;
};

using RowSet = std::vector<std::size_t>;

class Dataset {
 public:
  // Validates every invariant; throws Error on violation.
  static Dataset create(std::vector<ColumnDescriptor> columns,
                        std::vector<Record> rows);

  const std::vector<ColumnDescriptor>& columns() const noexcept { return columns_; }
  const std::vector<Record>& rows() const noexcept { return rows_; }
  const Record& row(std::size_t index) const;
  std::size_t size() const noexcept { return rows_.size(); }
  bool empty() const noexcept { return rows_.empty(); }

  // individual id -> row indices ordered by ascending year.
  const std::map<std::string, std::vector<std::size_t>>& individuals() const noexcept {
    return individuals_;
  }
  bool has_individual(std::string_view id) const;

  bool has_region() const noexcept { return has_region_; }
  const std::vector<std::string>& numeric_columns() const noexcept { return numeric_names_; }
  // Position of a Numeric column within Record::values.
  std::optional<std::size_t> numeric_index(std::string_view column) const noexcept;
  // Same, throwing UnknownColumn.
  std::size_t require_numeric(std::string_view column) const;

  bool operator==(const Dataset& other) const {
    return columns_ == other.columns_ && rows_ == other.rows_;
  }

 private:
  std::vector<ColumnDescriptor> columns_;
  std::vector<Record> rows_;
  std::map<std::string, std::vector<std::size_t>> individuals_;
  std::vector<std::string> numeric_names_;
  bool has_region_ = false;
};

struct ParseIssue {
  ErrorCode code;
  std::size_t line = 0;             // 1-based line in the input text
  std::optional<std::size_t> row;   // 1-based data row
  std::string column;
  std::string message;
};

// Throws the first problem found as an Error.
Dataset parse_csv(std::string_view text);

// Collects every problem instead of stopping at the first. The dataset is
// present only when the list of issues is empty.
struct CsvReport {
  std::optional<Dataset> dataset;
  std::vector<ParseIssue> issues;
};
CsvReport validate_csv(std::string_view text);

std::string export_csv(const Dataset& dataset, std::span<const std::size_t> rows);
std::string export_csv(const Dataset& dataset);

// Hex digest of the full export; identifies a dataset in session state.
std::string content_hash(const Dataset& dataset);

struct NumericRange {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();

  bool contains(double v) const noexcept { return lo <= v && v <= hi; }
  bool operator==(const NumericRange&) const = default;
};

struct YearRange {
  int lo = kMinYear;
  int hi = kMaxYear;

  bool contains(int y) const noexcept { return lo <= y && y <= hi; }
  bool operator==(const YearRange&) const = default;
};

struct FilterState {
  std::map<std::string, NumericRange> numeric_ranges;
  YearRange year_range;
  std::optional<std::set<std::string>> regions;

  bool operator==(const FilterState&) const = default;
};

// Throws InvalidRange or UnknownColumn.
void validate_filter(const Dataset& dataset, const FilterState& filter);

// Visible rows in ascending order. Bounds are inclusive.
RowSet apply_filters(const Dataset& dataset, const FilterState& filter);

RowSet all_rows(const Dataset& dataset);

// (v - min) / (max - min) over the full dataset; constant columns map to 0.5.
std::vector<double> normalize_channel(const Dataset& dataset, std::string_view column);

struct DimensionMapping {
  std::string x;
  std::string y;
  std::string z;
  std::string color;
  std::string size;
  bool traces_enabled = false;

  bool operator==(const DimensionMapping&) const = default;
};

void validate_mapping(const Dataset& dataset, const DimensionMapping& mapping);

// Cycles through the numeric columns in schema order.
DimensionMapping default_mapping(std::span<const std::string> numeric_columns);

struct NormalizedPoint {
  std::size_t row_index = 0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double color = 0.0;  // colormap parameter in [0, 1]
  double size = 0.0;   // sphere size parameter in [0, 1]

  bool operator==(const NormalizedPoint&) const = default;
};

std::vector<NormalizedPoint> project_points(const Dataset& dataset,
                                            const DimensionMapping& mapping,
                                            std::span<const std::size_t> visible);

struct Trace {
  std::string individual_id;
  std::vector<NormalizedPoint> vertices;  // ascending year

  bool operator==(const Trace&) const = default;
};

// Empty when traces are disabled or no individual has two visible rows.
std::vector<Trace> build_traces(const Dataset& dataset, const DimensionMapping& mapping,
                                std::span<const std::size_t> visible);

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  bool operator==(const Rgb&) const = default;
};

// Blue -> green -> yellow -> red, piecewise linear; input clamped to [0, 1].
Rgb colormap(double t);

// Unrounded channel values of the colormap, for continuity checks.
std::array<double, 3> colormap_exact(double t);

// Sphere radius as a fraction of the cube edge for a normalized size.
inline constexpr double kMinSphereRadius = 0.004;
inline constexpr double kMaxSphereRadius = 0.02;
inline double sphere_radius(double size) {
  return kMinSphereRadius + (kMaxSphereRadius - kMinSphereRadius) * size;
}

std::vector<std::pair<std::string, std::string>> record_detail(const Dataset& dataset,
                                                               std::size_t row_index);

struct WatchEntry {
  std::string individual_id;
  std::int64_t created_at_ms = 0;

  bool operator==(const WatchEntry&) const = default;
};

// Insertion-ordered set of individuals flagged for later study.
class Watchlist {
 public:
  const std::vector<WatchEntry>& entries() const noexcept { return entries_; }
  bool contains(std::string_view id) const noexcept;
  std::size_t size() const noexcept { return entries_.size(); }

  // Idempotent; returns false if the id was already present.
  bool insert(std::string id, std::int64_t created_at_ms);
  bool erase(std::string_view id);

  bool operator==(const Watchlist&) const = default;

 private:
  std::vector<WatchEntry> entries_;
};

// Throws UnknownIndividual if the dataset has no rows for the id.
Watchlist watchlist_add(Watchlist watchlist, const Dataset& dataset, std::string_view id,
                        std::int64_t created_at_ms);

// All rows of the listed individuals, in list order then ascending year.
std::string watchlist_export(const Watchlist& watchlist, const Dataset& dataset);

}  // namespace datacube
