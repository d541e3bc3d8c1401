#include "datacube/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>
#include <unordered_map>

#include "datacube/numfmt.hpp"

namespace datacube {

std::string_view to_string(ColumnKind kind) noexcept {
  switch (kind) {
    case ColumnKind::Id: return "Id";
    case ColumnKind::Year: return "Year";
    case ColumnKind::Region: return "Region";
    case ColumnKind::Numeric: return "Numeric";
  }
  return "Numeric";
}

std::optional<ColumnKind> column_kind_from_string(std::string_view name) noexcept {
  if (name == "Id") return ColumnKind::Id;
  if (name == "Year") return ColumnKind::Year;
  if (name == "Region") return ColumnKind::Region;
  if (name == "Numeric") return ColumnKind::Numeric;
  return std::nullopt;
}

ColumnKind kind_for_column_name(std::string_view name) noexcept {
  if (name == kIdColumn) return ColumnKind::Id;
  if (name == kYearColumn) return ColumnKind::Year;
  if (name == kRegionColumn) return ColumnKind::Region;
  return ColumnKind::Numeric;
}

// ---------------------------------------------------------------------------
// Dataset

namespace {

bool contains_separator(std::string_view s) {
  return s.find(',') != std::string_view::npos || s.find('"') != std::string_view::npos ||
         s.find('\n') != std::string_view::npos || s.find('\r') != std::string_view::npos;
}

}  // namespace

Dataset Dataset::create(std::vector<ColumnDescriptor> columns, std::vector<Record> rows) {
  Dataset ds;
  std::set<std::string, std::less<>> names;
  int ids = 0;
  int years = 0;
  int regions = 0;
  for (const auto& col : columns) {
    if (col.name.empty()) throw Error(ErrorCode::InvalidField, "empty column name");
    if (contains_separator(col.name))
      throw Error(ErrorCode::QuotedValueUnsupported, "column name `" + col.name + "`");
    if (!names.insert(col.name).second)
      throw Error(ErrorCode::DuplicateColumn, "column `" + col.name + "`");
    switch (col.kind) {
      case ColumnKind::Id: ++ids; break;
      case ColumnKind::Year: ++years; break;
      case ColumnKind::Region: ++regions; break;
      case ColumnKind::Numeric: ds.numeric_names_.push_back(col.name); break;
    }
  }
  if (ids != 1 || years != 1)
    throw Error(ErrorCode::MissingIdOrYearColumn, "exactly one id and one year column required");
  if (regions > 1) throw Error(ErrorCode::DuplicateColumn, "more than one region column");
  ds.has_region_ = regions == 1;

  std::set<std::pair<std::string, int>> seen;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Record& r = rows[i];
    const std::string where = "row " + std::to_string(i + 1);
    if (r.individual_id.empty()) throw Error(ErrorCode::InvalidField, where + ": empty id");
    if (contains_separator(r.individual_id))
      throw Error(ErrorCode::QuotedValueUnsupported, where + ": id `" + r.individual_id + "`");
    if (r.year < kMinYear || r.year > kMaxYear)
      throw Error(ErrorCode::InvalidField, where + ": year " + std::to_string(r.year));
    if (r.region.has_value() != ds.has_region_)
      throw Error(ErrorCode::ColumnCountMismatch, where + ": region presence");
    if (r.region && contains_separator(*r.region))
      throw Error(ErrorCode::QuotedValueUnsupported, where + ": region `" + *r.region + "`");
    if (r.values.size() != ds.numeric_names_.size())
      throw Error(ErrorCode::ColumnCountMismatch, where);
    for (std::size_t k = 0; k < r.values.size(); ++k) {
      if (!std::isfinite(r.values[k]))
        throw Error(ErrorCode::NonNumericValue, where + ", column `" + ds.numeric_names_[k] + "`");
    }
    if (!seen.emplace(r.individual_id, r.year).second)
      throw Error(ErrorCode::DuplicateIdYearPair,
                  where + ": (" + r.individual_id + ", " + std::to_string(r.year) + ")");
  }

  ds.columns_ = std::move(columns);
  ds.rows_ = std::move(rows);
  for (std::size_t i = 0; i < ds.rows_.size(); ++i) {
    ds.individuals_[ds.rows_[i].individual_id].push_back(i);
  }
  for (auto& [id, idx] : ds.individuals_) {
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return ds.rows_[a].year < ds.rows_[b].year;
    });
  }
  return ds;
}

const Record& Dataset::row(std::size_t index) const {
  if (index >= rows_.size())
    throw Error(ErrorCode::IndexOutOfRange,
                "row " + std::to_string(index) + " of " + std::to_string(rows_.size()));
  return rows_[index];
}

bool Dataset::has_individual(std::string_view id) const {
  return individuals_.find(std::string(id)) != individuals_.end();
}

std::optional<std::size_t> Dataset::numeric_index(std::string_view column) const noexcept {
  for (std::size_t i = 0; i < numeric_names_.size(); ++i) {
    if (numeric_names_[i] == column) return i;
  }
  return std::nullopt;
}

std::size_t Dataset::require_numeric(std::string_view column) const {
  if (auto idx = numeric_index(column)) return *idx;
  throw Error(ErrorCode::UnknownColumn, "no numeric column `" + std::string(column) + "`");
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

std::optional<double> parse_double(std::string_view s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::optional<int> parse_int(std::string_view s) {
  if (s.empty()) return std::nullopt;
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

class CsvParser {
 public:
  CsvParser(std::string_view text, bool stop_at_first)
      : text_(text), stop_at_first_(stop_at_first) {}

  CsvReport run() {
    CsvReport report;
    try {
      parse();
    } catch (const StopParsing&) {
    }
    report.issues = std::move(issues_);
    if (report.issues.empty()) {
      report.dataset = Dataset::create(std::move(columns_), std::move(rows_));
    }
    return report;
  }

 private:
  struct StopParsing {};

  void issue(ErrorCode code, std::size_t line, std::optional<std::size_t> row,
             std::string column, std::string message) {
    issues_.push_back(ParseIssue{code, line, row, std::move(column), std::move(message)});
    if (stop_at_first_) throw StopParsing{};
  }

  std::vector<std::string_view> lines() const {
    std::string_view text = text_;
    if (text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (start <= text.size()) {
      std::size_t nl = text.find('\n', start);
      std::string_view line =
          nl == std::string_view::npos ? text.substr(start) : text.substr(start, nl - start);
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      out.push_back(line);
      if (nl == std::string_view::npos) break;
      start = nl + 1;
    }
    // A trailing newline does not introduce an extra record.
    if (!out.empty() && out.back().empty()) out.pop_back();
    return out;
  }

  void parse() {
    auto all = lines();
    if (all.empty() || all.front().empty()) {
      issue(ErrorCode::MissingHeader, 1, std::nullopt, "", "input has no header line");
      throw StopParsing{};
    }
    parse_header(all.front());
    if (header_broken_) throw StopParsing{};
    for (std::size_t i = 1; i < all.size(); ++i) parse_row(all[i], i + 1, i);
  }

  void parse_header(std::string_view line) {
    std::set<std::string_view> names;
    bool has_id = false;
    bool has_year = false;
    for (auto field : split_fields(line)) {
      if (field.find('"') != std::string_view::npos) {
        issue(ErrorCode::QuotedValueUnsupported, 1, std::nullopt, std::string(field),
              "quoted header field");
        header_broken_ = true;
        continue;
      }
      if (field.empty()) {
        issue(ErrorCode::InvalidField, 1, std::nullopt, "", "empty column name");
        header_broken_ = true;
        continue;
      }
      if (!names.insert(field).second) {
        issue(ErrorCode::DuplicateColumn, 1, std::nullopt, std::string(field),
              "duplicate column `" + std::string(field) + "`");
        header_broken_ = true;
        continue;
      }
      ColumnKind kind = kind_for_column_name(field);
      has_id = has_id || kind == ColumnKind::Id;
      has_year = has_year || kind == ColumnKind::Year;
      columns_.push_back(ColumnDescriptor{std::string(field), kind});
    }
    if (!has_id || !has_year) {
      issue(ErrorCode::MissingIdOrYearColumn, 1, std::nullopt,
            !has_id ? std::string(kIdColumn) : std::string(kYearColumn),
            "header line 1 lacks required column `" +
                std::string(!has_id ? kIdColumn : kYearColumn) + "`");
      header_broken_ = true;
    }
  }

  void parse_row(std::string_view line, std::size_t line_no, std::size_t row_no) {
    auto fields = split_fields(line);
    if (fields.size() != columns_.size()) {
      issue(ErrorCode::ColumnCountMismatch, line_no, row_no, "",
            "expected " + std::to_string(columns_.size()) + " fields, found " +
                std::to_string(fields.size()));
      return;
    }
    Record rec;
    bool ok = true;
    for (std::size_t c = 0; c < fields.size(); ++c) {
      const auto& col = columns_[c];
      std::string_view f = fields[c];
      if (f.find('"') != std::string_view::npos) {
        issue(ErrorCode::QuotedValueUnsupported, line_no, row_no, col.name, "quoted value");
        ok = false;
        continue;
      }
      switch (col.kind) {
        case ColumnKind::Id:
          if (f.empty()) {
            issue(ErrorCode::InvalidField, line_no, row_no, col.name, "empty id");
            ok = false;
          }
          rec.individual_id = std::string(f);
          break;
        case ColumnKind::Year:
          if (auto y = parse_int(f)) {
            if (*y < kMinYear || *y > kMaxYear) {
              issue(ErrorCode::InvalidField, line_no, row_no, col.name,
                    "year " + std::string(f) + " outside [1900, 2200]");
              ok = false;
            }
            rec.year = *y;
          } else {
            issue(ErrorCode::NonNumericValue, line_no, row_no, col.name,
                  "`" + std::string(f) + "` is not an integer year");
            ok = false;
          }
          break;
        case ColumnKind::Region:
          rec.region = std::string(f);
          break;
        case ColumnKind::Numeric:
          if (auto v = parse_double(f)) {
            rec.values.push_back(*v);
          } else {
            issue(ErrorCode::NonNumericValue, line_no, row_no, col.name,
                  "`" + std::string(f) + "` is not a finite number");
            rec.values.push_back(0.0);
            ok = false;
          }
          break;
      }
    }
    if (!ok) return;
    if (!seen_.emplace(rec.individual_id, rec.year).second) {
      issue(ErrorCode::DuplicateIdYearPair, line_no, row_no, "",
            "(" + rec.individual_id + ", " + std::to_string(rec.year) + ") repeated");
      return;
    }
    rows_.push_back(std::move(rec));
  }

  std::string_view text_;
  bool stop_at_first_;
  bool header_broken_ = false;
  std::vector<ParseIssue> issues_;
  std::vector<ColumnDescriptor> columns_;
  std::vector<Record> rows_;
  std::set<std::pair<std::string, int>> seen_;
};

}  // namespace

Dataset parse_csv(std::string_view text) {
  CsvReport report = CsvParser(text, true).run();
  if (!report.issues.empty()) {
    const ParseIssue& first = report.issues.front();
    std::string where = "line " + std::to_string(first.line);
    if (first.row) where += ", row " + std::to_string(*first.row);
    if (!first.column.empty()) where += ", column `" + first.column + "`";
    throw Error(first.code, where + ": " + first.message);
  }
  return std::move(*report.dataset);
}

CsvReport validate_csv(std::string_view text) {
  return CsvParser(text, false).run();
}

std::string export_csv(const Dataset& dataset, std::span<const std::size_t> rows) {
  for (std::size_t idx : rows) (void)dataset.row(idx);
  std::string out;
  const auto& cols = dataset.columns();
  for (std::size_t c = 0; c < cols.size(); ++c) {
    if (c) out += ',';
    out += cols[c].name;
  }
  out += '\n';
  for (std::size_t idx : rows) {
    const Record& r = dataset.rows()[idx];
    std::size_t numeric = 0;
    for (std::size_t c = 0; c < cols.size(); ++c) {
      if (c) out += ',';
      switch (cols[c].kind) {
        case ColumnKind::Id: out += r.individual_id; break;
        case ColumnKind::Year: out += std::to_string(r.year); break;
        case ColumnKind::Region: out += r.region.value_or(""); break;
        case ColumnKind::Numeric: out += format_shortest(r.values[numeric++]); break;
      }
    }
    out += '\n';
  }
  return out;
}

std::string export_csv(const Dataset& dataset) {
  RowSet rows = all_rows(dataset);
  return export_csv(dataset, rows);
}

std::string content_hash(const Dataset& dataset) {
  return to_hex(fnv1a64(export_csv(dataset)));
}

// ---------------------------------------------------------------------------
// Filtering and channel mapping

void validate_filter(const Dataset& dataset, const FilterState& filter) {
  if (filter.year_range.lo > filter.year_range.hi)
    throw Error(ErrorCode::InvalidRange, "year range lo > hi");
  for (const auto& [col, range] : filter.numeric_ranges) {
    (void)dataset.require_numeric(col);
    if (std::isnan(range.lo) || std::isnan(range.hi) || range.lo > range.hi)
      throw Error(ErrorCode::InvalidRange, "range on `" + col + "`");
  }
  if (filter.regions && !dataset.has_region())
    throw Error(ErrorCode::NoRegionColumn, "region filter without `zipcode` column");
}

RowSet apply_filters(const Dataset& dataset, const FilterState& filter) {
  validate_filter(dataset, filter);
  std::vector<std::pair<std::size_t, NumericRange>> ranges;
  for (const auto& [col, range] : filter.numeric_ranges) {
    ranges.emplace_back(dataset.require_numeric(col), range);
  }
  RowSet visible;
  const auto& rows = dataset.rows();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Record& r = rows[i];
    if (!filter.year_range.contains(r.year)) continue;
    if (filter.regions && !filter.regions->contains(*r.region)) continue;
    bool keep = std::all_of(ranges.begin(), ranges.end(), [&](const auto& pr) {
      return pr.second.contains(r.values[pr.first]);
    });
    if (keep) visible.push_back(i);
  }
  return visible;
}

RowSet all_rows(const Dataset& dataset) {
  RowSet rows(dataset.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return rows;
}

std::vector<double> normalize_channel(const Dataset& dataset, std::string_view column) {
  const std::size_t k = dataset.require_numeric(column);
  const auto& rows = dataset.rows();
  std::vector<double> out(rows.size(), 0.5);
  if (rows.empty()) return out;
  auto [lo_it, hi_it] = std::minmax_element(
      rows.begin(), rows.end(),
      [k](const Record& a, const Record& b) { return a.values[k] < b.values[k]; });
  const double lo = lo_it->values[k];
  const double hi = hi_it->values[k];
  if (!(hi > lo)) return out;
  const double span = hi - lo;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out[i] = std::clamp((rows[i].values[k] - lo) / span, 0.0, 1.0);
  }
  return out;
}

void validate_mapping(const Dataset& dataset, const DimensionMapping& mapping) {
  for (const std::string* col :
       {&mapping.x, &mapping.y, &mapping.z, &mapping.color, &mapping.size}) {
    (void)dataset.require_numeric(*col);
  }
}

DimensionMapping default_mapping(std::span<const std::string> numeric_columns) {
  DimensionMapping m;
  if (numeric_columns.empty()) return m;
  auto pick = [&](std::size_t i) { return numeric_columns[i % numeric_columns.size()]; };
  m.x = pick(0);
  m.y = pick(1);
  m.z = pick(2);
  m.color = pick(3);
  m.size = pick(4);
  return m;
}

std::vector<NormalizedPoint> project_points(const Dataset& dataset,
                                            const DimensionMapping& mapping,
                                            std::span<const std::size_t> visible) {
  validate_mapping(dataset, mapping);
  for (std::size_t idx : visible) (void)dataset.row(idx);
  if (visible.empty()) return {};

  // Channels frequently share a column; normalize each distinct column once.
  std::unordered_map<std::string, std::vector<double>> cache;
  auto channel = [&](const std::string& col) -> const std::vector<double>& {
    auto it = cache.find(col);
    if (it == cache.end()) it = cache.emplace(col, normalize_channel(dataset, col)).first;
    return it->second;
  };
  const auto& xs = channel(mapping.x);
  const auto& ys = channel(mapping.y);
  const auto& zs = channel(mapping.z);
  const auto& cs = channel(mapping.color);
  const auto& ss = channel(mapping.size);

  std::vector<NormalizedPoint> points;
  points.reserve(visible.size());
  for (std::size_t idx : visible) {
    points.push_back(NormalizedPoint{idx, xs[idx], ys[idx], zs[idx], cs[idx], ss[idx]});
  }
  return points;
}

std::vector<Trace> build_traces(const Dataset& dataset, const DimensionMapping& mapping,
                                std::span<const std::size_t> visible) {
  if (!mapping.traces_enabled) return {};
  auto points = project_points(dataset, mapping, visible);
  std::unordered_map<std::size_t, const NormalizedPoint*> by_row;
  for (const auto& p : points) by_row.emplace(p.row_index, &p);

  std::vector<Trace> traces;
  for (const auto& [id, rows] : dataset.individuals()) {
    Trace t{id, {}};
    for (std::size_t idx : rows) {
      if (auto it = by_row.find(idx); it != by_row.end()) t.vertices.push_back(*it->second);
    }
    if (t.vertices.size() >= 2) traces.push_back(std::move(t));
  }
  return traces;
}

// ---------------------------------------------------------------------------
// Colormap

namespace {

constexpr std::array<std::array<double, 3>, 4> kColorStops = {{
    {0.0, 0.0, 255.0},    // blue
    {0.0, 255.0, 0.0},    // green
    {255.0, 255.0, 0.0},  // yellow
    {255.0, 0.0, 0.0},    // red
}};

}  // namespace

std::array<double, 3> colormap_exact(double t) {
  if (std::isnan(t)) t = 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double s = t * 3.0;
  const std::size_t seg = std::min<std::size_t>(static_cast<std::size_t>(std::floor(s)), 2);
  const double f = s - static_cast<double>(seg);
  std::array<double, 3> out{};
  for (std::size_t c = 0; c < 3; ++c) {
    const double a = kColorStops[seg][c];
    const double b = kColorStops[seg + 1][c];
    out[c] = a + (b - a) * f;
  }
  return out;
}

Rgb colormap(double t) {
  auto exact = colormap_exact(t);
  auto round = [](double v) {
    return static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
  };
  return Rgb{round(exact[0]), round(exact[1]), round(exact[2])};
}

// ---------------------------------------------------------------------------
// Inspection and watchlist

namespace {

int significant_digits(std::string_view text) {
  int digits = 0;
  bool leading = true;
  for (char c : text) {
    if (c == 'e' || c == 'E') break;
    if (c < '0' || c > '9') continue;
    if (leading && c == '0') continue;
    leading = false;
    ++digits;
  }
  return digits;
}

// Short values echo as written; longer ones are cut to six significant digits.
std::string display_number(double v) {
  std::string shortest = format_shortest(v);
  if (significant_digits(shortest) <= 6) return shortest;
  return format_significant(v, 6);
}

}  // namespace

std::vector<std::pair<std::string, std::string>> record_detail(const Dataset& dataset,
                                                               std::size_t row_index) {
  const Record& r = dataset.row(row_index);
  std::vector<std::pair<std::string, std::string>> out;
  std::size_t numeric = 0;
  for (const auto& col : dataset.columns()) {
    switch (col.kind) {
      case ColumnKind::Id: out.emplace_back(col.name, r.individual_id); break;
      case ColumnKind::Year: out.emplace_back(col.name, std::to_string(r.year)); break;
      case ColumnKind::Region: out.emplace_back(col.name, r.region.value_or("")); break;
      case ColumnKind::Numeric:
        out.emplace_back(col.name, display_number(r.values[numeric++]));
        break;
    }
  }
  return out;
}

bool Watchlist::contains(std::string_view id) const noexcept {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const WatchEntry& e) { return e.individual_id == id; });
}

bool Watchlist::insert(std::string id, std::int64_t created_at_ms) {
  if (contains(id)) return false;
  entries_.push_back(WatchEntry{std::move(id), created_at_ms});
  return true;
}

bool Watchlist::erase(std::string_view id) {
  auto it = std::find_if(entries_.begin(), entries_.end(),
                         [&](const WatchEntry& e) { return e.individual_id == id; });
  if (it == entries_.end()) return false;
  entries_.erase(it);
  return true;
}

Watchlist watchlist_add(Watchlist watchlist, const Dataset& dataset, std::string_view id,
                        std::int64_t created_at_ms) {
  if (!dataset.has_individual(id))
    throw Error(ErrorCode::UnknownIndividual, "individual `" + std::string(id) + "`");
  watchlist.insert(std::string(id), created_at_ms);
  return watchlist;
}

std::string watchlist_export(const Watchlist& watchlist, const Dataset& dataset) {
  RowSet rows;
  for (const auto& entry : watchlist.entries()) {
    auto it = dataset.individuals().find(entry.individual_id);
    if (it == dataset.individuals().end())
      throw Error(ErrorCode::UnknownIndividual, "individual `" + entry.individual_id + "`");
    rows.insert(rows.end(), it->second.begin(), it->second.end());
  }
  return export_csv(dataset, rows);
}

}  // namespace datacube
