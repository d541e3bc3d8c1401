#include "datacube/synthetic.hpp"

#include <cmath>
#include <random>

namespace datacube {

double unit_double(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

namespace {

struct ColumnProfile {
  double base;
  double spread;
  double drift;  // per year
};

// Plausible magnitudes for the default names; anything else gets a generic
// profile so arbitrary schemas still vary.
ColumnProfile profile_for(const std::string& name, std::size_t index) {
  if (name == "age") return {45.0, 20.0, 1.0};
  if (name == "weight") return {75.0, 15.0, 0.4};
  if (name == "bmi") return {26.0, 4.0, 0.1};
  if (name == "glucose") return {100.0, 18.0, 0.8};
  if (name == "systolic_bp") return {125.0, 14.0, 0.6};
  if (name == "cholesterol") return {195.0, 30.0, 1.2};
  return {10.0 * static_cast<double>(index + 1), 5.0, 0.25};
}

// Rounds to `decimals` places so exported values stay short.
double quantize(double v, int decimals) {
  const double scale = std::pow(10.0, decimals);
  return std::round(v * scale) / scale;
}

}  // namespace

Dataset generate_dataset(const SyntheticSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  auto uniform = [&rng] { return unit_double(rng()); };

  std::vector<ColumnDescriptor> columns{{std::string(kIdColumn), ColumnKind::Id},
                                        {std::string(kYearColumn), ColumnKind::Year}};
  if (spec.with_region) columns.push_back({std::string(kRegionColumn), ColumnKind::Region});
  for (const auto& name : spec.numeric_columns) columns.push_back({name, ColumnKind::Numeric});

  std::vector<std::string> regions;
  for (std::size_t r = 0; r < std::max<std::size_t>(spec.regions, 1); ++r) {
    regions.push_back(std::to_string(94000 + 17 * r));
  }

  std::vector<Record> rows;
  const std::size_t width = std::to_string(spec.individuals).size();
  for (std::size_t i = 0; i < spec.individuals; ++i) {
    std::string id = std::to_string(i + 1);
    id = "P" + std::string(width > id.size() ? width - id.size() : 0, '0') + id;
    const std::string& region = regions[static_cast<std::size_t>(uniform() * regions.size())];

    std::vector<double> offsets;
    for (std::size_t c = 0; c < spec.numeric_columns.size(); ++c) {
      offsets.push_back(2.0 * uniform() - 1.0);
    }
    const std::size_t keep = static_cast<std::size_t>(uniform() * std::max<std::size_t>(spec.years, 1));
    for (std::size_t y = 0; y < spec.years; ++y) {
      const bool drop = uniform() < spec.missing_year_probability;
      if (drop && y != keep) continue;
      Record rec;
      rec.individual_id = id;
      rec.year = spec.first_year + static_cast<int>(y);
      if (spec.with_region) rec.region = region;
      for (std::size_t c = 0; c < spec.numeric_columns.size(); ++c) {
        const ColumnProfile p = profile_for(spec.numeric_columns[c], c);
        const double noise = (uniform() - 0.5) * 0.1 * p.spread;
        rec.values.push_back(
            quantize(p.base + p.spread * offsets[c] + p.drift * static_cast<double>(y) + noise, 2));
      }
      rows.push_back(std::move(rec));
    }
  }
  return Dataset::create(std::move(columns), std::move(rows));
}

}  // namespace datacube
