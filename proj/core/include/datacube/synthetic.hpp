#pragma once

// Seeded generator of valid population-health datasets, used by the
// simulator, the tests and the benchmarks.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "datacube/dataset.hpp"

namespace datacube {

struct SyntheticSpec {
  std::size_t individuals = 20;
  int first_year = 2010;
  std::size_t years = 5;
  std::vector<std::string> numeric_columns{"age",     "weight", "bmi",
                                           "glucose", "systolic_bp", "cholesterol"};
  bool with_region = true;
  std::size_t regions = 4;
  // Chance that an individual has no record for a given year (at least one
  // row per individual is always kept).
  double missing_year_probability = 0.0;
  std::uint64_t seed = 1;
};

Dataset generate_dataset(const SyntheticSpec& spec);

// Uniform double in [0, 1) from the top 53 bits; platform independent.
double unit_double(std::uint64_t bits) noexcept;

}  // namespace datacube
