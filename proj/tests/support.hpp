#pragma once

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "datacube/dataset.hpp"
#include "datacube/error.hpp"
#include "datacube/synthetic.hpp"
#include "datacube/viewmath.hpp"

// Asserts that `stmt` throws datacube::Error with `expected`.
#define EXPECT_DC_ERROR(stmt, expected)                                              \
  do {                                                                               \
    try {                                                                            \
      stmt;                                                                          \
      ADD_FAILURE() << "no error thrown; expected " << ::datacube::to_string(expected); \
    } catch (const ::datacube::Error& e_) {                                          \
      EXPECT_EQ(e_.code(), expected) << e_.what();                                   \
    }                                                                                \
  } while (0)

namespace dctest {

inline const char* kFixtureCsv =
    "id,year,zipcode,glucose\n"
    "p1,2020,92093,98.5\n"
    "p1,2021,92093,101.0\n";

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * datacube::unit_double(rng());
}

inline datacube::Vec3 random_unit(std::mt19937_64& rng) {
  for (;;) {
    datacube::Vec3 v{uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1)};
    const double n = datacube::norm(v);
    if (n > 1e-3 && n <= 1.0) return v * (1.0 / n);
  }
}

inline datacube::UnitQuaternion random_rotation(std::mt19937_64& rng) {
  // Uniform over SO(3) (Shoemake).
  const double u1 = datacube::unit_double(rng()), u2 = datacube::unit_double(rng()),
               u3 = datacube::unit_double(rng());
  const double a = std::sqrt(1 - u1), b = std::sqrt(u1);
  const double t2 = 2 * M_PI * u2, t3 = 2 * M_PI * u3;
  return datacube::UnitQuaternion::normalized(b * std::cos(t3), a * std::sin(t2), a * std::cos(t2),
                                              b * std::sin(t3));
}

inline datacube::RigidTransform random_transform(std::mt19937_64& rng, double extent = 5.0) {
  return {random_rotation(rng),
          {uniform(rng, -extent, extent), uniform(rng, -extent, extent), uniform(rng, -extent, extent)}};
}

inline double transform_error(const datacube::RigidTransform& a, const datacube::RigidTransform& b) {
  return datacube::geodesic_distance(a.rotation, b.rotation) + datacube::norm(a.translation - b.translation);
}

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("dctest-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace dctest
