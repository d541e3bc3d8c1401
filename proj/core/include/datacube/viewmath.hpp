#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "datacube/dataset.hpp"

namespace datacube {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Vec3 operator-() const { return {-x, -y, -z}; }
  constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  bool operator==(const Vec3&) const = default;
};

constexpr double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
constexpr Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& v) { return std::sqrt(dot(v, v)); }
bool is_finite(const Vec3& v);

inline constexpr double kQuaternionNormTolerance = 1e-9;

// Rotation as a unit quaternion (w, x, y, z).
class UnitQuaternion {
 public:
  constexpr UnitQuaternion() = default;

  // Throws SchemaViolation unless |q| is within 1e-9 of one.
  static UnitQuaternion from_components(double w, double x, double y, double z);
  // Normalizes; throws SchemaViolation for a zero or non-finite input.
  static UnitQuaternion normalized(double w, double x, double y, double z);
  static UnitQuaternion from_axis_angle(const Vec3& axis, double radians);
  static UnitQuaternion identity() { return {}; }

  double w() const noexcept { return w_; }
  double x() const noexcept { return x_; }
  double y() const noexcept { return y_; }
  double z() const noexcept { return z_; }

  UnitQuaternion conjugate() const noexcept;
  Vec3 rotate(const Vec3& v) const noexcept;

  friend UnitQuaternion operator*(const UnitQuaternion& a, const UnitQuaternion& b);
  bool operator==(const UnitQuaternion&) const = default;

 private:
  constexpr UnitQuaternion(double w, double x, double y, double z)
      : w_(w), x_(x), y_(y), z_(z) {}

  double w_ = 1.0;
  double x_ = 0.0;
  double y_ = 0.0;
  double z_ = 0.0;
};

// Angle of the relative rotation between two orientations, in [0, pi].
double geodesic_distance(const UnitQuaternion& a, const UnitQuaternion& b);

// Local forward direction is -Z.
inline constexpr Vec3 kForward{0.0, 0.0, -1.0};
inline constexpr Vec3 kUp{0.0, 1.0, 0.0};
inline constexpr Vec3 kRight{1.0, 0.0, 0.0};

struct RigidTransform {
  UnitQuaternion rotation;
  Vec3 translation;

  static RigidTransform identity() { return {}; }
  bool operator==(const RigidTransform&) const = default;
};

// apply(compose(a, b), p) == apply(a, apply(b, p))
RigidTransform compose(const RigidTransform& a, const RigidTransform& b);
RigidTransform invert(const RigidTransform& a);
Vec3 apply(const RigidTransform& a, const Vec3& p);
// Rotation only, for directions.
Vec3 apply_direction(const RigidTransform& a, const Vec3& d);

struct Pose {
  Vec3 position;
  UnitQuaternion orientation;

  Vec3 forward() const { return orientation.rotate(kForward); }
  bool operator==(const Pose&) const = default;
};

// ---------------------------------------------------------------------------
// Anchors and alignment

struct AnchorPoint {
  std::string label;
  Vec3 position;

  bool operator==(const AnchorPoint&) const = default;
};

struct AnchorSet {
  std::vector<AnchorPoint> points;

  bool operator==(const AnchorSet&) const = default;
};

inline constexpr double kAnchorDegeneracyThreshold = 1e-9;

// Throws DegenerateAnchors if fewer than three points, non-finite values,
// duplicate labels, or all points (nearly) collinear.
void validate_anchors(const AnchorSet& anchors);

// Maps every point through a transform, keeping labels.
AnchorSet transform_anchors(const RigidTransform& t, const AnchorSet& anchors);

// Least-squares rigid transform T (proper rotation, no scale) minimizing
// sum |apply(T, local_i) - session_i|^2 over label-matched points.
// Throws DegenerateAnchors or LabelMismatch.
RigidTransform solve_alignment(const AnchorSet& session_points, const AnchorSet& local_points);

// sqrt(mean |apply(T, local_i) - session_i|^2).
double alignment_rms(const RigidTransform& t, const AnchorSet& session_points,
                     const AnchorSet& local_points);

// ---------------------------------------------------------------------------
// Menus, faces, snapshots, picking

// Yaw-only orientation turning the object's forward toward the user.
// Throws DegenerateDirection when the user is (nearly) straight above/below.
UnitQuaternion billboard_yaw(const Vec3& object_pos, const Vec3& user_pos);

enum class Axis { X = 0, Y = 1, Z = 2 };

struct CubeFace {
  Axis axis = Axis::Z;
  int sign = 1;  // +1 or -1

  // The two axes kept by a projection onto this face, in X < Y < Z order.
  std::array<Axis, 2> retained_axes() const;
  Vec3 local_normal() const;
  bool operator==(const CubeFace&) const = default;
};

// Enumeration order used for tie-breaking: +X, -X, +Y, -Y, +Z, -Z.
inline constexpr std::array<CubeFace, 6> kAllFaces = {{
    {Axis::X, 1}, {Axis::X, -1}, {Axis::Y, 1}, {Axis::Y, -1}, {Axis::Z, 1}, {Axis::Z, -1},
}};

std::string to_string(const CubeFace& face);          // "+X", "-Z", ...
std::optional<CubeFace> cube_face_from_string(std::string_view text);

// Face whose rotated outward normal most directly opposes the view direction.
CubeFace select_face(const Vec3& view_dir, const UnitQuaternion& cube_rotation);

struct SnapshotPoint {
  double u = 0.0;
  double v = 0.0;
  double color = 0.0;
  double size = 0.0;

  bool operator==(const SnapshotPoint&) const = default;
};

// Drops the face axis. u is mirrored (u -> 1 - u) on positive-sign faces so
// that opposite faces are mirror images of one another.
std::vector<SnapshotPoint> project_snapshot(std::span<const NormalizedPoint> points,
                                            const CubeFace& face);

struct PickSphere {
  Vec3 center;
  double radius = 0.0;
  std::size_t row_index = 0;
};

// Row of the sphere hit at the smallest nonnegative ray parameter.
std::optional<std::size_t> pick_point(const Vec3& ray_origin, const Vec3& ray_dir,
                                      std::span<const PickSphere> spheres);

// ---------------------------------------------------------------------------
// Aggregation and statistics

struct Bar {
  double value = 0.0;   // mean of the value column within the group
  std::size_t count = 0;
  double height = 0.0;  // normalized over the grid
  Rgb color;

  bool operator==(const Bar&) const = default;
};

struct BarKey {
  std::string region;
  int year = 0;

  auto operator<=>(const BarKey&) const = default;
};

using BarGrid = std::map<BarKey, Bar>;

// Groups visible rows by (region, year). Throws NoRegionColumn.
BarGrid aggregate_bars(const Dataset& dataset, std::string_view value_column,
                       const FilterState& filter);

struct ColumnStatistics {
  std::string column;
  std::size_t count = 0;
  // Absent when count == 0.
  std::optional<double> mean;
  std::optional<double> stddev;  // population
  std::optional<double> min;
  std::optional<double> max;
};

using SubsetStatistics = std::vector<ColumnStatistics>;

SubsetStatistics subset_statistics(const Dataset& dataset, const FilterState& filter,
                                   std::span<const std::string> columns);

}  // namespace datacube
