#include "datacube/viewmath.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <limits>
#include <set>

namespace datacube {

bool is_finite(const Vec3& v) {
  return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z);
}

// ---------------------------------------------------------------------------
// Quaternions and transforms

UnitQuaternion UnitQuaternion::from_components(double w, double x, double y, double z) {
  const double n = std::sqrt(w * w + x * x + y * y + z * z);
  if (!std::isfinite(n) || std::abs(n - 1.0) > kQuaternionNormTolerance)
    throw Error(ErrorCode::SchemaViolation, "quaternion is not unit length");
  return UnitQuaternion(w, x, y, z);
}

UnitQuaternion UnitQuaternion::normalized(double w, double x, double y, double z) {
  const double n = std::sqrt(w * w + x * x + y * y + z * z);
  if (!std::isfinite(n) || n == 0.0)
    throw Error(ErrorCode::SchemaViolation, "cannot normalize quaternion");
  return UnitQuaternion(w / n, x / n, y / n, z / n);
}

UnitQuaternion UnitQuaternion::from_axis_angle(const Vec3& axis, double radians) {
  const double n = norm(axis);
  if (!(n > 0.0)) return identity();
  const double s = std::sin(radians / 2.0) / n;
  return normalized(std::cos(radians / 2.0), axis.x * s, axis.y * s, axis.z * s);
}

UnitQuaternion UnitQuaternion::conjugate() const noexcept {
  return UnitQuaternion(w_, -x_, -y_, -z_);
}

Vec3 UnitQuaternion::rotate(const Vec3& v) const noexcept {
  const Vec3 q{x_, y_, z_};
  const Vec3 t = cross(q, v) * 2.0;
  return v + t * w_ + cross(q, t);
}

UnitQuaternion operator*(const UnitQuaternion& a, const UnitQuaternion& b) {
  const double w = a.w_ * b.w_ - a.x_ * b.x_ - a.y_ * b.y_ - a.z_ * b.z_;
  const double x = a.w_ * b.x_ + a.x_ * b.w_ + a.y_ * b.z_ - a.z_ * b.y_;
  const double y = a.w_ * b.y_ - a.x_ * b.z_ + a.y_ * b.w_ + a.z_ * b.x_;
  const double z = a.w_ * b.z_ + a.x_ * b.y_ - a.y_ * b.x_ + a.z_ * b.w_;
  return UnitQuaternion::normalized(w, x, y, z);
}

double geodesic_distance(const UnitQuaternion& a, const UnitQuaternion& b) {
  const UnitQuaternion rel = a.conjugate() * b;
  const double vec = std::sqrt(rel.x() * rel.x() + rel.y() * rel.y() + rel.z() * rel.z());
  return 2.0 * std::atan2(vec, std::abs(rel.w()));
}

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  return RigidTransform{a.rotation * b.rotation,
                        a.rotation.rotate(b.translation) + a.translation};
}

RigidTransform invert(const RigidTransform& a) {
  const UnitQuaternion inv = a.rotation.conjugate();
  return RigidTransform{inv, -inv.rotate(a.translation)};
}

Vec3 apply(const RigidTransform& a, const Vec3& p) {
  return a.rotation.rotate(p) + a.translation;
}

Vec3 apply_direction(const RigidTransform& a, const Vec3& d) { return a.rotation.rotate(d); }

// ---------------------------------------------------------------------------
// Anchor alignment (Kabsch with reflection guard)

namespace {

Eigen::Vector3d to_eigen(const Vec3& v) { return {v.x, v.y, v.z}; }

Eigen::MatrixX3d centered(const std::vector<Vec3>& pts, Eigen::Vector3d& centroid) {
  Eigen::MatrixX3d m(static_cast<Eigen::Index>(pts.size()), 3);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    m.row(static_cast<Eigen::Index>(i)) = to_eigen(pts[i]).transpose();
  }
  centroid = m.colwise().mean().transpose();
  m.rowwise() -= centroid.transpose();
  return m;
}

// The second singular value vanishes exactly when all points are collinear.
double spread(const std::vector<Vec3>& pts) {
  Eigen::Vector3d c;
  Eigen::MatrixX3d m = centered(pts, c);
  Eigen::JacobiSVD<Eigen::MatrixX3d> svd(m);
  return svd.singularValues()(1);
}

}  // namespace

void validate_anchors(const AnchorSet& anchors) {
  if (anchors.points.size() < 3)
    throw Error(ErrorCode::DegenerateAnchors, "at least three anchor points required");
  std::set<std::string> labels;
  std::vector<Vec3> pts;
  for (const auto& p : anchors.points) {
    if (!is_finite(p.position))
      throw Error(ErrorCode::DegenerateAnchors, "non-finite anchor `" + p.label + "`");
    if (!labels.insert(p.label).second)
      throw Error(ErrorCode::DegenerateAnchors, "duplicate anchor label `" + p.label + "`");
    pts.push_back(p.position);
  }
  if (!(spread(pts) > kAnchorDegeneracyThreshold))
    throw Error(ErrorCode::DegenerateAnchors, "anchor points are collinear");
}

AnchorSet transform_anchors(const RigidTransform& t, const AnchorSet& anchors) {
  AnchorSet out;
  out.points.reserve(anchors.points.size());
  for (const auto& p : anchors.points) out.points.push_back({p.label, apply(t, p.position)});
  return out;
}

namespace {

// Local positions reordered to match the session labels.
std::vector<Vec3> match_labels(const AnchorSet& session, const AnchorSet& local) {
  if (session.points.size() != local.points.size())
    throw Error(ErrorCode::LabelMismatch, "anchor sets differ in size");
  std::vector<Vec3> matched;
  matched.reserve(session.points.size());
  for (const auto& sp : session.points) {
    auto it = std::find_if(local.points.begin(), local.points.end(),
                           [&](const AnchorPoint& lp) { return lp.label == sp.label; });
    if (it == local.points.end())
      throw Error(ErrorCode::LabelMismatch, "no local anchor `" + sp.label + "`");
    matched.push_back(it->position);
  }
  return matched;
}

}  // namespace

RigidTransform solve_alignment(const AnchorSet& session_points, const AnchorSet& local_points) {
  validate_anchors(session_points);
  const std::vector<Vec3> local = match_labels(session_points, local_points);
  validate_anchors(local_points);
  std::vector<Vec3> session;
  for (const auto& p : session_points.points) session.push_back(p.position);

  Eigen::Vector3d local_c;
  Eigen::Vector3d session_c;
  const Eigen::MatrixX3d a = centered(local, local_c);
  const Eigen::MatrixX3d b = centered(session, session_c);
  const Eigen::Matrix3d h = a.transpose() * b;

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Matrix3d& u = svd.matrixU();
  const Eigen::Matrix3d& v = svd.matrixV();
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  if ((v * u.transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  const Eigen::Matrix3d r = v * d * u.transpose();

  const Eigen::Quaterniond q(r);
  const UnitQuaternion rotation = UnitQuaternion::normalized(q.w(), q.x(), q.y(), q.z());
  const Eigen::Vector3d t = session_c - r * local_c;
  return RigidTransform{rotation, Vec3{t.x(), t.y(), t.z()}};
}

double alignment_rms(const RigidTransform& t, const AnchorSet& session_points,
                     const AnchorSet& local_points) {
  const std::vector<Vec3> local = match_labels(session_points, local_points);
  if (local.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < local.size(); ++i) {
    const Vec3 e = apply(t, local[i]) - session_points.points[i].position;
    sum += dot(e, e);
  }
  return std::sqrt(sum / static_cast<double>(local.size()));
}

// ---------------------------------------------------------------------------
// Billboard, faces, snapshots

UnitQuaternion billboard_yaw(const Vec3& object_pos, const Vec3& user_pos) {
  const double dx = user_pos.x - object_pos.x;
  const double dz = user_pos.z - object_pos.z;
  if (!(std::hypot(dx, dz) > 1e-6))
    throw Error(ErrorCode::DegenerateDirection, "user is directly above or below the object");
  // Yaw by theta maps (0, 0, -1) to (-sin theta, 0, -cos theta).
  const double theta = std::atan2(-dx, -dz);
  return UnitQuaternion::from_axis_angle(kUp, theta);
}

std::array<Axis, 2> CubeFace::retained_axes() const {
  switch (axis) {
    case Axis::X: return {Axis::Y, Axis::Z};
    case Axis::Y: return {Axis::X, Axis::Z};
    case Axis::Z: return {Axis::X, Axis::Y};
  }
  return {Axis::X, Axis::Y};
}

Vec3 CubeFace::local_normal() const {
  const double s = sign > 0 ? 1.0 : -1.0;
  switch (axis) {
    case Axis::X: return {s, 0.0, 0.0};
    case Axis::Y: return {0.0, s, 0.0};
    case Axis::Z: return {0.0, 0.0, s};
  }
  return {};
}

std::string to_string(const CubeFace& face) {
  std::string out(1, face.sign > 0 ? '+' : '-');
  out += "XYZ"[static_cast<int>(face.axis)];
  return out;
}

std::optional<CubeFace> cube_face_from_string(std::string_view text) {
  for (const auto& f : kAllFaces) {
    if (to_string(f) == text) return f;
  }
  return std::nullopt;
}

CubeFace select_face(const Vec3& view_dir, const UnitQuaternion& cube_rotation) {
  // The -axis normal is the exact negation of the +axis normal, so three
  // rotations cover all six faces.
  CubeFace best = kAllFaces[0];
  double best_dot = std::numeric_limits<double>::infinity();
  for (Axis axis : {Axis::X, Axis::Y, Axis::Z}) {
    const double d = dot(view_dir, cube_rotation.rotate(CubeFace{axis, 1}.local_normal()));
    if (d < best_dot) {
      best_dot = d;
      best = CubeFace{axis, 1};
    }
    if (-d < best_dot) {
      best_dot = -d;
      best = CubeFace{axis, -1};
    }
  }
  return best;
}

namespace {

double component(const NormalizedPoint& p, Axis axis) {
  switch (axis) {
    case Axis::X: return p.x;
    case Axis::Y: return p.y;
    case Axis::Z: return p.z;
  }
  return 0.0;
}

}  // namespace

std::vector<SnapshotPoint> project_snapshot(std::span<const NormalizedPoint> points,
                                            const CubeFace& face) {
  const auto axes = face.retained_axes();
  std::vector<SnapshotPoint> out;
  out.reserve(points.size());
  for (const auto& p : points) {
    double u = component(p, axes[0]);
    if (face.sign > 0) u = 1.0 - u;
    out.push_back(SnapshotPoint{u, component(p, axes[1]), p.color, p.size});
  }
  return out;
}

std::optional<std::size_t> pick_point(const Vec3& ray_origin, const Vec3& ray_dir,
                                      std::span<const PickSphere> spheres) {
  std::optional<std::size_t> hit;
  double best_t = std::numeric_limits<double>::infinity();
  for (const auto& s : spheres) {
    const Vec3 to_center = s.center - ray_origin;
    const double along = dot(to_center, ray_dir);
    const double miss2 = dot(to_center, to_center) - along * along;
    const double r2 = s.radius * s.radius;
    if (miss2 > r2) continue;
    const double half_chord = std::sqrt(r2 - miss2);
    double t = along - half_chord;
    if (t < 0.0) t = along + half_chord;  // origin inside the sphere
    if (t < 0.0) continue;
    if (t < best_t) {
      best_t = t;
      hit = s.row_index;
    }
  }
  return hit;
}

// ---------------------------------------------------------------------------
// Bars and statistics

BarGrid aggregate_bars(const Dataset& dataset, std::string_view value_column,
                       const FilterState& filter) {
  if (!dataset.has_region())
    throw Error(ErrorCode::NoRegionColumn, "bar charts group by `zipcode`");
  const std::size_t k = dataset.require_numeric(value_column);
  const RowSet visible = apply_filters(dataset, filter);

  std::map<BarKey, std::pair<double, std::size_t>> sums;
  for (std::size_t idx : visible) {
    const Record& r = dataset.rows()[idx];
    auto& acc = sums[BarKey{*r.region, r.year}];
    acc.first += r.values[k];
    acc.second += 1;
  }

  BarGrid grid;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto& [key, acc] : sums) {
    Bar bar;
    bar.count = acc.second;
    bar.value = acc.first / static_cast<double>(acc.second);
    lo = std::min(lo, bar.value);
    hi = std::max(hi, bar.value);
    grid.emplace(key, bar);
  }
  for (auto& [key, bar] : grid) {
    bar.height = hi > lo ? std::clamp((bar.value - lo) / (hi - lo), 0.0, 1.0) : 0.5;
    bar.color = colormap(bar.height);
  }
  return grid;
}

SubsetStatistics subset_statistics(const Dataset& dataset, const FilterState& filter,
                                   std::span<const std::string> columns) {
  std::vector<std::size_t> indices;
  for (const auto& c : columns) indices.push_back(dataset.require_numeric(c));
  const RowSet visible = apply_filters(dataset, filter);

  SubsetStatistics out;
  for (std::size_t c = 0; c < columns.size(); ++c) {
    ColumnStatistics st;
    st.column = columns[c];
    // Welford's running mean and sum of squared deviations.
    double mean = 0.0;
    double m2 = 0.0;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t idx : visible) {
      const double v = dataset.rows()[idx].values[indices[c]];
      ++st.count;
      const double delta = v - mean;
      mean += delta / static_cast<double>(st.count);
      m2 += delta * (v - mean);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (st.count > 0) {
      st.mean = std::clamp(mean, lo, hi);
      st.stddev = std::sqrt(std::max(0.0, m2 / static_cast<double>(st.count)));
      st.min = lo;
      st.max = hi;
    }
    out.push_back(std::move(st));
  }
  return out;
}

}  // namespace datacube
