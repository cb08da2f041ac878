#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>

namespace geoperc {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Vec3 operator-() const { return {-x, -y, -z}; }
  constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  constexpr Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  constexpr Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  constexpr double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
  constexpr bool operator==(const Vec3&) const = default;
};

constexpr Vec3 operator*(double s, const Vec3& v) { return v * s; }
constexpr double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
constexpr Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& v) { return std::sqrt(dot(v, v)); }
inline bool is_finite(const Vec3& v) {
  return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z);
}

/// Yaw about z, pitch about y, roll about x (radians).
struct EulerAngles {
  double yaw = 0.0;
  double pitch = 0.0;
  double roll = 0.0;

  /// Each angle wrapped into (-pi, pi].
  EulerAngles normalized() const;
  bool operator==(const EulerAngles&) const = default;
};

double wrap_angle(double radians);

using Mat3 = std::array<std::array<double, 3>, 3>;

/// Proper rotation: R^T R = I and det R = +1 (checked to 1e-9 on construction).
class RotationMatrix {
 public:
  static constexpr double kTolerance = 1e-9;

  RotationMatrix();  // identity

  /// Throws InvalidArgument unless `m` is orthonormal with det +1 within `tolerance`.
  static RotationMatrix from_matrix(const Mat3& m, double tolerance = kTolerance);
  /// Projects an approximately orthonormal matrix onto SO(3) (polar decomposition).
  static RotationMatrix nearest(const Mat3& m);

  static RotationMatrix about_x(double radians);
  static RotationMatrix about_y(double radians);
  static RotationMatrix about_z(double radians);

  const Mat3& matrix() const { return m_; }
  double operator()(int row, int col) const { return m_[row][col]; }
  Vec3 column(int col) const { return {m_[0][col], m_[1][col], m_[2][col]}; }

  RotationMatrix transposed() const;
  Vec3 operator*(const Vec3& v) const;
  RotationMatrix operator*(const RotationMatrix& o) const;

  double orthonormality_error() const;
  double determinant() const;

 private:
  explicit RotationMatrix(const Mat3& m) : m_(m) {}
  Mat3 m_;
};

/// R = Rz(yaw) * Ry(pitch) * Rx(roll). Throws InvalidArgument on non-finite input.
RotationMatrix euler_to_rotation(const EulerAngles& angles);

/// Inverse of euler_to_rotation; pitch lands in [-pi/2, pi/2], roll = 0 at gimbal lock.
EulerAngles rotation_to_euler(const RotationMatrix& r);

/// Rigid camera-to-world transform: p_world = rotation * p_cam + translation.
struct Pose {
  RotationMatrix rotation;
  Vec3 translation;

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Vec3 apply_inverse(const Vec3& p) const { return rotation.transposed() * (p - translation); }
  Pose inverse() const;
  Pose operator*(const Pose& o) const;  // this after o

  /// 4x4 row-major homogeneous matrix; bottom row must be (0,0,0,1).
  static Pose from_matrix4(std::span<const double> row_major16, double tolerance = 1e-6);
  std::array<double, 16> to_matrix4() const;
};

struct Sim3 {
  double scale = 1.0;
  RotationMatrix rotation;
  Vec3 translation;

  Sim3() = default;
  /// Throws InvalidArgument unless scale is finite and > 0.
  Sim3(double scale, const RotationMatrix& rotation, const Vec3& translation);

  Vec3 apply(const Vec3& p) const { return rotation * p * scale + translation; }
};

/// 9-DoF metric box. Sizes are full extents along the box-local x/y/z axes.
class OrientedBox3 {
 public:
  /// Throws InvalidArgument on non-finite values or non-positive sizes. Angles are wrapped.
  OrientedBox3(const Vec3& center, const Vec3& size, const EulerAngles& angles);

  const Vec3& center() const { return center_; }
  const Vec3& size() const { return size_; }
  const EulerAngles& angles() const { return angles_; }
  const RotationMatrix& rotation() const { return rotation_; }
  double volume() const { return size_.x * size_.y * size_.z; }

  /// True when p lies inside or on the box.
  bool contains(const Vec3& p) const;

  /// Box with the same size whose pose is rotation * (this pose), translated.
  OrientedBox3 transformed(const RotationMatrix& rotation, const Vec3& translation) const;

  std::array<double, 9> to_array() const;
  static OrientedBox3 from_array(std::span<const double> values);

 private:
  Vec3 center_;
  Vec3 size_;
  EulerAngles angles_;
  RotationMatrix rotation_;
};

/// Corner k has local offset (sx * w/2, sy * h/2, sz * d/2) where sx = bit 0 of k,
/// sy = bit 1, sz = bit 2 (0 -> negative, 1 -> positive), rotated then translated.
std::array<Vec3, 8> box_corners(const OrientedBox3& box);

/// Exact intersection volume by half-space clipping.
double box_intersection_volume(const OrientedBox3& a, const OrientedBox3& b);

/// Exact intersection-over-union in [0, 1].
double box_iou(const OrientedBox3& a, const OrientedBox3& b);

/// Monte-Carlo estimate sampling uniformly in the joint axis-aligned bounds.
double box_iou_mc(const OrientedBox3& a, const OrientedBox3& b, std::uint64_t n_samples,
                  std::uint64_t seed);

/// Least-squares similarity minimizing sum ||s R p_i + t - q_i||^2.
/// Throws DegenerateInput for fewer than 3 points or zero source variance.
Sim3 umeyama_sim3(std::span<const Vec3> source, std::span<const Vec3> target);

}  // namespace geoperc
