#include "geoperc/geom.hpp"

#include <algorithm>
#include <numbers>
#include <string>

#include <Eigen/Dense>

#include "geoperc/error.hpp"

namespace geoperc {

double wrap_angle(double radians) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  double wrapped = std::remainder(radians, kTwoPi);
  if (wrapped <= -std::numbers::pi) wrapped += kTwoPi;
  return wrapped;
}

EulerAngles EulerAngles::normalized() const {
  return {wrap_angle(yaw), wrap_angle(pitch), wrap_angle(roll)};
}

RotationMatrix::RotationMatrix() : m_{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}} {}

RotationMatrix RotationMatrix::from_matrix(const Mat3& m, double tolerance) {
  for (const auto& row : m)
    for (double v : row)
      if (!std::isfinite(v)) throw InvalidArgument("rotation matrix has non-finite entry");
  RotationMatrix r(m);
  if (r.orthonormality_error() > tolerance)
    throw InvalidArgument("rotation matrix is not orthonormal (error " +
                          std::to_string(r.orthonormality_error()) + ")");
  if (std::abs(r.determinant() - 1.0) > tolerance)
    throw InvalidArgument("rotation matrix determinant is not +1");
  return r;
}

RotationMatrix RotationMatrix::nearest(const Mat3& m) {
  Eigen::Matrix3d a;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) a(i, j) = m[i][j];
  if (!a.allFinite()) throw InvalidArgument("rotation matrix has non-finite entry");
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d s = Eigen::Matrix3d::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) s(2, 2) = -1.0;
  const Eigen::Matrix3d r = svd.matrixU() * s * svd.matrixV().transpose();
  Mat3 out;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out[i][j] = r(i, j);
  return RotationMatrix(out);
}

RotationMatrix RotationMatrix::about_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  return RotationMatrix(Mat3{{{1, 0, 0}, {0, c, -s}, {0, s, c}}});
}

RotationMatrix RotationMatrix::about_y(double a) {
  const double c = std::cos(a), s = std::sin(a);
  return RotationMatrix(Mat3{{{c, 0, s}, {0, 1, 0}, {-s, 0, c}}});
}

RotationMatrix RotationMatrix::about_z(double a) {
  const double c = std::cos(a), s = std::sin(a);
  return RotationMatrix(Mat3{{{c, -s, 0}, {s, c, 0}, {0, 0, 1}}});
}

RotationMatrix RotationMatrix::transposed() const {
  Mat3 t;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) t[i][j] = m_[j][i];
  return RotationMatrix(t);
}

Vec3 RotationMatrix::operator*(const Vec3& v) const {
  return {m_[0][0] * v.x + m_[0][1] * v.y + m_[0][2] * v.z,
          m_[1][0] * v.x + m_[1][1] * v.y + m_[1][2] * v.z,
          m_[2][0] * v.x + m_[2][1] * v.y + m_[2][2] * v.z};
}

RotationMatrix RotationMatrix::operator*(const RotationMatrix& o) const {
  Mat3 p{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      p[i][j] = m_[i][0] * o.m_[0][j] + m_[i][1] * o.m_[1][j] + m_[i][2] * o.m_[2][j];
  return RotationMatrix(p);
}

double RotationMatrix::orthonormality_error() const {
  double worst = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double rtr = 0.0;
      for (int k = 0; k < 3; ++k) rtr += m_[k][i] * m_[k][j];
      worst = std::max(worst, std::abs(rtr - (i == j ? 1.0 : 0.0)));
    }
  return worst;
}

double RotationMatrix::determinant() const {
  const auto& m = m_;
  return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
         m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
         m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
}

RotationMatrix euler_to_rotation(const EulerAngles& angles) {
  if (!std::isfinite(angles.yaw) || !std::isfinite(angles.pitch) || !std::isfinite(angles.roll))
    throw InvalidArgument("euler angles must be finite");
  return RotationMatrix::about_z(angles.yaw) * RotationMatrix::about_y(angles.pitch) *
         RotationMatrix::about_x(angles.roll);
}

EulerAngles rotation_to_euler(const RotationMatrix& r) {
  // R[2][0] = -sin(pitch); R[2][1] = cos(pitch) sin(roll); R[2][2] = cos(pitch) cos(roll)
  // R[1][0] = sin(yaw) cos(pitch); R[0][0] = cos(yaw) cos(pitch)
  const double cos_pitch = std::hypot(r(0, 0), r(1, 0));
  const double pitch = std::atan2(-r(2, 0), cos_pitch);
  if (cos_pitch > 1e-12) {
    return EulerAngles{std::atan2(r(1, 0), r(0, 0)), pitch, std::atan2(r(2, 1), r(2, 2))}
        .normalized();
  }
  // Gimbal lock: only yaw -/+ roll is determined; put everything into yaw.
  return EulerAngles{std::atan2(-r(0, 1), r(1, 1)), pitch, 0.0}.normalized();
}

Pose Pose::inverse() const {
  const RotationMatrix rt = rotation.transposed();
  return {rt, -(rt * translation)};
}

Pose Pose::operator*(const Pose& o) const {
  return {rotation * o.rotation, rotation * o.translation + translation};
}

Pose Pose::from_matrix4(std::span<const double> m, double tolerance) {
  if (m.size() != 16) throw InvalidArgument("pose matrix needs 16 values");
  for (double v : m)
    if (!std::isfinite(v)) throw InvalidArgument("pose matrix has non-finite entry");
  if (std::abs(m[12]) > tolerance || std::abs(m[13]) > tolerance ||
      std::abs(m[14]) > tolerance || std::abs(m[15] - 1.0) > tolerance)
    throw InvalidArgument("pose matrix bottom row must be (0, 0, 0, 1)");
  const Mat3 r{{{m[0], m[1], m[2]}, {m[4], m[5], m[6]}, {m[8], m[9], m[10]}}};
  // Stored poses carry a few digits of precision; validate loosely, then project onto SO(3).
  RotationMatrix::from_matrix(r, tolerance);
  return {RotationMatrix::nearest(r), Vec3{m[3], m[7], m[11]}};
}

std::array<double, 16> Pose::to_matrix4() const {
  const auto& r = rotation.matrix();
  return {r[0][0], r[0][1], r[0][2], translation.x, r[1][0], r[1][1], r[1][2], translation.y,
          r[2][0], r[2][1], r[2][2], translation.z, 0.0,     0.0,     0.0,     1.0};
}

Sim3::Sim3(double s, const RotationMatrix& r, const Vec3& t)
    : scale(s), rotation(r), translation(t) {
  if (!std::isfinite(s) || s <= 0.0) throw InvalidArgument("Sim3 scale must be finite and > 0");
  if (!is_finite(t)) throw InvalidArgument("Sim3 translation must be finite");
}

OrientedBox3::OrientedBox3(const Vec3& center, const Vec3& size, const EulerAngles& angles)
    : center_(center), size_(size), angles_(angles) {
  if (!is_finite(center)) throw InvalidArgument("box center must be finite");
  if (!is_finite(size)) throw InvalidArgument("box size must be finite");
  if (!(size.x > 0.0 && size.y > 0.0 && size.z > 0.0))
    throw InvalidArgument("box sizes must be strictly positive");
  angles_ = angles.normalized();
  rotation_ = euler_to_rotation(angles_);
}

bool OrientedBox3::contains(const Vec3& p) const {
  const Vec3 d = p - center_;
  const auto& m = rotation_.matrix();
  // Local coordinate along axis k is column k of R dotted with d.
  const double lx = m[0][0] * d.x + m[1][0] * d.y + m[2][0] * d.z;
  const double ly = m[0][1] * d.x + m[1][1] * d.y + m[2][1] * d.z;
  const double lz = m[0][2] * d.x + m[1][2] * d.y + m[2][2] * d.z;
  return std::abs(lx) <= 0.5 * size_.x && std::abs(ly) <= 0.5 * size_.y &&
         std::abs(lz) <= 0.5 * size_.z;
}

OrientedBox3 OrientedBox3::transformed(const RotationMatrix& rotation,
                                       const Vec3& translation) const {
  return OrientedBox3(rotation * center_ + translation, size_,
                      rotation_to_euler(rotation * rotation_));
}

std::array<double, 9> OrientedBox3::to_array() const {
  return {center_.x, center_.y, center_.z,   size_.x,     size_.y,
          size_.z,   angles_.yaw, angles_.pitch, angles_.roll};
}

OrientedBox3 OrientedBox3::from_array(std::span<const double> v) {
  if (v.size() != 9) throw InvalidArgument("box needs exactly 9 values");
  return OrientedBox3({v[0], v[1], v[2]}, {v[3], v[4], v[5]}, {v[6], v[7], v[8]});
}

std::array<Vec3, 8> box_corners(const OrientedBox3& box) {
  std::array<Vec3, 8> corners;
  const Vec3 half = box.size() * 0.5;
  for (int k = 0; k < 8; ++k) {
    const Vec3 local{(k & 1) ? half.x : -half.x, (k & 2) ? half.y : -half.y,
                     (k & 4) ? half.z : -half.z};
    corners[k] = box.rotation() * local + box.center();
  }
  return corners;
}

}  // namespace geoperc
