#include <string>

#include <Eigen/Dense>

#include "geoperc/error.hpp"
#include "geoperc/geom.hpp"

namespace geoperc {

Sim3 umeyama_sim3(std::span<const Vec3> source, std::span<const Vec3> target) {
  if (source.size() != target.size())
    throw InvalidArgument("source and target sizes differ (" + std::to_string(source.size()) +
                          " vs " + std::to_string(target.size()) + ")");
  if (source.size() < 3) throw DegenerateInput("Sim(3) alignment needs at least 3 points");
  const auto n = static_cast<double>(source.size());

  Eigen::Vector3d mean_s = Eigen::Vector3d::Zero();
  Eigen::Vector3d mean_t = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < source.size(); ++i) {
    if (!is_finite(source[i]) || !is_finite(target[i]))
      throw InvalidArgument("Sim(3) alignment input has non-finite point");
    mean_s += Eigen::Vector3d(source[i].x, source[i].y, source[i].z);
    mean_t += Eigen::Vector3d(target[i].x, target[i].y, target[i].z);
  }
  mean_s /= n;
  mean_t /= n;

  double var_s = 0.0;
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < source.size(); ++i) {
    const Eigen::Vector3d ps = Eigen::Vector3d(source[i].x, source[i].y, source[i].z) - mean_s;
    const Eigen::Vector3d pt = Eigen::Vector3d(target[i].x, target[i].y, target[i].z) - mean_t;
    var_s += ps.squaredNorm();
    cov += pt * ps.transpose();
  }
  var_s /= n;
  cov /= n;
  if (!(var_s > 0.0)) throw DegenerateInput("Sim(3) alignment source points are coincident");

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Vector3d s = Eigen::Vector3d::Ones();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) s(2) = -1.0;
  const Eigen::Matrix3d r = svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
  const double scale = svd.singularValues().dot(s) / var_s;
  if (!(scale > 0.0) || !std::isfinite(scale))
    throw DegenerateInput("Sim(3) alignment produced a non-positive scale");
  const Eigen::Vector3d t = mean_t - scale * r * mean_s;

  Mat3 rm;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) rm[i][j] = r(i, j);
  return Sim3(scale, RotationMatrix::nearest(rm), Vec3{t.x(), t.y(), t.z()});
}

}  // namespace geoperc
