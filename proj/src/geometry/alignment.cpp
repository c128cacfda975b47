#include "vslam/geometry/alignment.hpp"

#include <Eigen/SVD>

namespace vslam {

Se3Pose Similarity3::ApplyTo(const Se3Pose& pose) const {
  return Se3Pose(Mat3(rotation * pose.rotation()), (*this) * pose.translation());
}

Similarity3 Umeyama(std::span<const Vec3> src, std::span<const Vec3> dst, bool with_scale) {
  Similarity3 out;
  const std::size_t n = src.size();
  if (n == 0 || n != dst.size()) return out;
  Vec3 mu_s = Vec3::Zero();
  Vec3 mu_d = Vec3::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    mu_s += src[i];
    mu_d += dst[i];
  }
  mu_s /= static_cast<double>(n);
  mu_d /= static_cast<double>(n);

  Mat3 cov = Mat3::Zero();
  double var_s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 ds = src[i] - mu_s;
    const Vec3 dd = dst[i] - mu_d;
    cov += dd * ds.transpose();
    var_s += ds.squaredNorm();
  }
  cov /= static_cast<double>(n);
  var_s /= static_cast<double>(n);

  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 s = Mat3::Identity();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) s(2, 2) = -1.0;
  out.rotation = svd.matrixU() * s * svd.matrixV().transpose();
  if (with_scale && var_s > 0.0) {
    out.scale = (svd.singularValues().asDiagonal() * s).trace() / var_s;
  }
  out.translation = mu_d - out.scale * out.rotation * mu_s;
  return out;
}

}  // namespace vslam
