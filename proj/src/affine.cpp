#include "rkp/affine.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

namespace rkp {

namespace {

constexpr double kSingularDet = 1e-12;

double unit_uniform(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

double symmetric_uniform(std::mt19937_64& gen, double limit) {
  return limit * (2.0 * unit_uniform(gen) - 1.0);
}

}  // namespace

AffineTransform::AffineTransform() : m_(Matrix::Zero()) {
  m_(0, 0) = 1.0;
  m_(1, 1) = 1.0;
}

AffineTransform::AffineTransform(const Matrix& m) : m_(m) {
  if (!m_.allFinite()) throw std::invalid_argument("affine transform has non-finite entries");
  if (std::abs(determinant()) < kSingularDet)
    throw std::invalid_argument("affine transform is singular");
}

AffineTransform AffineTransform::translation(double tx, double ty) {
  Matrix m;
  m << 1, 0, tx, 0, 1, ty;
  return AffineTransform(m);
}

AffineTransform AffineTransform::rotation_about(double radians, const Eigen::Vector2d& center) {
  Eigen::Matrix2d r;
  r << std::cos(radians), -std::sin(radians), std::sin(radians), std::cos(radians);
  Matrix m;
  m.leftCols<2>() = r;
  m.col(2) = center - r * center;
  return AffineTransform(m);
}

double AffineTransform::determinant() const {
  return m_(0, 0) * m_(1, 1) - m_(0, 1) * m_(1, 0);
}

AffineTransform AffineTransform::inverse() const {
  const double det = determinant();
  Eigen::Matrix2d inv;
  inv << m_(1, 1) / det, -m_(0, 1) / det, -m_(1, 0) / det, m_(0, 0) / det;
  Matrix out;
  out.leftCols<2>() = inv;
  out.col(2) = -(inv * m_.col(2));
  return AffineTransform(out);
}

std::string AffineTransform::to_text() const {
  std::string out;
  char buf[40];
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 3; ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", m_(r, c));
      if (!out.empty()) out += ' ';
      out += buf;
    }
  }
  out += '\n';
  return out;
}

AffineTransform AffineTransform::from_text(std::string_view text) {
  std::istringstream in{std::string(text)};
  Matrix m;
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 3; ++c) {
      if (!(in >> m(r, c))) throw std::invalid_argument("affine text needs 6 numbers");
    }
  }
  return AffineTransform(m);
}

AffineTransform operator*(const AffineTransform& a, const AffineTransform& b) {
  AffineTransform::Matrix m;
  m.leftCols<2>() = a.linear() * b.linear();
  m.col(2) = a.linear() * b.offset() + a.offset();
  return AffineTransform(m);
}

AffineTransform random_affine(std::uint64_t seed, const AffineLimits& limits,
                              const Eigen::Vector2d& center) {
  if (limits.max_rotation_deg < 0 || limits.max_translation_px < 0 || limits.max_scale_dev < 0 ||
      limits.max_shear < 0)
    throw std::invalid_argument("affine limits must be non-negative");

  std::mt19937_64 gen(seed);
  const double theta = symmetric_uniform(gen, limits.max_rotation_deg) * std::numbers::pi / 180.0;
  const double sx = 1.0 + symmetric_uniform(gen, limits.max_scale_dev);
  const double sy = 1.0 + symmetric_uniform(gen, limits.max_scale_dev);
  const double shear = symmetric_uniform(gen, limits.max_shear);
  const double tx = symmetric_uniform(gen, limits.max_translation_px);
  const double ty = symmetric_uniform(gen, limits.max_translation_px);

  Eigen::Matrix2d scale = Eigen::Vector2d(sx, sy).asDiagonal();
  Eigen::Matrix2d shear_m;
  shear_m << 1, shear, 0, 1;
  Eigen::Matrix2d rot;
  rot << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
  const Eigen::Matrix2d a = scale * shear_m * rot;

  AffineTransform::Matrix m;
  m.leftCols<2>() = a;
  m.col(2) = center - a * center + Eigen::Vector2d(tx, ty);
  return AffineTransform(m);
}

}  // namespace rkp
