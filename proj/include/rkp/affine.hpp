#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <string_view>

namespace rkp {

/// 2x3 affine map [a b tx; c d ty] from source (x, y) to target coordinates.
/// Always invertible; construction from a singular matrix throws.
class AffineTransform {
 public:
  using Matrix = Eigen::Matrix<double, 2, 3>;

  AffineTransform();
  explicit AffineTransform(const Matrix& m);

  static AffineTransform identity() { return AffineTransform(); }
  static AffineTransform translation(double tx, double ty);
  static AffineTransform rotation_about(double radians, const Eigen::Vector2d& center);

  const Matrix& matrix() const { return m_; }
  Eigen::Matrix2d linear() const { return m_.leftCols<2>(); }
  Eigen::Vector2d offset() const { return m_.col(2); }
  double determinant() const;

  AffineTransform inverse() const;
  Eigen::Vector2d apply(const Eigen::Vector2d& p) const { return m_.leftCols<2>() * p + m_.col(2); }

  /// Plain-text form: six numbers, row-major, round-trip exact.
  std::string to_text() const;
  static AffineTransform from_text(std::string_view text);

 private:
  Matrix m_;
};

/// (a * b)(p) = a(b(p)).
AffineTransform operator*(const AffineTransform& a, const AffineTransform& b);

inline Eigen::Vector2d apply_to_point(const AffineTransform& t, const Eigen::Vector2d& p) {
  return t.apply(p);
}

struct AffineLimits {
  double max_rotation_deg = 15.0;
  double max_translation_px = 10.0;
  double max_scale_dev = 0.10;
  double max_shear = 0.0;
};

/// Random transform about `center`: p -> S*H*R*(p - c) + c + t with every parameter
/// uniform inside its limit. Same seed, same matrix.
AffineTransform random_affine(std::uint64_t seed, const AffineLimits& limits,
                              const Eigen::Vector2d& center = Eigen::Vector2d::Zero());

}  // namespace rkp
