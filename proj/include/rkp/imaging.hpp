#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <type_traits>
#include <vector>

#include "rkp/affine.hpp"

namespace rkp {

/// Row-major raster, indexed (row = y, col = x). Pixel centres sit on integer coordinates.
template <typename Scalar>
using Image = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Image2D = Image<double>;
using Heatmap = Image<double>;
using LabelMask = Image<std::int32_t>;

enum class Interpolation { Bilinear, Nearest };

namespace detail {

// Half-sample symmetric reflection: ... c b a | a b c ... | c b a ...
inline Eigen::Index reflect_index(Eigen::Index i, Eigen::Index n) {
  const Eigen::Index period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

template <typename Scalar>
double sample_bilinear(const Image<Scalar>& img, double x, double y) {
  const double fx0 = std::floor(x);
  const double fy0 = std::floor(y);
  const double fx = x - fx0;
  const double fy = y - fy0;
  const auto x0 = static_cast<Eigen::Index>(fx0);
  const auto y0 = static_cast<Eigen::Index>(fy0);
  auto at = [&](Eigen::Index xx, Eigen::Index yy) -> double {
    if (xx < 0 || yy < 0 || xx >= img.cols() || yy >= img.rows()) return 0.0;
    return static_cast<double>(img(yy, xx));
  };
  return (1.0 - fx) * (1.0 - fy) * at(x0, y0) + fx * (1.0 - fy) * at(x0 + 1, y0) +
         (1.0 - fx) * fy * at(x0, y0 + 1) + fx * fy * at(x0 + 1, y0 + 1);
}

}  // namespace detail

/// Normalised 1-D Gaussian taps, radius ceil(3 sigma).
std::vector<double> gaussian_kernel(double sigma);

/// Separable Gaussian smoothing with reflect padding.
template <typename Scalar>
Image<Scalar> gaussian_blur(const Image<Scalar>& img, double sigma) {
  static_assert(std::is_floating_point_v<Scalar>, "gaussian_blur needs a real-valued image");
  if (!(sigma > 0)) throw std::invalid_argument("gaussian_blur: sigma must be positive");
  const std::vector<double> k = gaussian_kernel(sigma);
  const auto radius = static_cast<Eigen::Index>(k.size() / 2);
  const Eigen::Index h = img.rows();
  const Eigen::Index w = img.cols();

  Image<double> tmp(h, w);
  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index x = 0; x < w; ++x) {
      double acc = 0.0;
      for (Eigen::Index j = -radius; j <= radius; ++j)
        acc += k[j + radius] * static_cast<double>(img(y, detail::reflect_index(x + j, w)));
      tmp(y, x) = acc;
    }
  }
  Image<Scalar> out(h, w);
  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index x = 0; x < w; ++x) {
      double acc = 0.0;
      for (Eigen::Index j = -radius; j <= radius; ++j)
        acc += k[j + radius] * tmp(detail::reflect_index(y + j, h), x);
      out(y, x) = static_cast<Scalar>(acc);
    }
  }
  return out;
}

/// output(x, y) = input(t^-1(x, y)); samples outside the source are 0.
/// Integer rasters (label masks) only accept nearest-neighbour sampling.
template <typename Scalar>
Image<Scalar> warp_affine(const Image<Scalar>& img, const AffineTransform& t, Interpolation interp) {
  if constexpr (std::is_integral_v<Scalar>) {
    if (interp != Interpolation::Nearest)
      throw std::invalid_argument("warp_affine: label masks must use nearest interpolation");
  }
  const AffineTransform inv = t.inverse();
  const auto& m = inv.matrix();
  Image<Scalar> out(img.rows(), img.cols());
  for (Eigen::Index y = 0; y < img.rows(); ++y) {
    for (Eigen::Index x = 0; x < img.cols(); ++x) {
      const double sx = m(0, 0) * x + m(0, 1) * y + m(0, 2);
      const double sy = m(1, 0) * x + m(1, 1) * y + m(1, 2);
      if (interp == Interpolation::Nearest) {
        const auto ix = static_cast<Eigen::Index>(std::floor(sx + 0.5));
        const auto iy = static_cast<Eigen::Index>(std::floor(sy + 0.5));
        const bool inside = ix >= 0 && iy >= 0 && ix < img.cols() && iy < img.rows();
        out(y, x) = inside ? img(iy, ix) : Scalar(0);
      } else {
        out(y, x) = static_cast<Scalar>(detail::sample_bilinear(img, sx, sy));
      }
    }
  }
  return out;
}

/// Bilinear resampling through an explicit output->input map, plus the spatial
/// derivative of the interpolant at every sample (for gradient-based registration).
struct SampledImage {
  Image2D value;
  Image2D grad_x;
  Image2D grad_y;
};

SampledImage sample_with_gradient(const Image2D& img, const AffineTransform& output_to_input);

/// Keypoints splatted as unit impulses at their nearest pixel, blurred, and scaled so an
/// isolated keypoint peaks at exactly 1. Values clamped to [0, 1].
Heatmap render_heatmap(std::span<const Eigen::Vector2d> points, Eigen::Index width,
                       Eigen::Index height, double sigma);

}  // namespace rkp
