#include "rkp/imaging.hpp"

#include <algorithm>

namespace rkp {

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0)) throw std::invalid_argument("gaussian_kernel: sigma must be positive");
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += k[i + radius];
  }
  for (double& v : k) v /= sum;
  return k;
}

SampledImage sample_with_gradient(const Image2D& img, const AffineTransform& output_to_input) {
  const Eigen::Index h = img.rows();
  const Eigen::Index w = img.cols();
  const auto& m = output_to_input.matrix();
  SampledImage s{Image2D::Zero(h, w), Image2D::Zero(h, w), Image2D::Zero(h, w)};

  auto at = [&](Eigen::Index xx, Eigen::Index yy) -> double {
    if (xx < 0 || yy < 0 || xx >= w || yy >= h) return 0.0;
    return img(yy, xx);
  };

  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index x = 0; x < w; ++x) {
      const double sx = m(0, 0) * x + m(0, 1) * y + m(0, 2);
      const double sy = m(1, 0) * x + m(1, 1) * y + m(1, 2);
      const double fx0 = std::floor(sx);
      const double fy0 = std::floor(sy);
      const double fx = sx - fx0;
      const double fy = sy - fy0;
      const auto x0 = static_cast<Eigen::Index>(fx0);
      const auto y0 = static_cast<Eigen::Index>(fy0);
      if (x0 < -1 || y0 < -1 || x0 >= w || y0 >= h) continue;
      const double v00 = at(x0, y0);
      const double v10 = at(x0 + 1, y0);
      const double v01 = at(x0, y0 + 1);
      const double v11 = at(x0 + 1, y0 + 1);
      s.value(y, x) = (1 - fx) * (1 - fy) * v00 + fx * (1 - fy) * v10 + (1 - fx) * fy * v01 +
                      fx * fy * v11;
      s.grad_x(y, x) = (1 - fy) * (v10 - v00) + fy * (v11 - v01);
      s.grad_y(y, x) = (1 - fx) * (v01 - v00) + fx * (v11 - v10);
    }
  }
  return s;
}

Heatmap render_heatmap(std::span<const Eigen::Vector2d> points, Eigen::Index width,
                       Eigen::Index height, double sigma) {
  Heatmap impulses = Heatmap::Zero(height, width);
  // Support: the 3-sigma disc around each splatted pixel. The square blur footprint
  // and reflected border mass are cut back to it.
  Image<bool> support = Image<bool>::Constant(height, width, false);
  const double reach = 3.0 * sigma;
  const auto r = static_cast<Eigen::Index>(std::floor(reach));
  for (const auto& p : points) {
    const auto x = static_cast<Eigen::Index>(std::floor(p.x() + 0.5));
    const auto y = static_cast<Eigen::Index>(std::floor(p.y() + 0.5));
    if (x < 0 || y < 0 || x >= width || y >= height) continue;
    impulses(y, x) = 1.0;
    for (Eigen::Index yy = std::max<Eigen::Index>(0, y - r); yy <= std::min(height - 1, y + r); ++yy)
      for (Eigen::Index xx = std::max<Eigen::Index>(0, x - r); xx <= std::min(width - 1, x + r); ++xx)
        if (double((xx - x) * (xx - x) + (yy - y) * (yy - y)) <= reach * reach) support(yy, xx) = true;
  }
  const std::vector<double> k = gaussian_kernel(sigma);
  const double peak = k[k.size() / 2] * k[k.size() / 2];
  Heatmap out = (gaussian_blur(impulses, sigma) / peak).min(1.0);
  return support.select(out, 0.0);
}

}  // namespace rkp
