#include "rkp/visualize.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rkp/error.hpp"
#include "rkp/pgm.hpp"

namespace rkp {

void RgbImage::set(int x, int y, const std::array<std::uint8_t, 3>& c) {
  if (x < 0 || y < 0 || x >= width || y >= height) return;
  const std::size_t k = (static_cast<std::size_t>(y) * width + x) * 3;
  pixels[k] = c[0];
  pixels[k + 1] = c[1];
  pixels[k + 2] = c[2];
}

std::array<std::uint8_t, 3> confidence_color(double confidence) {
  const double c = std::clamp(confidence, 0.0, 1.0);
  const auto r = static_cast<std::uint8_t>(std::lround(255.0 * std::min(1.0, 2.0 * (1.0 - c))));
  const auto g = static_cast<std::uint8_t>(std::lround(255.0 * std::min(1.0, 2.0 * c)));
  return {r, g, 0};
}

void draw_line(RgbImage& img, Eigen::Vector2d a, Eigen::Vector2d b, const std::array<std::uint8_t, 3>& color) {
  int x0 = static_cast<int>(std::lround(a.x())), y0 = static_cast<int>(std::lround(a.y()));
  const int x1 = static_cast<int>(std::lround(b.x())), y1 = static_cast<int>(std::lround(b.y()));
  const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
  const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    img.set(x0, y0, color);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) err += dy, x0 += sx;
    if (e2 <= dx) err += dx, y0 += sy;
  }
}

RgbImage render_matches(const Image2D& left, const Image2D& right, const KeypointGraph& a, const KeypointGraph& b,
                        const MatchSet& matches) {
  const int lw = static_cast<int>(left.cols()), rw = static_cast<int>(right.cols());
  const int h = static_cast<int>(std::max(left.rows(), right.rows()));
  RgbImage out(lw + rw, h);
  const auto grey = [](double v) {
    const auto g = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
    return std::array<std::uint8_t, 3>{g, g, g};
  };
  for (int y = 0; y < left.rows(); ++y)
    for (int x = 0; x < lw; ++x) out.set(x, y, grey(left(y, x)));
  for (int y = 0; y < right.rows(); ++y)
    for (int x = 0; x < rw; ++x) out.set(lw + x, y, grey(right(y, x)));

  const std::array<std::uint8_t, 3> marker{0, 160, 255};
  const auto mark = [&](Eigen::Vector2d p) {
    const int x = static_cast<int>(std::lround(p.x())), y = static_cast<int>(std::lround(p.y()));
    for (int d = -1; d <= 1; ++d) {
      out.set(x + d, y, marker);
      out.set(x, y + d, marker);
    }
  };
  const Eigen::Vector2d shift(lw, 0);
  for (const auto& k : a.keypoints) mark(k.position);
  for (const auto& k : b.keypoints) mark(k.position + shift);

  for (const auto& m : matches.pairs) {
    if (m.a < 0 || m.b < 0 || m.a >= static_cast<int>(a.size()) || m.b >= static_cast<int>(b.size()))
      throw ContractError("render_matches: match index out of range");
    draw_line(out, a.keypoints[m.a].position, b.keypoints[m.b].position + shift, confidence_color(m.confidence));
  }
  return out;
}

std::vector<std::uint8_t> encode_ppm(const RgbImage& img) {
  const std::string header = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

void save_ppm(const std::filesystem::path& path, const RgbImage& img) { write_file_bytes(path, encode_ppm(img)); }

}  // namespace rkp
