#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <stdexcept>

#include "rkp/radiomics.hpp"

namespace rkp {

namespace {

using Point = Eigen::Vector2d;

double cross(const Point& o, const Point& a, const Point& b) {
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

// Andrew's monotone chain; collinear points dropped.
std::vector<Point> convex_hull(std::vector<Point> pts) {
  std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  std::vector<Point> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

}  // namespace

Eigen::Matrix<double, kShapeCount, 1> shape_features(std::span<const Pixel> pixels) {
  if (pixels.empty()) throw std::invalid_argument("shape_features: empty pixel set");

  std::set<std::pair<int, int>> occupied;
  for (const auto& p : pixels) occupied.emplace(p.x(), p.y());
  auto has = [&](int x, int y) { return occupied.count({x, y}) > 0; };

  // Perimeter counts exposed unit edges; the polygon area follows from Green's theorem
  // (integral of x dy) over the same exposed vertical edges.
  double perimeter = 0.0;
  double area = 0.0;
  for (const auto& [x, y] : occupied) {
    const bool right = !has(x + 1, y);
    const bool left = !has(x - 1, y);
    perimeter += right + left + !has(x, y + 1) + !has(x, y - 1);
    if (right) area += x + 0.5;
    if (left) area -= x - 0.5;
  }
  const auto pixel_surface = static_cast<double>(occupied.size());

  Point mean = Point::Zero();
  for (const auto& [x, y] : occupied) mean += Point(x, y);
  mean /= pixel_surface;
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& [x, y] : occupied) {
    const Point d = Point(x, y) - mean;
    cov += d * d.transpose();
  }
  cov /= pixel_surface;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov, Eigen::EigenvaluesOnly);
  const double minor_ev = std::max(0.0, es.eigenvalues()[0]);
  const double major_ev = std::max(0.0, es.eigenvalues()[1]);
  const double elongation = major_ev > 0 ? std::sqrt(minor_ev / major_ev) : 1.0;

  std::vector<Point> pts;
  pts.reserve(occupied.size());
  for (const auto& [x, y] : occupied) pts.emplace_back(x, y);
  const std::vector<Point> hull = convex_hull(std::move(pts));
  double diameter = 0.0;
  for (std::size_t i = 0; i < hull.size(); ++i)
    for (std::size_t j = i + 1; j < hull.size(); ++j)
      diameter = std::max(diameter, (hull[i] - hull[j]).norm());

  const double sphericity = 2.0 * std::sqrt(std::numbers::pi * area) / perimeter;

  Eigen::Matrix<double, kShapeCount, 1> f;
  f << area, pixel_surface, perimeter, perimeter / area, sphericity, 1.0 / sphericity, diameter,
      4.0 * std::sqrt(major_ev), 4.0 * std::sqrt(minor_ev), elongation;
  return f;
}

}  // namespace rkp
