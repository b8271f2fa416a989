#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "rkp/radiomics.hpp"

namespace rkp {

namespace {

// Offsets for 0, 45, 90 and 135 degrees (image y axis points down).
constexpr int kOffsets[4][2] = {{1, 0}, {1, -1}, {0, -1}, {-1, -1}};

double plogp_sum(const Eigen::ArrayXd& p) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i)
    if (p[i] > 0) h -= p[i] * std::log2(p[i]);
  return h;
}

}  // namespace

GlcmMatrix glcm_from_levels(std::span<const Pixel> pixels, std::span<const int> levels, int bins) {
  if (bins < 2) throw std::invalid_argument("glcm: bins must be >= 2");
  if (pixels.empty() || pixels.size() != levels.size())
    throw std::invalid_argument("glcm: pixels and levels must be non-empty and aligned");

  int x0 = pixels[0].x(), x1 = x0, y0 = pixels[0].y(), y1 = y0;
  for (const auto& p : pixels) {
    x0 = std::min(x0, p.x());
    x1 = std::max(x1, p.x());
    y0 = std::min(y0, p.y());
    y1 = std::max(y1, p.y());
  }
  const int w = x1 - x0 + 1;
  const int h = y1 - y0 + 1;
  Eigen::ArrayXXi grid = Eigen::ArrayXXi::Constant(h, w, -1);
  for (std::size_t i = 0; i < pixels.size(); ++i)
    grid(pixels[i].y() - y0, pixels[i].x() - x0) = levels[i];

  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(bins, bins);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int a = grid(y, x);
      if (a < 0) continue;
      for (const auto& off : kOffsets) {
        const int nx = x + off[0];
        const int ny = y + off[1];
        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
        const int b = grid(ny, nx);
        if (b < 0) continue;
        counts(a, b) += 1.0;
      }
    }
  }
  counts += counts.transpose().eval();
  const double total = counts.sum();
  if (total == 0) throw std::invalid_argument("glcm: region too small for texture");
  return GlcmMatrix{counts / total};
}

GlcmMatrix glcm(const RegionOfInterest& roi, int bins) {
  const std::vector<double> values = roi.intensities();
  const std::vector<int> levels = discretize(values, bins);
  return glcm_from_levels(roi.pixels, levels, bins);
}

Eigen::Matrix<double, kGlcmCount, 1> glcm_features(const GlcmMatrix& m) {
  const Eigen::MatrixXd& p = m.p;
  const int ng = m.bins();
  // Gray levels are numbered 1..Ng in every formula below.
  const Eigen::ArrayXd level = Eigen::ArrayXd::LinSpaced(ng, 1, ng);
  const Eigen::ArrayXd px = p.rowwise().sum().array();
  const Eigen::ArrayXd py = p.colwise().sum().transpose().array();

  const double mux = (level * px).sum();
  const double muy = (level * py).sum();
  const double sigx = std::sqrt(((level - mux).square() * px).sum());
  const double sigy = std::sqrt(((level - muy).square() * py).sum());

  Eigen::ArrayXd p_sum = Eigen::ArrayXd::Zero(2 * ng + 1);  // index k = i + j, 2..2Ng
  Eigen::ArrayXd p_diff = Eigen::ArrayXd::Zero(ng);         // index k = |i - j|
  double autocorr = 0, prominence = 0, shade = 0, tendency = 0, contrast = 0;
  double energy = 0, idm = 0, idmn = 0, id = 0, idn = 0, inv_var = 0, sum_squares = 0;
  double hxy = 0, hxy1 = 0, hxy2 = 0;
  for (int a = 0; a < ng; ++a) {
    for (int b = 0; b < ng; ++b) {
      const double i = a + 1.0;
      const double j = b + 1.0;
      const double v = p(a, b);
      const double pxy = px[a] * py[b];
      if (pxy > 0) hxy2 -= pxy * std::log2(pxy);
      if (v == 0) continue;
      const double cluster = i + j - mux - muy;
      const double d = i - j;
      p_sum[a + b + 2] += v;
      p_diff[std::abs(a - b)] += v;
      autocorr += v * i * j;
      prominence += v * std::pow(cluster, 4);
      shade += v * std::pow(cluster, 3);
      tendency += v * cluster * cluster;
      contrast += v * d * d;
      energy += v * v;
      idm += v / (1 + d * d);
      idmn += v / (1 + d * d / (ng * ng));
      id += v / (1 + std::abs(d));
      idn += v / (1 + std::abs(d) / ng);
      if (a != b) inv_var += v / (d * d);
      sum_squares += v * (i - mux) * (i - mux);
      hxy -= v * std::log2(v);
      hxy1 -= v * std::log2(pxy);
    }
  }

  // Degenerate denominators: correlation-type measures default to 1, Imc1 to 0.
  const double correlation = sigx * sigy > 0 ? (autocorr - mux * muy) / (sigx * sigy) : 1.0;

  const Eigen::ArrayXd k_diff = Eigen::ArrayXd::LinSpaced(ng, 0, ng - 1);
  const double diff_avg = (k_diff * p_diff).sum();
  const double diff_var = ((k_diff - diff_avg).square() * p_diff).sum();
  const Eigen::ArrayXd k_sum = Eigen::ArrayXd::LinSpaced(2 * ng + 1, 0, 2 * ng);
  const double sum_avg = (k_sum * p_sum).sum();

  const double hx = plogp_sum(px);
  const double hy = plogp_sum(py);
  const double hmax = std::max(hx, hy);
  const double imc1 = hmax > 0 ? (hxy - hxy1) / hmax : 0.0;
  const double imc2 = std::sqrt(std::max(0.0, 1.0 - std::exp(-2.0 * (hxy2 - hxy))));

  // MCC: second largest eigenvalue of Q = Dx^-1 P Dy^-1 P^T, computed through the
  // similar symmetric matrix Dx^-1/2 P Dy^-1 P^T Dx^-1/2 restricted to occupied levels.
  double mcc = 1.0;
  std::vector<int> rows, cols;
  for (int a = 0; a < ng; ++a) {
    if (px[a] > 0) rows.push_back(a);
    if (py[a] > 0) cols.push_back(a);
  }
  if (rows.size() > 1) {
    Eigen::MatrixXd b(rows.size(), cols.size());
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t c = 0; c < cols.size(); ++c)
        b(r, c) = p(rows[r], cols[c]) / std::sqrt(px[rows[r]] * py[cols[c]]);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(b * b.transpose(), Eigen::EigenvaluesOnly);
    const auto& ev = es.eigenvalues();  // ascending
    mcc = std::sqrt(std::max(0.0, ev[ev.size() - 2]));
  }

  Eigen::Matrix<double, kGlcmCount, 1> f;
  f << autocorr, mux, prominence, shade, tendency, contrast, correlation, diff_avg,
      plogp_sum(p_diff), diff_var, energy, hxy, imc1, imc2, idm, idmn, id, idn, inv_var,
      p.maxCoeff(), sum_avg, plogp_sum(p_sum), sum_squares, mcc;
  return f;
}

}  // namespace rkp
