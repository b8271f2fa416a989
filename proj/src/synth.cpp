#include "rkp/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <stdexcept>

namespace rkp {

namespace {

constexpr double kTau = 2.0 * std::numbers::pi;

// Uniform and normal draws built directly on the 64-bit engine so sequences do not depend
// on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTau * uniform());
  }

 private:
  std::mt19937_64 gen_;
};

std::uint64_t derive(std::uint64_t seed, std::uint64_t k) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (k + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

struct Wave {
  double kx, ky, phase, amplitude;
  double operator()(double x, double y) const { return amplitude * std::sin(kx * x + ky * y + phase); }
};

Wave random_wave(Rng& rng, double wavelength_lo, double wavelength_hi, double amplitude) {
  const double theta = rng.uniform(0.0, kTau);
  const double k = kTau / rng.uniform(wavelength_lo, wavelength_hi);
  return {k * std::cos(theta), k * std::sin(theta), rng.uniform(0.0, kTau), amplitude};
}

std::vector<Eigen::Vector2d> place_seeds(Rng& rng, int k, double cx, double cy, double ax, double ay) {
  const double area = std::numbers::pi * ax * ay;
  double spacing = 0.8 * std::sqrt(area / k);
  while (spacing >= 2.0) {
    std::vector<Eigen::Vector2d> seeds;
    for (int attempt = 0; attempt < 200 * k && static_cast<int>(seeds.size()) < k; ++attempt) {
      const double x = rng.uniform(cx - ax, cx + ax), y = rng.uniform(cy - ay, cy + ay);
      const double ex = (x - cx) / ax, ey = (y - cy) / ay;
      if (ex * ex + ey * ey > 0.85) continue;
      const Eigen::Vector2d p(x, y);
      bool ok = true;
      for (const auto& s : seeds) ok = ok && (s - p).norm() >= spacing;
      if (ok) seeds.push_back(p);
    }
    if (static_cast<int>(seeds.size()) == k) return seeds;
    spacing *= 0.9;
  }
  return {};
}

}  // namespace

SynthImage synth_generate(const SynthSpec& spec) {
  if (spec.regions < 2) throw std::invalid_argument("synth: need at least 2 regions");
  if (spec.width < 32 || spec.height < 32) throw std::invalid_argument("synth: image must be at least 32x32");
  const int w = spec.width, h = spec.height, k = spec.regions;
  const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
  const double ax = 0.36 * w, ay = 0.38 * h;
  const double ellipse_px = std::numbers::pi * ax * ay;
  if (ellipse_px < 4.0 * 4.0 * k)
    throw std::invalid_argument("synth: " + std::to_string(k) + " regions do not fit in a " + std::to_string(w) +
                                "x" + std::to_string(h) + " image");

  for (int attempt = 0; attempt < 16; ++attempt) {
    Rng rng(derive(spec.seed, attempt));
    const auto seeds = place_seeds(rng, k, cx, cy, ax, ay);
    if (seeds.empty()) continue;

    const double spacing = std::sqrt(ellipse_px / k);
    std::vector<Wave> warp_x, warp_y;
    for (int i = 0; i < 3; ++i) {
      warp_x.push_back(random_wave(rng, 1.5 * spacing, 3.0 * spacing, 0.12 * spacing));
      warp_y.push_back(random_wave(rng, 1.5 * spacing, 3.0 * spacing, 0.12 * spacing));
    }

    SynthImage out{Image2D::Zero(h, w), LabelMask::Zero(h, w)};
    std::vector<long> area(k + 1, 0);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double ex = (x - cx) / ax, ey = (y - cy) / ay;
        if (ex * ex + ey * ey > 1.0) continue;
        double px = x, py = y;
        for (const auto& wv : warp_x) px += wv(x, y);
        for (const auto& wv : warp_y) py += wv(x, y);
        int best = 0;
        double best_d = INFINITY;
        for (int s = 0; s < k; ++s) {
          const double d = (seeds[s] - Eigen::Vector2d(px, py)).squaredNorm();
          if (d < best_d) best_d = d, best = s;
        }
        out.mask(y, x) = best + 1;
        ++area[best + 1];
      }
    }
    if (*std::min_element(area.begin() + 1, area.end()) < 4) continue;

    std::vector<std::set<int>> neighbours(k + 1);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const int l = out.mask(y, x);
        const auto link = [&](int m) {
          if (m == l) return;
          neighbours[l].insert(m);
          neighbours[m].insert(l);
        };
        if (x + 1 < w) link(out.mask(y, x + 1));
        if (y + 1 < h) link(out.mask(y + 1, x));
      }

    std::vector<double> base(k + 1, 0.0);
    std::vector<Wave> stripes(k + 1);
    for (int l = 1; l <= k; ++l) {
      double pick = rng.uniform(0.2, 0.85), best_gap = -1.0;
      for (int tries = 0; tries < 64; ++tries) {
        const double v = tries == 0 ? pick : rng.uniform(0.2, 0.85);
        double gap = INFINITY;
        for (int n : neighbours[l])
          if (n != 0 && n < l) gap = std::min(gap, std::abs(v - base[n]));
        if (gap > best_gap) best_gap = gap, pick = v;
        if (gap >= 0.1) break;
      }
      base[l] = pick;
      stripes[l] = random_wave(rng, 3.0, 9.0, rng.uniform(0.02, 0.08));
    }
    const Wave shared_a = random_wave(rng, spec.texture_scale, 2.0 * spec.texture_scale, 0.04);
    const Wave shared_b = random_wave(rng, spec.texture_scale, 2.0 * spec.texture_scale, 0.03);

    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const int l = out.mask(y, x);
        double v = 0.0;
        if (l != 0) v = base[l] + stripes[l](x, y) + shared_a(x, y) + shared_b(x, y);
        v += spec.noise_sigma * rng.normal();
        out.image(y, x) = std::clamp(v, 0.0, 1.0);
      }
    return out;
  }
  throw std::invalid_argument("synth: could not place " + std::to_string(k) + " separated regions");
}

Image2D perturb_intensity(const Image2D& img, double gamma, double noise_sigma, std::uint64_t seed) {
  if (!(gamma > 0)) throw std::invalid_argument("perturb_intensity: gamma must be positive");
  Rng rng(seed);
  Image2D out(img.rows(), img.cols());
  for (Eigen::Index k = 0; k < img.size(); ++k) {
    const double v = std::pow(std::clamp(img.data()[k], 0.0, 1.0), gamma) + noise_sigma * rng.normal();
    out.data()[k] = std::clamp(v, 0.0, 1.0);
  }
  return out;
}

DeformedPair make_deformed_pair(const SynthSpec& spec, const AffineLimits& limits, const PerturbConfig& perturb,
                                std::uint64_t deform_seed) {
  DeformedPair p;
  p.a = synth_generate(spec);
  const Eigen::Vector2d centre((spec.width - 1) / 2.0, (spec.height - 1) / 2.0);
  p.t = random_affine(deform_seed, limits, centre);
  p.b.image = perturb_intensity(warp_affine(p.a.image, p.t, Interpolation::Bilinear), perturb.gamma,
                                perturb.noise_sigma, derive(deform_seed, 7));
  p.b.mask = warp_affine(p.a.mask, p.t, Interpolation::Nearest);
  return p;
}

GraphPair graph_pair(const DeformedPair& pair, const KeypointConfig& config) {
  GraphPair g;
  g.a = extract_radiomic_keypoints(pair.a.image, pair.a.mask, config);
  g.b = extract_radiomic_keypoints(pair.b.image, pair.b.mask, config);
  g.gt = label_correspondences(g.a, g.b);
  return g;
}

std::vector<DeformedPair> make_pair_dataset(const PairDatasetConfig& config) {
  std::vector<DeformedPair> out;
  out.reserve(config.count);
  for (int i = 0; i < config.count; ++i) {
    SynthSpec spec = config.spec;
    spec.seed = derive(config.seed, 2 * static_cast<std::uint64_t>(i));
    out.push_back(make_deformed_pair(spec, config.limits, config.perturb, derive(config.seed, 2 * static_cast<std::uint64_t>(i) + 1)));
  }
  return out;
}

}  // namespace rkp
