#include "rkp/detector.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "rkp/error.hpp"
#include "rkp/layers.hpp"

namespace rkp {

using ad::Tensor;

namespace {

const char* kEncoder[3] = {"enc1", "enc2", "enc3"};
const char* kDecoder[3] = {"dec3", "dec2", "dec1"};

void add_decoder(ad::ParameterStore& ps, const std::string& prefix, const std::array<int, 4>& w) {
  // Decoder block k upsamples to the resolution of encoder skip 3-k.
  for (int k = 0; k < 3; ++k) {
    const int level = 3 - k;
    const int in = 2 * w[level];
    const int out = w[level - 1];
    const std::string base = prefix + "." + kDecoder[k];
    ad::add_conv(ps, base + ".a", in, out);
    ad::add_conv(ps, base + ".b", out, out);
  }
}

}  // namespace

DetectorNet::DetectorNet(const DetectorConfig& config) : config_(config), store_(config.seed) {
  const auto& w = config_.widths;
  ad::add_conv(store_, "stem", 1, w[0]);
  for (int k = 0; k < 3; ++k) {
    ad::add_conv(store_, std::string(kEncoder[k]) + ".a", w[k], w[k + 1]);
    ad::add_conv(store_, std::string(kEncoder[k]) + ".b", w[k + 1], w[k + 1]);
  }
  add_decoder(store_, "kp", w);
  ad::add_conv(store_, "head.1", w[0], w[0]);
  ad::add_conv(store_, "head.2", w[0], w[0]);
  ad::add_conv(store_, "head.3", w[0], 1);
  add_decoder(store_, "desc", w);
  ad::add_conv(store_, "desc.proj", w[0], config_.descriptor_dim);

  auto& h = store_.hyperparameters();
  h["model"] = "detector";
  h["widths"] = w;
  h["descriptor_dim"] = config_.descriptor_dim;
}

DetectorNet::DetectorNet(ad::ParameterStore store) : store_(std::move(store)) {
  const auto& h = store_.hyperparameters();
  if (h.value("model", std::string()) != "detector")
    throw std::invalid_argument("weights do not describe a detector network");
  config_.widths = h.at("widths").get<std::array<int, 4>>();
  config_.descriptor_dim = h.at("descriptor_dim").get<int>();
  config_.seed = store_.seed();
}

Tensor DetectorNet::decode(const std::string& prefix, const Tensor& bottom,
                           const std::array<Tensor, 3>& skips) const {
  Tensor x = bottom;
  for (int k = 0; k < 3; ++k) {
    const Tensor& skip = skips[2 - k];
    const std::string base = prefix + "." + kDecoder[k];
    x = ad::upsample_bilinear(x, skip.dim(1), skip.dim(2));
    x = ad::concat({x, skip}, 0);
    x = ad::relu(ad::conv(store_, base + ".a", x));
    x = ad::relu(ad::conv(store_, base + ".b", x));
  }
  return x;
}

DetectorNet::Output DetectorNet::forward(const Image2D& image) const {
  if (image.rows() < 8 || image.cols() < 8)
    throw std::invalid_argument("detector: image must be at least 8x8");
  Tensor x = ad::relu(ad::conv(store_, "stem", image_tensor(image)));
  std::array<Tensor, 3> skips;
  for (int k = 0; k < 3; ++k) {
    x = ad::relu(ad::conv(store_, std::string(kEncoder[k]) + ".a", x));
    x = ad::relu(ad::conv(store_, std::string(kEncoder[k]) + ".b", x));
    skips[k] = x;
    x = ad::maxpool2x2(x);
  }

  Tensor k = decode("kp", x, skips);
  k = ad::relu(ad::conv(store_, "head.1", k));
  k = ad::relu(ad::conv(store_, "head.2", k));
  Tensor detection = ad::sigmoid(ad::conv(store_, "head.3", k));

  Tensor d = decode("desc", x, skips);
  Tensor descriptors = ad::normalize_channels(ad::conv(store_, "desc.proj", d));
  return {detection, descriptors};
}

Heatmap DetectorNet::detect(const Image2D& image) const {
  ad::NoGradGuard no_grad;
  return to_heatmap(forward(image).detection);
}

Tensor image_tensor(const Image2D& img) {
  Eigen::ArrayXd v(img.size());
  std::copy(img.data(), img.data() + img.size(), v.data());
  return Tensor::from({1, static_cast<int>(img.rows()), static_cast<int>(img.cols())}, std::move(v));
}

Heatmap to_heatmap(const Tensor& map) {
  if (map.rank() != 3 || map.dim(0) != 1) throw ContractError("to_heatmap: expected [1, H, W], got " +
                                                              ad::to_string(map.shape()));
  Heatmap h(map.dim(1), map.dim(2));
  std::copy(map.value().data(), map.value().data() + map.numel(), h.data());
  return h;
}

Heatmap ground_truth_heatmap(std::span<const Eigen::Vector2d> keypoints, Eigen::Index width,
                             Eigen::Index height, double sigma) {
  return render_heatmap(keypoints, width, height, sigma);
}

Tensor loss_clf(const Tensor& p, const Tensor& y) {
  if (p.shape() != y.shape())
    throw ContractError("loss_clf: shape mismatch " + ad::to_string(p.shape()) + " vs " +
                        ad::to_string(y.shape()));
  const double denom_value = p.value().square().sum() + y.value().square().sum();
  if (denom_value == 0.0) return ad::sum(p * 0.0);
  return 1.0 - 2.0 * ad::sum(p * y) / (ad::sum(ad::square(p)) + ad::sum(ad::square(y)));
}

double loss_clf(const Heatmap& p, const Heatmap& y) {
  if (p.rows() != y.rows() || p.cols() != y.cols()) throw ContractError("loss_clf: shape mismatch");
  const double denom = p.square().sum() + y.square().sum();
  if (denom == 0.0) return 0.0;
  return 1.0 - 2.0 * (p * y).sum() / denom;
}

Tensor descriptor_hinge(const Tensor& positive, const Tensor& random_negative, const Tensor& hard_negative,
                        double margin) {
  if (positive.shape() != random_negative.shape() || positive.shape() != hard_negative.shape())
    throw ContractError("descriptor_hinge: distance vectors differ in shape");
  return ad::sum(ad::relu(positive - 0.5 * (random_negative + hard_negative) + margin));
}

namespace {

Tensor row_distance(const Tensor& a, const Tensor& b) {
  return ad::sqrt(ad::sum(ad::square(a - b), 1) + 1e-12);
}

}  // namespace

Tensor loss_des(const Tensor& descriptors, const Tensor& warped_descriptors,
                std::span<const Eigen::Vector2d> keypoints, const AffineTransform& t,
                const DescriptorLossConfig& config) {
  if (descriptors.rank() != 3 || warped_descriptors.rank() != 3 ||
      descriptors.dim(0) != warped_descriptors.dim(0))
    throw ContractError("loss_des: descriptor maps must be [D, H, W] with equal D");
  if (keypoints.empty()) return ad::sum(descriptors * 0.0);

  const int c = descriptors.dim(0);
  const int h = descriptors.dim(1), w = descriptors.dim(2);
  const int hw2 = warped_descriptors.dim(1), ww2 = warped_descriptors.dim(2);
  const auto inside = [](const Eigen::Vector2d& p, int width, int height) {
    return p.x() >= 0 && p.y() >= 0 && p.x() <= width - 1 && p.y() <= height - 1;
  };

  std::vector<Eigen::Vector2d> targets;
  for (const auto& p : keypoints) {
    if (!inside(p, w, h)) throw ContractError("loss_des: keypoint outside the descriptor map");
    const Eigen::Vector2d q = t.apply(p);
    if (!inside(q, ww2, hw2)) throw ContractError("loss_des: warped keypoint outside the warped map");
    targets.push_back(q);
  }

  // Warped-image pixels whose preimage lies in the source image.
  const AffineTransform inv = t.inverse();
  std::vector<Eigen::Vector2d> valid;
  for (int y = 0; y < hw2; ++y)
    for (int x = 0; x < ww2; ++x)
      if (inside(inv.apply(Eigen::Vector2d(x, y)), w, h)) valid.emplace_back(x, y);

  const Tensor anchors = ad::sample_points(descriptors, keypoints);
  const Tensor positives = ad::sample_points(warped_descriptors, targets);

  std::vector<Eigen::Vector2d> random_pts, hard_pts;
  {
    ad::NoGradGuard no_grad;
    const auto& a = anchors.value();
    const auto& dw = warped_descriptors.value();
    const Eigen::Index plane = static_cast<Eigen::Index>(hw2) * ww2;
    std::mt19937_64 rng(config.seed);
    const double r2 = config.exclusion_radius * config.exclusion_radius;
    for (std::size_t k = 0; k < targets.size(); ++k) {
      std::vector<int> candidates;
      for (int i = 0; i < static_cast<int>(valid.size()); ++i)
        if ((valid[i] - targets[k]).squaredNorm() > r2) candidates.push_back(i);
      if (candidates.empty()) throw std::invalid_argument("image too small for margin sampling");

      std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
      random_pts.push_back(valid[candidates[pick(rng)]]);

      double best = INFINITY;
      int best_i = candidates.front();
      for (int i : candidates) {
        const Eigen::Index pix = static_cast<Eigen::Index>(valid[i].y()) * ww2 + static_cast<Eigen::Index>(valid[i].x());
        double d2 = 0.0;
        for (int ch = 0; ch < c; ++ch) {
          const double diff = a[static_cast<Eigen::Index>(k) * c + ch] - dw[ch * plane + pix];
          d2 += diff * diff;
        }
        if (d2 < best) {
          best = d2;
          best_i = i;
        }
      }
      hard_pts.push_back(valid[best_i]);
    }
  }

  const Tensor random_neg = ad::sample_points(warped_descriptors, random_pts);
  const Tensor hard_neg = ad::sample_points(warped_descriptors, hard_pts);
  return descriptor_hinge(row_distance(anchors, positives), row_distance(anchors, random_neg),
                          row_distance(anchors, hard_neg), config.margin);
}

DetectionLoss loss_det(const Tensor& p, const Tensor& p_warped, const Heatmap& y, const AffineTransform& t) {
  const Heatmap yw = warp_affine(y, t, Interpolation::Bilinear);
  const auto as_tensor = [](const Heatmap& m) {
    return Tensor::from({1, static_cast<int>(m.rows()), static_cast<int>(m.cols())},
                        Eigen::Map<const Eigen::ArrayXd>(m.data(), m.size()));
  };
  Tensor clf = loss_clf(p, as_tensor(y));
  Tensor geo = loss_clf(p_warped, as_tensor(yw));
  return {clf + geo, clf, geo};
}

DetectionLoss loss_det(const DetectorNet& net, const Image2D& image, const Image2D& warped, const Heatmap& y,
                       const AffineTransform& t) {
  return loss_det(net.forward(image).detection, net.forward(warped).detection, y, t);
}

std::vector<Keypoint> nms(const Heatmap& p, double threshold, int window) {
  if (window < 3 || window % 2 == 0) throw std::invalid_argument("nms: window must be odd and >= 3");
  const int r = window / 2;
  const Eigen::Index rows = p.rows(), cols = p.cols();
  std::vector<Keypoint> out;
  for (Eigen::Index y = 0; y < rows; ++y) {
    for (Eigen::Index x = 0; x < cols; ++x) {
      const double v = p(y, x);
      if (!(v >= threshold)) continue;
      bool keep = true;
      for (Eigen::Index dy = -r; dy <= r && keep; ++dy) {
        for (Eigen::Index dx = -r; dx <= r; ++dx) {
          const Eigen::Index yy = y + dy, xx = x + dx;
          if ((dy == 0 && dx == 0) || yy < 0 || xx < 0 || yy >= rows || xx >= cols) continue;
          const double u = p(yy, xx);
          // Ties go to the earlier pixel in raster order.
          const bool earlier = dy < 0 || (dy == 0 && dx < 0);
          if (u > v || (u == v && earlier)) {
            keep = false;
            break;
          }
        }
      }
      if (!keep) continue;

      Eigen::Vector2d pos(static_cast<double>(x), static_cast<double>(y));
      const auto refine = [&](double minus, double centre, double plus) {
        const double curvature = minus - 2.0 * centre + plus;
        if (!(curvature < 0.0)) return 0.0;
        return std::clamp(0.5 * (minus - plus) / curvature, -0.5, 0.5);
      };
      if (x > 0 && x + 1 < cols) pos.x() += refine(p(y, x - 1), v, p(y, x + 1));
      if (y > 0 && y + 1 < rows) pos.y() += refine(p(y - 1, x), v, p(y + 1, x));

      Keypoint kp;
      kp.position = pos;
      kp.score = v;
      out.push_back(std::move(kp));
    }
  }
  return out;
}

}  // namespace rkp
