#include "rkp/registration.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

#include "rkp/error.hpp"

namespace rkp {

double soft_dice_loss(const Heatmap& a, const Heatmap& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ContractError("soft_dice_loss: shape mismatch");
  const double denom = a.square().sum() + b.square().sum();
  if (denom == 0.0) return 0.0;
  return 1.0 - 2.0 * (a * b).sum() / denom;
}

double keypoint_loss(const Heatmap& warped, const Heatmap& fixed) {
  if (warped.rows() != fixed.rows() || warped.cols() != fixed.cols())
    throw ContractError("keypoint_loss: shape mismatch");
  return soft_dice_loss(warped, fixed) + soft_dice_loss(1.0 - warped, 1.0 - fixed);
}

std::map<int, double> label_dice(const LabelMask& a, const LabelMask& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ContractError("dice_score: shape mismatch");
  std::map<int, std::array<long, 3>> counts;  // |A|, |B|, |A n B|
  for (Eigen::Index k = 0; k < a.size(); ++k) {
    const int la = a.data()[k], lb = b.data()[k];
    if (la != 0) ++counts[la][0];
    if (lb != 0) ++counts[lb][1];
    if (la != 0 && la == lb) ++counts[la][2];
  }
  std::map<int, double> out;
  for (const auto& [label, c] : counts) out[label] = 2.0 * c[2] / static_cast<double>(c[0] + c[1]);
  return out;
}

double dice_score(const LabelMask& a, const LabelMask& b) {
  const auto per_label = label_dice(a, b);
  if (per_label.empty()) throw std::invalid_argument("no foreground");
  double s = 0.0;
  for (const auto& [label, d] : per_label) s += d;
  return s / static_cast<double>(per_label.size());
}

namespace {

struct Frame {
  Eigen::Vector2d centre;
  double scale;
};

// Sampling map q -> c + s * (A (q - c) / s + b) with A = I + [p0 p1; p2 p3], b = (p4, p5).
AffineTransform sampling_map(const Eigen::Matrix<double, 6, 1>& p, const Frame& f) {
  Eigen::Matrix2d a;
  a << 1 + p[0], p[1], p[2], 1 + p[3];
  AffineTransform::Matrix m;
  m.leftCols<2>() = a;
  m.col(2) = f.centre - a * f.centre + f.scale * Eigen::Vector2d(p[4], p[5]);
  return AffineTransform(m);
}

// d(soft Dice loss)/dA for fixed B.
Heatmap dice_gradient(const Heatmap& a, const Heatmap& b) {
  const double denom = a.square().sum() + b.square().sum();
  if (denom == 0.0) return Heatmap::Zero(a.rows(), a.cols());
  const double inter = (a * b).sum();
  return -2.0 * (b * denom - 2.0 * inter * a) / (denom * denom);
}

}  // namespace

RegistrationResult register_affine(const RegistrationProblem& problem, const RegistrationConfig& config) {
  const auto& mv = problem.moving;
  const auto& fx = problem.fixed;
  if (mv.image.rows() != fx.image.rows() || mv.image.cols() != fx.image.cols())
    throw ContractError("register_affine: moving and fixed images differ in size");
  if (config.lambda_kp < 0 || config.lambda_img < 0 || (config.lambda_kp == 0 && config.lambda_img == 0))
    throw std::invalid_argument("register_affine: loss weights must be non-negative and not both zero");
  if (config.iterations < 1) throw std::invalid_argument("register_affine: iterations must be >= 1");

  const Eigen::Index h = fx.image.rows(), w = fx.image.cols();
  const Frame frame{Eigen::Vector2d((w - 1) / 2.0, (h - 1) / 2.0), std::max(w, h) / 2.0};

  const bool use_kp = config.lambda_kp > 0;
  const bool use_img = config.lambda_img > 0;
  const int levels = std::max(1, config.levels);

  Eigen::MatrixXd qx(h, w), qy(h, w);  // normalised output coordinates
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < w; ++x) {
      qx(y, x) = (x - frame.centre.x()) / frame.scale;
      qy(y, x) = (y - frame.centre.y()) / frame.scale;
    }
  const double npx = static_cast<double>(w * h);

  using Params = Eigen::Matrix<double, 6, 1>;
  Params p = Params::Zero(), best = p;
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  RegistrationResult result;

  // Coarse to fine: smoothing widths start at 2^(levels-1) times the configured ones and
  // halve each level. Only the last level's losses are comparable with each other.
  for (int level = levels - 1; level >= 0; --level) {
    const double factor = std::ldexp(1.0, level);
    const int iterations = level == 0 ? config.iterations - (levels - 1) * (config.iterations / levels)
                                      : config.iterations / levels;
    Heatmap hm, hf;
    if (use_kp) {
      hm = render_heatmap(mv.keypoints.positions(), w, h, factor * config.heatmap_sigma);
      hf = render_heatmap(fx.keypoints.positions(), w, h, factor * config.heatmap_sigma);
    }
    Image2D im = mv.image, ifx = fx.image;
    const double blur = factor * config.image_sigma;
    if (use_img && blur > 0) {
      im = gaussian_blur(im, blur);
      ifx = gaussian_blur(ifx, blur);
    }

    Params m1 = Params::Zero(), m2 = Params::Zero();
    double level_best = INFINITY;
    for (int it = 0; it < iterations; ++it) {
      const AffineTransform s = sampling_map(p, frame);
      double loss = 0.0;
      Image2D gx = Image2D::Zero(h, w), gy = Image2D::Zero(h, w);  // dL/d(sample position)

      if (use_kp) {
        const SampledImage hw = sample_with_gradient(hm, s);
        loss += config.lambda_kp * keypoint_loss(hw.value, hf);
        const Heatmap dv = config.lambda_kp * (dice_gradient(hw.value, hf) - dice_gradient(1.0 - hw.value, 1.0 - hf));
        gx += dv * hw.grad_x;
        gy += dv * hw.grad_y;
      }
      if (use_img) {
        const SampledImage iw = sample_with_gradient(im, s);
        const Image2D diff = iw.value - ifx;
        loss += config.lambda_img * diff.square().sum() / npx;
        const Image2D dv = config.lambda_img * 2.0 * diff / npx;
        gx += dv * iw.grad_x;
        gy += dv * iw.grad_y;
      }
      if (!std::isfinite(loss))
        throw std::runtime_error("register_affine: non-finite loss at iteration " +
                                 std::to_string(result.loss_curve.size()));

      result.loss_curve.push_back(loss);
      if (loss < level_best) {
        level_best = loss;
        best = p;
        if (level == 0) {
          result.best_loss = loss;
          result.best_iteration = static_cast<int>(result.loss_curve.size()) - 1;
        }
      }

      // Sample position = c + s*(A q + b): d/dA_ij = s * q_j in row i, d/db_i = s.
      Params g;
      g[0] = frame.scale * (gx.matrix().array() * qx.array()).sum();
      g[1] = frame.scale * (gx.matrix().array() * qy.array()).sum();
      g[2] = frame.scale * (gy.matrix().array() * qx.array()).sum();
      g[3] = frame.scale * (gy.matrix().array() * qy.array()).sum();
      g[4] = frame.scale * gx.sum();
      g[5] = frame.scale * gy.sum();

      const double t = it + 1.0;
      m1 = b1 * m1 + (1 - b1) * g;
      m2 = b2 * m2 + (1 - b2) * g.cwiseProduct(g);
      const Params mhat = m1 / (1 - std::pow(b1, t));
      const Params vhat = m2 / (1 - std::pow(b2, t));
      p -= config.learning_rate * mhat.cwiseQuotient((vhat.array().sqrt() + eps).matrix());
    }
    p = best;
  }

  result.transform = sampling_map(best, frame).inverse();
  if (mv.mask.size() > 0 && fx.mask.size() > 0) {
    const LabelMask warped = warp_affine(mv.mask, result.transform, Interpolation::Nearest);
    result.label_dice = label_dice(warped, fx.mask);
    if (!result.label_dice.empty()) result.dice = dice_score(warped, fx.mask);
  }
  return result;
}

double corner_error(const AffineTransform& a, const AffineTransform& b, int width, int height) {
  const std::array<Eigen::Vector2d, 4> corners{Eigen::Vector2d(0, 0), Eigen::Vector2d(width - 1, 0),
                                               Eigen::Vector2d(0, height - 1),
                                               Eigen::Vector2d(width - 1, height - 1)};
  double s = 0.0;
  for (const auto& c : corners) s += (a.apply(c) - b.apply(c)).norm();
  return s / 4.0;
}

nlohmann::json to_json(const RegistrationResult& r) {
  nlohmann::json per_label = nlohmann::json::object();
  for (const auto& [label, d] : r.label_dice) per_label[std::to_string(label)] = d;
  const auto& m = r.transform.matrix();
  return {{"transform", {m(0, 0), m(0, 1), m(0, 2), m(1, 0), m(1, 1), m(1, 2)}},
          {"loss_curve", r.loss_curve},
          {"best_loss", r.best_loss},
          {"best_iteration", r.best_iteration},
          {"dice", r.dice},
          {"label_dice", per_label}};
}

}  // namespace rkp
