#pragma once

#include <cstdint>
#include <map>
#include <nlohmann/json.hpp>
#include <vector>

#include "rkp/affine.hpp"
#include "rkp/imaging.hpp"
#include "rkp/keypoints.hpp"

namespace rkp {

struct RegistrationImage {
  Image2D image;
  LabelMask mask;
  KeypointGraph keypoints;
};

struct RegistrationProblem {
  RegistrationImage moving;
  RegistrationImage fixed;
};

/// Soft Dice loss 1 - 2 sum(AB) / (sum(A^2) + sum(B^2)), 0 when both vanish.
double soft_dice_loss(const Heatmap& a, const Heatmap& b);

/// Dice on the heatmaps plus Dice on their complements, which keeps the mostly-empty
/// background from being ignored.
double keypoint_loss(const Heatmap& warped, const Heatmap& fixed);

/// Per-label Dice 2|A n B| / (|A| + |B|) over every non-zero label present in either mask.
std::map<int, double> label_dice(const LabelMask& a, const LabelMask& b);
/// Mean of label_dice. Throws when neither mask has foreground.
double dice_score(const LabelMask& a, const LabelMask& b);

struct RegistrationConfig {
  double lambda_kp = 1.0;
  double lambda_img = 1.0;
  double heatmap_sigma = 3.0;
  int iterations = 300;
  double learning_rate = 0.01;
  /// Blur applied to both images for the intensity term; 0 disables.
  double image_sigma = 1.0;
  /// Coarse-to-fine levels; level k smooths with 2^k times the sigmas above.
  int levels = 3;
};

struct RegistrationResult {
  AffineTransform transform;  // moving -> fixed
  std::vector<double> loss_curve;
  double best_loss = 0.0;
  int best_iteration = 0;
  std::map<int, double> label_dice;
  double dice = 0.0;
};

/// Adam on the six parameters of the fixed->moving sampling map, expressed in coordinates
/// centred on the image and scaled by half its larger side, starting from identity.
/// Loss: lambda_kp * keypoint_loss(warped moving heatmap, fixed heatmap)
///     + lambda_img * MSE(warped moving image, fixed image).
/// Iterations are split across the coarse-to-fine levels; each level starts from the best
/// parameters of the previous one. Returns the lowest-loss parameters of the finest level.
RegistrationResult register_affine(const RegistrationProblem& problem, const RegistrationConfig& config = {});

/// Mean distance between where two transforms send the four image corners.
double corner_error(const AffineTransform& a, const AffineTransform& b, int width, int height);

nlohmann::json to_json(const RegistrationResult& r);

}  // namespace rkp
