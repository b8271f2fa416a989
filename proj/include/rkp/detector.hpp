#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rkp/affine.hpp"
#include "rkp/imaging.hpp"
#include "rkp/keypoints.hpp"
#include "rkp/params.hpp"
#include "rkp/tensor.hpp"

namespace rkp {

struct DetectorConfig {
  std::array<int, 4> widths{8, 16, 32, 64};
  int descriptor_dim = 64;
  std::uint64_t seed = 0;
};

/// U-Net style detector/descriptor network.
///
/// Encoder: one conv, then three blocks of (conv, ReLU, conv, ReLU, 2x2 max-pool).
/// Keypoint decoder: three blocks of (bilinear upsample, skip concatenation, conv, ReLU,
/// conv, ReLU) followed by a three-conv head with a sigmoid, giving the detection map P.
/// The descriptor decoder mirrors the keypoint decoder and ends in a projection to
/// `descriptor_dim` channels, L2-normalised per pixel.
class DetectorNet {
 public:
  explicit DetectorNet(const DetectorConfig& config = {});
  /// Rebuilds a network from stored weights; the config is read from the hyperparameters.
  explicit DetectorNet(ad::ParameterStore store);

  struct Output {
    ad::Tensor detection;    // [1, H, W], values in (0, 1)
    ad::Tensor descriptors;  // [D, H, W], unit norm per pixel
  };

  Output forward(const Image2D& image) const;
  /// Detection map only, without recording a graph.
  Heatmap detect(const Image2D& image) const;

  const DetectorConfig& config() const { return config_; }
  ad::ParameterStore& parameters() { return store_; }
  const ad::ParameterStore& parameters() const { return store_; }

 private:
  ad::Tensor decode(const std::string& prefix, const ad::Tensor& bottom,
                    const std::array<ad::Tensor, 3>& skips) const;

  DetectorConfig config_;
  ad::ParameterStore store_;
};

ad::Tensor image_tensor(const Image2D& img);
Heatmap to_heatmap(const ad::Tensor& map);

/// Impulses at the keypoints blurred by sigma and peak-normalised.
Heatmap ground_truth_heatmap(std::span<const Eigen::Vector2d> keypoints, Eigen::Index width,
                             Eigen::Index height, double sigma = 2.0);

/// Soft Dice loss 1 - 2 sum(P*Y) / (sum(P*P) + sum(Y*Y)); 0 when both maps vanish.
ad::Tensor loss_clf(const ad::Tensor& p, const ad::Tensor& y);
double loss_clf(const Heatmap& p, const Heatmap& y);

/// sum_k max(0, margin + positive_k - (random_k + hard_k) / 2) over [K] distance vectors.
ad::Tensor descriptor_hinge(const ad::Tensor& positive, const ad::Tensor& random_negative,
                            const ad::Tensor& hard_negative, double margin);

struct DescriptorLossConfig {
  double margin = 0.8;
  double exclusion_radius = 4.0;
  std::uint64_t seed = 0;
};

/// Triplet-style descriptor loss between the maps of an image and its warped copy.
/// Positive: the descriptor at t(p). Negatives come from warped-image pixels that map back
/// inside the source and lie outside the exclusion disc around t(p): one drawn uniformly
/// at random and the closest one in descriptor space. Distances are Euclidean.
ad::Tensor loss_des(const ad::Tensor& descriptors, const ad::Tensor& warped_descriptors,
                    std::span<const Eigen::Vector2d> keypoints, const AffineTransform& t,
                    const DescriptorLossConfig& config = {});

struct DetectionLoss {
  ad::Tensor total;
  ad::Tensor clf;
  ad::Tensor geo;
};

/// clf = loss_clf(P(I), Y); geo = loss_clf(P(I'), warp(Y, t)); total = clf + geo.
DetectionLoss loss_det(const ad::Tensor& p, const ad::Tensor& p_warped, const Heatmap& y,
                       const AffineTransform& t);
DetectionLoss loss_det(const DetectorNet& net, const Image2D& image, const Image2D& warped,
                       const Heatmap& y, const AffineTransform& t);

/// Local maxima of `p` at or above `threshold`. Equal values inside a window resolve to the
/// first pixel in (row, col) order. Positions get a 3x3 quadratic refinement, clamped to
/// half a pixel.
std::vector<Keypoint> nms(const Heatmap& p, double threshold, int window);

struct TrainingImage {
  Image2D image;
  std::vector<Eigen::Vector2d> keypoints;
};

struct DetectorTrainConfig {
  DetectorConfig net;
  int epochs = 200;
  double learning_rate = 1e-3;
  double heatmap_sigma = 2.0;
  double descriptor_weight = 1.0;
  DescriptorLossConfig descriptor;
  AffineLimits augmentation{10.0, 4.0, 0.05, 0.0};
  double nms_threshold = 0.3;
  int nms_window = 5;
  double repeatability_epsilon = 3.0;
  std::uint64_t seed = 0;
};

struct DetectorEpochLog {
  int epoch = 0;
  double clf = 0, geo = 0, des = 0;
  double repeatability = 0;
};

struct DetectorTrainResult {
  DetectorNet net;
  std::vector<DetectorEpochLog> log;
  bool diverged = false;
  std::string message;
};

/// Adam on clf + geo + descriptor_weight * des over randomly warped copies of each image.
/// Deterministic for a given seed. A non-finite loss stops training and returns the last
/// parameters that produced a finite loss.
DetectorTrainResult train_detector(std::span<const TrainingImage> data, const DetectorTrainConfig& config,
                                   const TrainingImage* holdout = nullptr);

/// Repeatability of NMS detections between an image and its warp by `t`.
double detector_repeatability(const DetectorNet& net, const Image2D& image, const AffineTransform& t,
                              double threshold, int window, double epsilon);

void write_detector_log(const std::filesystem::path& path, std::span<const DetectorEpochLog> log);

}  // namespace rkp
