#pragma once

#include <cstdint>
#include <vector>

#include "rkp/affine.hpp"
#include "rkp/imaging.hpp"
#include "rkp/keypoints.hpp"
#include "rkp/matcher.hpp"

namespace rkp {

struct SynthSpec {
  int width = 160;
  int height = 192;
  int regions = 35;
  std::uint64_t seed = 1;
  double noise_sigma = 0.02;
  /// Wavelength in pixels of the smooth intensity field shared across the image.
  double texture_scale = 24.0;
};

struct SynthImage {
  Image2D image;
  LabelMask mask;
};

/// Labelled phantom: `regions` Voronoi cells inside an ellipse, with domain-warped
/// boundaries so cells come out wavy and non-convex. Each cell gets a base intensity that
/// differs from its neighbours, its own oriented stripe texture, a shared low-frequency
/// field and pixel noise. Labels are 1..regions; 0 is background. Every label covers at
/// least 4 pixels.
SynthImage synth_generate(const SynthSpec& spec);

/// Power-law contrast change followed by additive Gaussian noise, clamped to [0, 1].
Image2D perturb_intensity(const Image2D& img, double gamma, double noise_sigma, std::uint64_t seed);

struct PerturbConfig {
  double gamma = 1.4;
  double noise_sigma = 0.05;
};

struct DeformedPair {
  SynthImage a;
  SynthImage b;  // a warped by t, intensities perturbed
  AffineTransform t;
};

/// Phantom from `spec` and a copy warped by a random affine about the image centre.
DeformedPair make_deformed_pair(const SynthSpec& spec, const AffineLimits& limits, const PerturbConfig& perturb,
                                std::uint64_t deform_seed);

/// Radiomic keypoint graphs of both images, ground truth from shared labels.
GraphPair graph_pair(const DeformedPair& pair, const KeypointConfig& config = {});

struct PairDatasetConfig {
  SynthSpec spec;
  AffineLimits limits;
  PerturbConfig perturb;
  int count = 50;
  std::uint64_t seed = 0;
};

/// `count` deformed pairs; pair k uses phantom and deformation seeds derived from (seed, k).
std::vector<DeformedPair> make_pair_dataset(const PairDatasetConfig& config);

}  // namespace rkp
