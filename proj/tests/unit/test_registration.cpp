#include <gtest/gtest.h>

#include <algorithm>

#include "rkp/error.hpp"
#include "rkp/registration.hpp"
#include "rkp/synth.hpp"

using namespace rkp;

namespace {

RegistrationImage with_keypoints(const SynthImage& s) {
  return {s.image, s.mask, extract_radiomic_keypoints(s.image, s.mask)};
}

SynthSpec small_spec(std::uint64_t seed) {
  SynthSpec spec;
  spec.width = spec.height = 96;
  spec.regions = 12;
  spec.seed = seed;
  return spec;
}

}  // namespace

TEST(KeypointLoss, Examples) {
  Heatmap a(1, 2), b(1, 2);
  a << 1, 0;
  EXPECT_EQ(keypoint_loss(a, a), 0.0);
  b << 0, 1;
  EXPECT_DOUBLE_EQ(keypoint_loss(a, b), 2.0);
  b << 1, 1;
  // Dice term 1 - 2/3, complement term 1 - 0/1.
  EXPECT_DOUBLE_EQ(keypoint_loss(a, b), 4.0 / 3.0);
  EXPECT_DOUBLE_EQ(keypoint_loss(b, a), 4.0 / 3.0);
  EXPECT_EQ(soft_dice_loss(Heatmap::Zero(2, 2), Heatmap::Zero(2, 2)), 0.0);
  EXPECT_THROW(keypoint_loss(a, Heatmap::Zero(2, 1)), ContractError);
}

TEST(KeypointLoss, BoundedAndSymmetricOnRandomMaps) {
  for (int seed = 0; seed < 20; ++seed) {
    std::srand(seed);
    const Heatmap a = (Heatmap::Random(8, 9) + 1) / 2, b = (Heatmap::Random(8, 9) + 1) / 2;
    const double l = keypoint_loss(a, b);
    EXPECT_GE(l, 0.0);
    EXPECT_LE(l, 2.0);
    EXPECT_NEAR(l, keypoint_loss(b, a), 1e-15);
  }
}

TEST(Dice, Examples) {
  LabelMask a = LabelMask::Zero(4, 4), b = LabelMask::Zero(4, 4);
  a.block(0, 0, 2, 4).setConstant(1);
  EXPECT_EQ(dice_score(a, a), 1.0);
  b.block(2, 0, 2, 4).setConstant(1);
  EXPECT_EQ(dice_score(a, b), 0.0);
  b.setZero();
  b.block(0, 0, 2, 2).setConstant(1);
  b.block(0, 2, 2, 2).setConstant(2);
  // Label 1: 2*4/(8+4); label 2 only in b: 0.
  const auto per = label_dice(a, b);
  ASSERT_EQ(per.size(), 2u);
  EXPECT_DOUBLE_EQ(per.at(1), 2.0 / 3.0);
  EXPECT_EQ(per.at(2), 0.0);
  EXPECT_DOUBLE_EQ(dice_score(a, b), 1.0 / 3.0);

  LabelMask half = LabelMask::Zero(4, 4);
  half.block(0, 0, 1, 4).setConstant(1);
  half.block(2, 0, 1, 4).setConstant(1);
  EXPECT_DOUBLE_EQ(dice_score(a, half), 0.5);

  EXPECT_THROW(dice_score(LabelMask::Zero(3, 3), LabelMask::Zero(3, 3)), std::invalid_argument);
  EXPECT_THROW(dice_score(a, LabelMask::Zero(3, 3)), ContractError);
}

TEST(CornerError, Examples) {
  EXPECT_EQ(corner_error(AffineTransform::identity(), AffineTransform::identity(), 10, 10), 0.0);
  EXPECT_DOUBLE_EQ(corner_error(AffineTransform::identity(), AffineTransform::translation(3, 4), 10, 10), 5.0);
}

TEST(Register, IdenticalImagesStayAtIdentity) {
  const SynthImage s = synth_generate(small_spec(3));
  const RegistrationImage ri = with_keypoints(s);
  RegistrationConfig cfg;
  cfg.iterations = 60;
  const auto r = register_affine({ri, ri}, cfg);
  EXPECT_LE(corner_error(r.transform, AffineTransform::identity(), 96, 96), 1e-6);
  EXPECT_LE(r.best_loss, 1e-12);
  EXPECT_DOUBLE_EQ(r.dice, 1.0);
}

TEST(Register, RecoversKnownAffineFromIntensities) {
  AffineLimits limits;
  limits.max_rotation_deg = 6;
  limits.max_translation_px = 4;
  limits.max_scale_dev = 0.05;
  const DeformedPair p = make_deformed_pair(small_spec(5), limits, {1.0, 0.0}, 11);
  RegistrationConfig cfg;
  cfg.lambda_kp = 0.0;
  cfg.lambda_img = 1.0;
  const auto r = register_affine({with_keypoints(p.a), with_keypoints(p.b)}, cfg);
  EXPECT_LT(corner_error(r.transform, p.t, 96, 96), 0.5);
}

TEST(Register, BestLossIsMinimumOfFinestLevel) {
  AffineLimits limits;
  limits.max_rotation_deg = 10;
  limits.max_translation_px = 6;
  const DeformedPair p = make_deformed_pair(small_spec(8), limits, {}, 4);
  RegistrationConfig cfg;
  cfg.iterations = 90;
  const auto r = register_affine({with_keypoints(p.a), with_keypoints(p.b)}, cfg);
  ASSERT_EQ(r.loss_curve.size(), 90u);
  const auto finest = r.loss_curve.begin() + 60;
  EXPECT_EQ(r.best_loss, *std::min_element(finest, r.loss_curve.end()));
  EXPECT_EQ(r.loss_curve[r.best_iteration], r.best_loss);
  EXPECT_GE(r.best_iteration, 60);
  for (const auto& [label, d] : r.label_dice) {
    EXPECT_GE(d, 0.0);
    EXPECT_LE(d, 1.0);
  }
  const auto j = to_json(r);
  EXPECT_EQ(j["loss_curve"].size(), 90u);
}

TEST(Register, RejectsBadConfig) {
  const SynthImage s = synth_generate(small_spec(1));
  const RegistrationImage ri = with_keypoints(s);
  RegistrationConfig cfg;
  cfg.lambda_kp = cfg.lambda_img = 0;
  EXPECT_THROW(register_affine({ri, ri}, cfg), std::invalid_argument);
  cfg = {};
  cfg.iterations = 0;
  EXPECT_THROW(register_affine({ri, ri}, cfg), std::invalid_argument);
  RegistrationImage other = ri;
  other.image = Image2D::Zero(40, 40);
  EXPECT_THROW(register_affine({ri, other}), ContractError);
}
