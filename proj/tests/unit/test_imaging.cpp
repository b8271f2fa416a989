#include <gtest/gtest.h>

#include <Eigen/SVD>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <set>

#include "rkp/affine.hpp"
#include "rkp/error.hpp"
#include "rkp/imaging.hpp"
#include "rkp/pgm.hpp"

using namespace rkp;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("rkp_test_" + name);
}

Image2D random_image(int h, int w, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  Image2D img(h, w);
  for (Eigen::Index i = 0; i < img.size(); ++i) img.data()[i] = u(rng);
  return img;
}

}  // namespace

TEST(Pgm, EightBitBytesNormalise) {
  const std::vector<std::uint8_t> bytes = {'P', '5', '\n', '2', ' ', '2', '\n', '2', '5', '5', '\n', 0, 255, 128, 64};
  const PgmData pgm = parse_pgm(bytes);
  const Image2D img = to_image(pgm);
  EXPECT_DOUBLE_EQ(img(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(img(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(img(1, 0), 128.0 / 255.0);
  EXPECT_DOUBLE_EQ(img(1, 1), 64.0 / 255.0);
  const LabelMask mask = to_mask(pgm);
  EXPECT_EQ(mask(0, 1), 255);
  EXPECT_EQ(mask(1, 0), 128);
  EXPECT_EQ(mask(1, 1), 64);
}

TEST(Pgm, TruncatedPayloadFails) {
  const std::vector<std::uint8_t> bytes = {'P', '5', '\n', '2', ' ', '2', '\n', '2', '5', '5', '\n', 0, 255, 128};
  try {
    parse_pgm(bytes);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("unexpected end of data"), std::string::npos);
  }
}

TEST(Pgm, CommentsAndSixteenBitRoundTrip) {
  LabelMask mask(3, 4);
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = static_cast<int>(i * 5000);
  const auto path = temp_path("mask.pgm");
  save_pgm(mask, path);
  EXPECT_TRUE((load_pgm_mask(path) == mask).all());

  const std::string text = "P5\n# a comment\n1 1\n# another\n65535\n";
  std::vector<std::uint8_t> bytes(text.begin(), text.end());
  bytes.push_back(0x12);
  bytes.push_back(0x34);
  EXPECT_EQ(parse_pgm(bytes).samples[0], 0x1234);
}

TEST(Pgm, MissingFileIsInputError) {
  EXPECT_THROW(load_pgm_image(temp_path("does_not_exist.pgm")), InputError);
}

TEST(Pgm, ImageRoundTripWithinQuantisation) {
  const Image2D img = random_image(5, 7, 1);
  const auto path = temp_path("img16.pgm");
  save_pgm(img, path, 16);
  EXPECT_LE((load_pgm_image(path) - img).abs().maxCoeff(), 0.5 / 65535 + 1e-12);
}

TEST(Blur, ConstantStaysConstant) {
  const Image2D img = Image2D::Constant(11, 13, 0.5);
  for (double sigma : {0.5, 1.0, 3.0, 7.0}) EXPECT_LE((gaussian_blur(img, sigma) - 0.5).abs().maxCoeff(), 1e-12);
}

TEST(Blur, ImpulseMatchesDenseConvolution) {
  Image2D img = Image2D::Zero(9, 9);
  img(4, 4) = 1.0;
  const Image2D out = gaussian_blur(img, 1.0);
  // Dense 2-D kernel built independently from the Gaussian density.
  double norm = 0.0;
  for (int dy = -3; dy <= 3; ++dy)
    for (int dx = -3; dx <= 3; ++dx) norm += std::exp(-(dx * dx + dy * dy) / 2.0);
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 9; ++x) {
      const int dx = x - 4, dy = y - 4;
      const double expected = std::abs(dx) <= 3 && std::abs(dy) <= 3 ? std::exp(-(dx * dx + dy * dy) / 2.0) / norm : 0.0;
      EXPECT_NEAR(out(y, x), expected, 1e-10);
    }
  EXPECT_NEAR(out.sum(), 1.0, 1e-8);
}

TEST(Blur, RejectsNonPositiveSigma) { EXPECT_THROW(gaussian_blur(Image2D::Zero(3, 3).eval(), 0.0), std::invalid_argument); }

TEST(Affine, IdentityAndTranslationPoints) {
  const Eigen::Vector2d p(5.5, 7.25);
  EXPECT_EQ(apply_to_point(AffineTransform::identity(), p), p);
  EXPECT_EQ(apply_to_point(AffineTransform::translation(3, -2), Eigen::Vector2d::Zero()), Eigen::Vector2d(3, -2));
}

TEST(Affine, InverseRoundTrip) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const AffineTransform t = random_affine(seed, {30, 20, 0.3, 0.2}, {40, 50});
    const Eigen::Vector2d p(seed * 1.7, 100 - seed * 0.9);
    EXPECT_LE((t.inverse().apply(t.apply(p)) - p).norm(), 1e-9);
  }
}

TEST(Affine, ZeroLimitsGiveIdentity) {
  const AffineTransform t = random_affine(17, {0, 0, 0, 0}, {10, 10});
  EXPECT_LE((t.matrix() - AffineTransform::identity().matrix()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Affine, SameSeedSameMatrix) {
  EXPECT_EQ(random_affine(5, {}, {3, 4}).matrix(), random_affine(5, {}, {3, 4}).matrix());
  EXPECT_NE(random_affine(5, {}, {3, 4}).matrix(), random_affine(6, {}, {3, 4}).matrix());
}

TEST(Affine, RotationWithinLimitByPolarDecomposition) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const AffineTransform t = random_affine(seed, {10, 0, 0.1, 0});
    Eigen::JacobiSVD<Eigen::Matrix2d> svd(t.linear(), Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::Matrix2d r = svd.matrixU() * svd.matrixV().transpose();
    const double deg = std::atan2(r(1, 0), r(0, 0)) * 180 / std::numbers::pi;
    EXPECT_LE(std::abs(deg), 10.0 + 1e-9);
  }
}

TEST(Affine, SingularMatrixRejected) {
  AffineTransform::Matrix m = AffineTransform::Matrix::Zero();
  EXPECT_THROW(AffineTransform{m}, std::invalid_argument);
}

TEST(Affine, TextRoundTripExact) {
  const AffineTransform t = random_affine(3, {}, {80, 96});
  EXPECT_EQ(AffineTransform::from_text(t.to_text()).matrix(), t.matrix());
  EXPECT_THROW(AffineTransform::from_text("1 2 3"), std::invalid_argument);
}

TEST(Warp, IdentityIsBitExact) {
  const Image2D img = random_image(12, 9, 2);
  EXPECT_TRUE((warp_affine(img, AffineTransform::identity(), Interpolation::Bilinear) == img).all());
  EXPECT_TRUE((warp_affine(img, AffineTransform::identity(), Interpolation::Nearest) == img).all());
}

TEST(Warp, IntegerTranslation) {
  const Image2D img = random_image(10, 12, 3);
  const Image2D out = warp_affine(img, AffineTransform::translation(3, -2), Interpolation::Bilinear);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 12; ++x) {
      const int sx = x - 3, sy = y + 2;
      const double expected = sx >= 0 && sy >= 0 && sx < 12 && sy < 10 ? img(sy, sx) : 0.0;
      EXPECT_DOUBLE_EQ(out(y, x), expected);
    }
}

TEST(Warp, FourQuarterTurnsRestoreImage) {
  const Image2D img = random_image(15, 15, 4);
  const AffineTransform r = AffineTransform::rotation_about(std::numbers::pi / 2, {7, 7});
  Image2D out = img;
  for (int k = 0; k < 4; ++k) out = warp_affine(out, r, Interpolation::Nearest);
  EXPECT_LE((out - img).abs().maxCoeff(), 1e-6);
}

TEST(Warp, MaskWarpIntroducesNoNewLabels) {
  LabelMask mask(20, 20);
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 20; ++x) mask(y, x) = (x / 5) * 7 + (y / 7) * 3 + 1;
  std::set<int> labels(mask.data(), mask.data() + mask.size());
  labels.insert(0);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const LabelMask out = warp_affine(mask, random_affine(seed, {}, {10, 10}), Interpolation::Nearest);
    for (Eigen::Index i = 0; i < out.size(); ++i) EXPECT_TRUE(labels.count(out.data()[i]));
  }
  EXPECT_THROW(warp_affine(mask, AffineTransform::identity(), Interpolation::Bilinear), std::invalid_argument);
}

TEST(Warp, SampleWithGradientMatchesFiniteDifferences) {
  const Image2D img = gaussian_blur(random_image(16, 16, 5), 1.5);
  const AffineTransform t = random_affine(1, {10, 2, 0.05, 0}, {8, 8});
  const SampledImage s = sample_with_gradient(img, t);
  const double h = 1e-6;
  for (int y = 4; y < 12; y += 3)
    for (int x = 4; x < 12; x += 3) {
      const Eigen::Vector2d q = t.apply(Eigen::Vector2d(x, y));
      EXPECT_NEAR(s.value(y, x), detail::sample_bilinear(img, q.x(), q.y()), 1e-12);
      const double gx = (detail::sample_bilinear(img, q.x() + h, q.y()) - detail::sample_bilinear(img, q.x() - h, q.y())) / (2 * h);
      const double gy = (detail::sample_bilinear(img, q.x(), q.y() + h) - detail::sample_bilinear(img, q.x(), q.y() - h)) / (2 * h);
      EXPECT_NEAR(s.grad_x(y, x), gx, 1e-5);
      EXPECT_NEAR(s.grad_y(y, x), gy, 1e-5);
    }
}

TEST(Heatmap, PeakOneAndThreeSigmaSupport) {
  const std::vector<Eigen::Vector2d> pts{{10, 12}, {30, 25}};
  const Heatmap hm = render_heatmap(pts, 40, 36, 2.0);
  EXPECT_DOUBLE_EQ(hm(12, 10), 1.0);
  EXPECT_DOUBLE_EQ(hm(25, 30), 1.0);
  EXPECT_LE(hm.maxCoeff(), 1.0);
  EXPECT_GE(hm.minCoeff(), 0.0);
  for (int y = 0; y < 36; ++y)
    for (int x = 0; x < 40; ++x) {
      const double d = std::min(std::hypot(x - 10, y - 12), std::hypot(x - 30, y - 25));
      if (d > 6.0) EXPECT_EQ(hm(y, x), 0.0);
    }
}
