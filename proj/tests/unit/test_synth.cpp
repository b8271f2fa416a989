#include <gtest/gtest.h>

#include <map>

#include "rkp/manifest.hpp"
#include "rkp/synth.hpp"

using namespace rkp;

namespace {

template <typename A>
std::uint64_t hash_of(const A& a) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(a.data());
  return fnv1a64({p, static_cast<std::size_t>(a.size()) * sizeof(typename A::Scalar)});
}

std::map<int, int> label_counts(const LabelMask& m) {
  std::map<int, int> out;
  for (Eigen::Index i = 0; i < m.size(); ++i)
    if (m.data()[i] != 0) ++out[m.data()[i]];
  return out;
}

}  // namespace

TEST(Synth, Deterministic) {
  SynthSpec spec;
  spec.seed = 17;
  const SynthImage a = synth_generate(spec), b = synth_generate(spec);
  EXPECT_EQ(hash_of(a.image), hash_of(b.image));
  EXPECT_EQ(hash_of(a.mask), hash_of(b.mask));
  spec.seed = 18;
  EXPECT_NE(hash_of(synth_generate(spec).mask), hash_of(a.mask));
}

TEST(Synth, DefaultHasThirtyFiveLabels) {
  const SynthImage s = synth_generate({});
  EXPECT_EQ(s.image.rows(), 192);
  EXPECT_EQ(s.image.cols(), 160);
  const auto counts = label_counts(s.mask);
  ASSERT_EQ(counts.size(), 35u);
  EXPECT_EQ(counts.begin()->first, 1);
  EXPECT_EQ(counts.rbegin()->first, 35);
  EXPECT_GE(s.image.minCoeff(), 0.0);
  EXPECT_LE(s.image.maxCoeff(), 1.0);
}

TEST(Synth, EveryRegionHasFourPixels) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SynthSpec spec;
    spec.seed = seed;
    spec.width = spec.height = 48 + static_cast<int>(seed % 4) * 16;
    spec.regions = 4 + static_cast<int>(seed % 9);
    const auto counts = label_counts(synth_generate(spec).mask);
    ASSERT_EQ(counts.size(), static_cast<std::size_t>(spec.regions)) << seed;
    for (const auto& [label, n] : counts) EXPECT_GE(n, 4) << "label " << label;
  }
}

TEST(Synth, RejectsBadSpecs) {
  SynthSpec spec;
  spec.regions = 1;
  EXPECT_THROW(synth_generate(spec), std::invalid_argument);
  spec = {};
  spec.width = 31;
  EXPECT_THROW(synth_generate(spec), std::invalid_argument);
  spec = {};
  spec.width = spec.height = 32;
  spec.regions = 500;
  EXPECT_THROW(synth_generate(spec), std::invalid_argument);
  EXPECT_THROW(perturb_intensity(Image2D::Zero(2, 2), 0.0, 0.1, 1), std::invalid_argument);
}

TEST(Synth, DeformedPairSharesLabels) {
  SynthSpec spec;
  spec.width = spec.height = 96;
  spec.regions = 10;
  const DeformedPair p = make_deformed_pair(spec, {}, {}, 3);
  const auto same = make_deformed_pair(spec, {}, {}, 3);
  EXPECT_EQ(hash_of(p.b.image), hash_of(same.b.image));
  const GraphPair g = graph_pair(p);
  EXPECT_FALSE(g.gt.empty());
  for (const auto& [i, j] : g.gt) EXPECT_EQ(g.a.keypoints[i].label, g.b.keypoints[j].label);
}

TEST(Synth, PerturbIntensityClamps) {
  const Image2D img = Image2D::Constant(16, 16, 0.5);
  const Image2D out = perturb_intensity(img, 2.0, 0.5, 7);
  EXPECT_GE(out.minCoeff(), 0.0);
  EXPECT_LE(out.maxCoeff(), 1.0);
  EXPECT_TRUE((perturb_intensity(img, 2.0, 0.0, 7) - 0.25).abs().maxCoeff() < 1e-15);
}
