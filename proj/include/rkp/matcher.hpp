#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rkp/keypoints.hpp"
#include "rkp/params.hpp"
#include "rkp/tensor.hpp"

namespace rkp {

struct Match {
  int a = 0;
  int b = 0;
  double confidence = 0.0;
};

struct MatchSet {
  std::vector<Match> pairs;

  std::size_t good_count() const { return pairs.size(); }
  double mean_confidence() const;
};

/// Index pairs (into A, into B) known to correspond.
using Correspondences = std::vector<std::pair<int, int>>;

struct MatchMetrics {
  std::size_t good_count = 0;
  double mean_confidence = 0.0;
  double precision = 1.0;
  double recall = 0.0;
};

/// Precision over predicted pairs, recall over `gt`. No predictions: precision 1, recall 0.
MatchMetrics match_metrics(const MatchSet& ms, const Correspondences& gt);

/// Keypoints of A and B that carry the same label.
Correspondences label_correspondences(const KeypointGraph& a, const KeypointGraph& b);

/// Nearest-neighbour matching on L2-normalised descriptors. A pair is kept when it is a
/// mutual nearest neighbour and d1/d2 < ratio; confidence is 1 - d1/d2.
MatchSet match_bruteforce(const KeypointGraph& a, const KeypointGraph& b, double ratio = 0.75);

struct MatcherConfig {
  int descriptor_dim = 53;
  int feature_dim = 64;
  int heads = 4;
  int layers = 3;
  int encoder_hidden = 32;
  int sinkhorn_iterations = 100;
  double alpha_init = 1.0;
  std::uint64_t seed = 0;
};

/// Attentional graph matcher: descriptor projection plus a keypoint position/score
/// encoder, `layers` rounds of self- then cross-attention with residual MLP updates,
/// inner-product scores and a dustbin-augmented Sinkhorn.
class MatcherNet {
 public:
  explicit MatcherNet(const MatcherConfig& config = {});
  explicit MatcherNet(ad::ParameterStore store);

  /// Log assignment matrix [M+1, N+1].
  ad::Tensor log_assignment(const KeypointGraph& a, const KeypointGraph& b) const;
  /// Pre-Sinkhorn scores [M, N].
  ad::Tensor scores(const KeypointGraph& a, const KeypointGraph& b) const;

  const MatcherConfig& config() const { return config_; }
  ad::ParameterStore& parameters() { return store_; }
  const ad::ParameterStore& parameters() const { return store_; }

 private:
  ad::Tensor encode(const KeypointGraph& g) const;
  ad::Tensor update(const std::string& name, const ad::Tensor& x, const ad::Tensor& source) const;

  MatcherConfig config_;
  ad::ParameterStore store_;
};

/// Mutual argmax over the real cells of a plan, kept when the plan value is >= tau.
MatchSet extract_matches(const Eigen::MatrixXd& plan, double tau);

MatchSet gnn_match(const KeypointGraph& a, const KeypointGraph& b, const MatcherNet& net, double tau = 0.2);

/// Mean negative log-likelihood of the ground-truth cells: matched pairs, unmatched rows
/// against the column dustbin and unmatched columns against the row dustbin.
ad::Tensor matcher_loss(const ad::Tensor& log_plan, const Correspondences& gt);

struct GraphPair {
  KeypointGraph a;
  KeypointGraph b;
  Correspondences gt;
};

struct MatcherTrainConfig {
  MatcherConfig net;
  int steps = 1000;
  double learning_rate = 1e-3;
  double tau = 0.2;
  std::uint64_t seed = 0;
};

struct MatcherEpochLog {
  int epoch = 0;
  int steps = 0;
  double loss = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

struct MatcherTrainResult {
  MatcherNet net;
  std::vector<MatcherEpochLog> log;
  std::vector<std::string> warnings;
  bool diverged = false;
};

/// Adam over pairs visited in a seeded shuffled order, one pair per step. Pairs without any
/// ground-truth match are skipped with a warning.
MatcherTrainResult train_matcher(std::span<const GraphPair> pairs, const MatcherTrainConfig& config);

void write_matcher_log(const std::filesystem::path& path, std::span<const MatcherEpochLog> log);

nlohmann::json to_json(const MatchSet& ms, const MatchMetrics& metrics);
nlohmann::json to_json(const MatchSet& ms);
MatchSet match_set_from_json(const nlohmann::json& j);

}  // namespace rkp
