#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

#include "rkp/keypoints.hpp"
#include "rkp/matcher.hpp"
#include "rkp/synth.hpp"

namespace rkp {

struct PairResult {
  int index = 0;
  MatchSet bf;
  MatchSet gnn;
  MatchMetrics bf_metrics;
  MatchMetrics gnn_metrics;
};

/// One table row. Confidence statistics are over per-pair mean confidences (a pair with
/// no matches counts as 0); the spread is the population standard deviation.
struct BenchRow {
  std::string method;
  double avg_good_matches = 0.0;
  double mean_confidence = 0.0;
  double confidence_std = 0.0;
};

struct BenchReport {
  std::vector<PairResult> pairs;
  BenchRow bf;
  BenchRow gnn;
};

BenchRow summarize(const std::string& method, std::span<const MatchMetrics> per_pair);

/// Match every pair with both matchers and aggregate in pair order.
BenchReport evaluate_matchers(std::span<const GraphPair> pairs, const MatcherNet& net, double ratio, double tau);

std::string format_table(const BenchReport& report);
nlohmann::json to_json(const BenchReport& report);

struct BenchConfig {
  SynthSpec spec;
  AffineLimits limits;
  PerturbConfig perturb;
  KeypointConfig keypoints;
  int train_pairs = 100;
  int test_pairs = 50;
  MatcherTrainConfig training;
  double ratio = 0.75;
  std::uint64_t seed = 0;
};

struct BenchOutcome {
  BenchReport report;
  MatcherTrainResult training;
  DescriptorStats stats;
};

/// Builds disjoint synthetic train and test splits, fits descriptor standardisation on the
/// training graphs, trains the graph matcher and evaluates both matchers on the test split.
BenchOutcome run_benchmark(const BenchConfig& config);

/// Graph pairs for a split with descriptors standardised by `stats`.
std::vector<GraphPair> build_graph_pairs(const PairDatasetConfig& data, const KeypointConfig& keypoints);
void standardize_pairs(std::vector<GraphPair>& pairs, const DescriptorStats& stats);

}  // namespace rkp
