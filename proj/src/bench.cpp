#include "rkp/bench.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace rkp {

BenchRow summarize(const std::string& method, std::span<const MatchMetrics> per_pair) {
  BenchRow row;
  row.method = method;
  if (per_pair.empty()) return row;
  const double n = static_cast<double>(per_pair.size());
  for (const auto& m : per_pair) {
    row.avg_good_matches += static_cast<double>(m.good_count);
    row.mean_confidence += m.mean_confidence;
  }
  row.avg_good_matches /= n;
  row.mean_confidence /= n;
  double var = 0.0;
  for (const auto& m : per_pair) var += (m.mean_confidence - row.mean_confidence) * (m.mean_confidence - row.mean_confidence);
  row.confidence_std = std::sqrt(var / n);
  return row;
}

BenchReport evaluate_matchers(std::span<const GraphPair> pairs, const MatcherNet& net, double ratio, double tau) {
  BenchReport report;
  std::vector<MatchMetrics> bf, gnn;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    PairResult r;
    r.index = static_cast<int>(i);
    r.bf = match_bruteforce(pairs[i].a, pairs[i].b, ratio);
    r.gnn = gnn_match(pairs[i].a, pairs[i].b, net, tau);
    r.bf_metrics = match_metrics(r.bf, pairs[i].gt);
    r.gnn_metrics = match_metrics(r.gnn, pairs[i].gt);
    bf.push_back(r.bf_metrics);
    gnn.push_back(r.gnn_metrics);
    report.pairs.push_back(std::move(r));
  }
  report.bf = summarize("BF", bf);
  report.gnn = summarize("GNN", gnn);
  return report;
}

std::string format_table(const BenchReport& report) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-8s %22s %24s\n", "Method", "Avg. No. Good Matches", "Avg. Confidence");
  out << line;
  for (const BenchRow* row : {&report.bf, &report.gnn}) {
    std::snprintf(line, sizeof line, "%-8s %22.2f %16.3f +- %.3f\n", row->method.c_str(), row->avg_good_matches,
                  row->mean_confidence, row->confidence_std);
    out << line;
  }
  return out.str();
}

nlohmann::json to_json(const BenchReport& report) {
  const auto row = [](const BenchRow& r) {
    return nlohmann::json{{"method", r.method},
                          {"avg_good_matches", r.avg_good_matches},
                          {"mean_confidence", r.mean_confidence},
                          {"confidence_std", r.confidence_std}};
  };
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& p : report.pairs)
    pairs.push_back({{"index", p.index}, {"bf", to_json(p.bf, p.bf_metrics)}, {"gnn", to_json(p.gnn, p.gnn_metrics)}});
  return {{"rows", {row(report.bf), row(report.gnn)}}, {"pairs", pairs}};
}

std::vector<GraphPair> build_graph_pairs(const PairDatasetConfig& data, const KeypointConfig& keypoints) {
  std::vector<GraphPair> out;
  for (const auto& p : make_pair_dataset(data)) out.push_back(graph_pair(p, keypoints));
  return out;
}

void standardize_pairs(std::vector<GraphPair>& pairs, const DescriptorStats& stats) {
  for (auto& p : pairs) {
    p.a = standardize(std::move(p.a), stats);
    p.b = standardize(std::move(p.b), stats);
  }
}

BenchOutcome run_benchmark(const BenchConfig& config) {
  PairDatasetConfig train{config.spec, config.limits, config.perturb, config.train_pairs, config.seed * 2 + 1};
  PairDatasetConfig test{config.spec, config.limits, config.perturb, config.test_pairs, config.seed * 2 + 2};
  auto train_pairs = build_graph_pairs(train, config.keypoints);
  auto test_pairs = build_graph_pairs(test, config.keypoints);

  std::vector<KeypointGraph> graphs;
  for (const auto& p : train_pairs) {
    graphs.push_back(p.a);
    graphs.push_back(p.b);
  }
  BenchOutcome out{{}, {MatcherNet(config.training.net), {}, {}, false}, fit_descriptor_stats(graphs)};
  standardize_pairs(train_pairs, out.stats);
  standardize_pairs(test_pairs, out.stats);

  MatcherTrainConfig tc = config.training;
  tc.net.descriptor_dim = static_cast<int>(out.stats.mean.size());
  out.training = train_matcher(train_pairs, tc);
  out.report = evaluate_matchers(test_pairs, out.training.net, config.ratio, tc.tau);
  return out;
}

}  // namespace rkp
