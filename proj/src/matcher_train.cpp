#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include "rkp/error.hpp"
#include "rkp/matcher.hpp"
#include "rkp/optim.hpp"

namespace rkp {

MatcherTrainResult train_matcher(std::span<const GraphPair> pairs, const MatcherTrainConfig& config) {
  if (config.steps < 0) throw std::invalid_argument("train_matcher: negative step count");
  MatcherTrainResult result{MatcherNet(config.net), {}, {}, false};

  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].gt.empty())
      result.warnings.push_back("pair " + std::to_string(i) + " has no ground-truth matches; skipped");
    else
      usable.push_back(i);
  }
  if (usable.empty() && config.steps > 0) throw std::invalid_argument("train_matcher: no usable training pairs");

  MatcherNet& net = result.net;
  ad::Adam adam(net.parameters(), ad::AdamConfig{config.learning_rate});
  ad::ParameterStore last_good = net.parameters().clone();
  std::mt19937_64 rng(config.seed);

  int step = 0;
  for (int epoch = 1; step < config.steps; ++epoch) {
    std::vector<std::size_t> order = usable;
    std::shuffle(order.begin(), order.end(), rng);
    MatcherEpochLog entry;
    entry.epoch = epoch;
    for (std::size_t idx : order) {
      if (step >= config.steps) break;
      const GraphPair& p = pairs[idx];
      const ad::Tensor log_plan = net.log_assignment(p.a, p.b);
      const ad::Tensor loss = matcher_loss(log_plan, p.gt);
      if (!std::isfinite(loss.item())) {
        result.diverged = true;
        result.warnings.push_back("non-finite loss at step " + std::to_string(step + 1));
        result.net = MatcherNet(std::move(last_good));
        return result;
      }
      adam.zero_grad();
      loss.backward();
      adam.step();
      ++step;

      const MatchSet ms = extract_matches(log_plan.matrix().array().exp().matrix(), config.tau);
      const MatchMetrics mm = match_metrics(ms, p.gt);
      entry.loss += loss.item();
      entry.precision += mm.precision;
      entry.recall += mm.recall;
      ++entry.steps;
    }
    if (entry.steps > 0) {
      entry.loss /= entry.steps;
      entry.precision /= entry.steps;
      entry.recall /= entry.steps;
    }
    result.log.push_back(entry);
    last_good = net.parameters().clone();
  }
  return result;
}

void write_matcher_log(const std::filesystem::path& path, std::span<const MatcherEpochLog> log) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << "epoch,steps,loss,precision,recall\n";
  out.precision(9);
  for (const auto& e : log) out << e.epoch << ',' << e.steps << ',' << e.loss << ',' << e.precision << ',' << e.recall << '\n';
}

}  // namespace rkp
