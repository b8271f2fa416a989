#include "rkp/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

#include "rkp/error.hpp"
#include "rkp/layers.hpp"
#include "rkp/sinkhorn.hpp"

namespace rkp {

using ad::Tensor;

double MatchSet::mean_confidence() const {
  if (pairs.empty()) return 0.0;
  double s = 0.0;
  for (const auto& m : pairs) s += m.confidence;
  return s / static_cast<double>(pairs.size());
}

MatchMetrics match_metrics(const MatchSet& ms, const Correspondences& gt) {
  MatchMetrics out;
  out.good_count = ms.good_count();
  out.mean_confidence = ms.mean_confidence();
  const std::set<std::pair<int, int>> truth(gt.begin(), gt.end());
  std::size_t correct = 0;
  for (const auto& m : ms.pairs) correct += truth.count({m.a, m.b});
  out.precision = ms.pairs.empty() ? 1.0 : static_cast<double>(correct) / static_cast<double>(ms.pairs.size());
  out.recall = truth.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(truth.size());
  return out;
}

Correspondences label_correspondences(const KeypointGraph& a, const KeypointGraph& b) {
  std::map<int, int> in_b;
  for (std::size_t j = 0; j < b.size(); ++j)
    if (b.keypoints[j].label) in_b.emplace(*b.keypoints[j].label, static_cast<int>(j));
  Correspondences out;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a.keypoints[i].label) continue;
    const auto it = in_b.find(*a.keypoints[i].label);
    if (it != in_b.end()) out.emplace_back(static_cast<int>(i), it->second);
  }
  return out;
}

namespace {

Eigen::MatrixXd normalized_descriptors(const KeypointGraph& g) {
  const Eigen::Index d = g.descriptor_dim();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(g.size()), d);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Eigen::VectorXd& v = g.keypoints[i].descriptor;
    if (v.size() != d) throw ContractError("keypoint graph has mixed descriptor lengths");
    const double n = v.norm();
    out.row(static_cast<Eigen::Index>(i)) = n > 0 ? Eigen::VectorXd(v / n) : v;
  }
  return out;
}

}  // namespace

MatchSet match_bruteforce(const KeypointGraph& a, const KeypointGraph& b, double ratio) {
  if (b.size() < 2) throw std::invalid_argument("match_bruteforce: second graph needs at least 2 keypoints");
  if (a.empty()) return {};
  if (a.descriptor_dim() == 0 || a.descriptor_dim() != b.descriptor_dim())
    throw ContractError("match_bruteforce: descriptor dimensions differ");
  const Eigen::MatrixXd da = normalized_descriptors(a), db = normalized_descriptors(b);

  Eigen::MatrixXd dist(da.rows(), db.rows());
  for (Eigen::Index i = 0; i < da.rows(); ++i)
    for (Eigen::Index j = 0; j < db.rows(); ++j) dist(i, j) = (da.row(i) - db.row(j)).norm();

  MatchSet out;
  for (Eigen::Index i = 0; i < dist.rows(); ++i) {
    Eigen::Index j1 = 0;
    dist.row(i).minCoeff(&j1);
    double d2 = INFINITY;
    for (Eigen::Index j = 0; j < dist.cols(); ++j)
      if (j != j1) d2 = std::min(d2, dist(i, j));
    const double d1 = dist(i, j1);
    const double r = d2 > 0 ? d1 / d2 : 1.0;
    if (!(r < ratio)) continue;
    Eigen::Index back = 0;
    dist.col(j1).minCoeff(&back);
    if (back != i) continue;
    out.pairs.push_back({static_cast<int>(i), static_cast<int>(j1), std::clamp(1.0 - r, 0.0, 1.0)});
  }
  return out;
}

MatcherNet::MatcherNet(const MatcherConfig& config) : config_(config), store_(config.seed) {
  const int d = config_.feature_dim;
  if (d % config_.heads != 0) throw std::invalid_argument("matcher: feature_dim must be divisible by heads");
  ad::add_linear(store_, "kenc.0", 3, config_.encoder_hidden);
  ad::add_linear(store_, "kenc.1", config_.encoder_hidden, d);
  ad::add_linear(store_, "dproj", config_.descriptor_dim, d);
  for (int l = 0; l < config_.layers; ++l) {
    for (const char* kind : {"self", "cross"}) {
      const std::string base = "gnn." + std::to_string(l) + "." + kind;
      ad::add_multi_head_attention(store_, base, d);
      ad::add_linear(store_, base + ".mlp0", 2 * d, 2 * d);
      ad::add_linear(store_, base + ".mlp1", 2 * d, d);
    }
  }
  ad::add_linear(store_, "final", d, d);
  store_.create("alpha", {1}, ad::Init::constant(config_.alpha_init));

  auto& h = store_.hyperparameters();
  h["model"] = "matcher";
  h["descriptor_dim"] = config_.descriptor_dim;
  h["feature_dim"] = d;
  h["heads"] = config_.heads;
  h["layers"] = config_.layers;
  h["encoder_hidden"] = config_.encoder_hidden;
  h["sinkhorn_iterations"] = config_.sinkhorn_iterations;
  h["alpha_init"] = config_.alpha_init;
}

MatcherNet::MatcherNet(ad::ParameterStore store) : store_(std::move(store)) {
  const auto& h = store_.hyperparameters();
  if (h.value("model", std::string()) != "matcher")
    throw std::invalid_argument("weights do not describe a matcher network");
  config_.descriptor_dim = h.at("descriptor_dim").get<int>();
  config_.feature_dim = h.at("feature_dim").get<int>();
  config_.heads = h.at("heads").get<int>();
  config_.layers = h.at("layers").get<int>();
  config_.encoder_hidden = h.at("encoder_hidden").get<int>();
  config_.sinkhorn_iterations = h.at("sinkhorn_iterations").get<int>();
  config_.alpha_init = h.at("alpha_init").get<double>();
  config_.seed = store_.seed();
}

Tensor MatcherNet::encode(const KeypointGraph& g) const {
  if (g.empty()) throw std::invalid_argument("matcher: empty keypoint graph");
  if (g.descriptor_dim() != config_.descriptor_dim)
    throw ContractError("matcher: descriptor dimension " + std::to_string(g.descriptor_dim()) + ", network expects " +
                        std::to_string(config_.descriptor_dim));
  const int n = static_cast<int>(g.size());
  double w = g.width, h = g.height;
  if (w <= 1 || h <= 1) {
    for (const auto& k : g.keypoints) {
      w = std::max(w, k.position.x() + 1);
      h = std::max(h, k.position.y() + 1);
    }
  }
  ad::RowMatrix geo(n, 3), desc(n, config_.descriptor_dim);
  for (int i = 0; i < n; ++i) {
    const auto& k = g.keypoints[i];
    geo(i, 0) = w > 1 ? 2.0 * k.position.x() / (w - 1) - 1.0 : 0.0;
    geo(i, 1) = h > 1 ? 2.0 * k.position.y() / (h - 1) - 1.0 : 0.0;
    geo(i, 2) = k.score;
    desc.row(i) = k.descriptor.transpose();
  }
  const Tensor pos = ad::linear(store_, "kenc.1", ad::relu(ad::linear(store_, "kenc.0", Tensor::from_matrix(geo))));
  return ad::linear(store_, "dproj", Tensor::from_matrix(desc)) + pos;
}

Tensor MatcherNet::update(const std::string& name, const Tensor& x, const Tensor& source) const {
  const Tensor msg = ad::multi_head_attention(store_, name, x, source, config_.heads);
  Tensor h = ad::linear(store_, name + ".mlp0", ad::concat({x, msg}, 1));
  h = ad::relu(ad::layer_norm(h));
  return x + ad::linear(store_, name + ".mlp1", h);
}

Tensor MatcherNet::scores(const KeypointGraph& a, const KeypointGraph& b) const {
  Tensor fa = encode(a), fb = encode(b);
  for (int l = 0; l < config_.layers; ++l) {
    const std::string base = "gnn." + std::to_string(l) + ".";
    const Tensor sa = update(base + "self", fa, fa);
    const Tensor sb = update(base + "self", fb, fb);
    fa = update(base + "cross", sa, sb);
    fb = update(base + "cross", sb, sa);
  }
  const Tensor ma = ad::linear(store_, "final", fa);
  const Tensor mb = ad::linear(store_, "final", fb);
  return ad::matmul(ma, ad::transpose(mb)) / std::sqrt(static_cast<double>(config_.feature_dim));
}

Tensor MatcherNet::log_assignment(const KeypointGraph& a, const KeypointGraph& b) const {
  return sinkhorn_log(scores(a, b), store_.at("alpha"), config_.sinkhorn_iterations);
}

MatchSet extract_matches(const Eigen::MatrixXd& plan, double tau) {
  MatchSet out;
  const Eigen::Index m = plan.rows() - 1, n = plan.cols() - 1;
  if (m <= 0 || n <= 0) return out;
  const auto real = plan.topLeftCorner(m, n);
  for (Eigen::Index i = 0; i < m; ++i) {
    Eigen::Index j = 0;
    real.row(i).maxCoeff(&j);
    Eigen::Index back = 0;
    real.col(j).maxCoeff(&back);
    if (back != i || !(real(i, j) >= tau)) continue;
    out.pairs.push_back({static_cast<int>(i), static_cast<int>(j), std::clamp(real(i, j), 0.0, 1.0)});
  }
  return out;
}

MatchSet gnn_match(const KeypointGraph& a, const KeypointGraph& b, const MatcherNet& net, double tau) {
  ad::NoGradGuard no_grad;
  const Tensor log_plan = net.log_assignment(a, b);
  return extract_matches(log_plan.matrix().array().exp().matrix(), tau);
}

Tensor matcher_loss(const Tensor& log_plan, const Correspondences& gt) {
  if (log_plan.rank() != 2) throw ContractError("matcher_loss: expects a rank-2 log plan");
  const int m = log_plan.dim(0) - 1, n = log_plan.dim(1) - 1;
  std::vector<bool> row_used(m, false), col_used(n, false);
  std::vector<int> cells;
  for (const auto& [i, j] : gt) {
    if (i < 0 || j < 0 || i >= m || j >= n) throw ContractError("matcher_loss: correspondence out of range");
    cells.push_back(i * (n + 1) + j);
    row_used[i] = col_used[j] = true;
  }
  for (int i = 0; i < m; ++i)
    if (!row_used[i]) cells.push_back(i * (n + 1) + n);
  for (int j = 0; j < n; ++j)
    if (!col_used[j]) cells.push_back(m * (n + 1) + j);
  const Tensor flat = ad::reshape(log_plan, {(m + 1) * (n + 1), 1});
  return -ad::mean(ad::gather_rows(flat, cells));
}

nlohmann::json to_json(const MatchSet& ms, const MatchMetrics& metrics) {
  nlohmann::json j = to_json(ms);
  j["metrics"] = {{"good_count", metrics.good_count},
                  {"mean_confidence", metrics.mean_confidence},
                  {"precision", metrics.precision},
                  {"recall", metrics.recall}};
  return j;
}

nlohmann::json to_json(const MatchSet& ms) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& m : ms.pairs) pairs.push_back({m.a, m.b, m.confidence});
  return {{"pairs", pairs},
          {"metrics", {{"good_count", ms.good_count()}, {"mean_confidence", ms.mean_confidence()}}}};
}

MatchSet match_set_from_json(const nlohmann::json& j) {
  MatchSet ms;
  for (const auto& p : j.at("pairs")) ms.pairs.push_back({p.at(0).get<int>(), p.at(1).get<int>(), p.at(2).get<double>()});
  return ms;
}

}  // namespace rkp
