#include "rkp/sinkhorn.hpp"

#include <cmath>
#include <stdexcept>

#include "rkp/error.hpp"

namespace rkp {

namespace {

double logsumexp(const Eigen::ArrayXd& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v - m).exp().sum());
}

}  // namespace

Eigen::MatrixXd augment_scores(const Eigen::MatrixXd& scores, double alpha) {
  Eigen::MatrixXd z = Eigen::MatrixXd::Constant(scores.rows() + 1, scores.cols() + 1, alpha);
  z.topLeftCorner(scores.rows(), scores.cols()) = scores;
  return z;
}

SinkhornResult sinkhorn(const Eigen::MatrixXd& scores, double alpha, int iterations) {
  if (iterations < 1) throw std::invalid_argument("sinkhorn: iterations must be >= 1");
  if (!scores.allFinite() || !std::isfinite(alpha)) throw ContractError("sinkhorn: non-finite scores");
  const Eigen::Index m = scores.rows(), n = scores.cols();
  const Eigen::MatrixXd z = augment_scores(scores, alpha);

  Eigen::ArrayXd log_a = Eigen::ArrayXd::Zero(m + 1), log_b = Eigen::ArrayXd::Zero(n + 1);
  log_a[m] = std::log(static_cast<double>(std::max<Eigen::Index>(n, 1)));
  log_b[n] = std::log(static_cast<double>(std::max<Eigen::Index>(m, 1)));
  Eigen::ArrayXd a = log_a.exp(), b = log_b.exp();
  // An empty side leaves its dustbin with nothing to absorb.
  if (n == 0) a[m] = 0.0, log_a[m] = -INFINITY;
  if (m == 0) b[n] = 0.0, log_b[n] = -INFINITY;

  Eigen::ArrayXd u = Eigen::ArrayXd::Zero(m + 1), v = Eigen::ArrayXd::Zero(n + 1);
  SinkhornResult result;
  for (int it = 0; it < iterations; ++it) {
    for (Eigen::Index i = 0; i <= m; ++i) u[i] = log_a[i] - logsumexp(z.row(i).transpose().array() + v);
    for (Eigen::Index j = 0; j <= n; ++j) v[j] = log_b[j] - logsumexp(z.col(j).array() + u);

    const Eigen::MatrixXd plan = ((z.array().colwise() + u).rowwise() + v.transpose()).exp().matrix();
    const double row_res = (plan.rowwise().sum().array() - a).abs().maxCoeff();
    const double col_res = (plan.colwise().sum().transpose().array() - b).abs().maxCoeff();
    result.residual_history.push_back(std::max(row_res, col_res));
    if (it + 1 == iterations) result.plan = plan;
  }
  result.iterations = iterations;
  result.residual = result.residual_history.back();
  return result;
}

ad::Tensor sinkhorn_log(const ad::Tensor& scores, const ad::Tensor& alpha, int iterations) {
  if (iterations < 1) throw std::invalid_argument("sinkhorn: iterations must be >= 1");
  if (scores.rank() != 2 || alpha.numel() != 1) throw ContractError("sinkhorn_log: expects [M, N] scores and scalar alpha");
  if (!scores.value().allFinite() || !alpha.value().allFinite()) throw ContractError("sinkhorn: non-finite scores");
  const int m = scores.dim(0), n = scores.dim(1);
  if (m == 0 || n == 0) throw ContractError("sinkhorn_log: empty score matrix");

  const ad::Tensor a = ad::reshape(alpha, {1, 1});
  const ad::Tensor col = a * ad::Tensor::full({m, 1}, 1.0);
  const ad::Tensor row = a * ad::Tensor::full({1, n + 1}, 1.0);
  const ad::Tensor z = ad::concat({ad::concat({scores, col}, 1), row}, 0);

  Eigen::ArrayXd la = Eigen::ArrayXd::Zero(m + 1), lb = Eigen::ArrayXd::Zero(n + 1);
  la[m] = std::log(static_cast<double>(n));
  lb[n] = std::log(static_cast<double>(m));
  const ad::Tensor log_a = ad::Tensor::from({m + 1, 1}, la);
  const ad::Tensor log_b = ad::Tensor::from({1, n + 1}, lb);

  ad::Tensor u = ad::Tensor::zeros({m + 1, 1});
  ad::Tensor v = ad::Tensor::zeros({1, n + 1});
  for (int it = 0; it < iterations; ++it) {
    u = log_a - ad::logsumexp(z + v, 1);
    v = log_b - ad::logsumexp(z + u, 0);
  }
  return z + u + v;
}

}  // namespace rkp
