#pragma once

#include <Eigen/Core>
#include <vector>

#include "rkp/tensor.hpp"

namespace rkp {

struct SinkhornResult {
  Eigen::MatrixXd plan;  // (M+1) x (N+1), last row/column are the dustbins
  int iterations = 0;
  double residual = 0.0;  // max |marginal - target| over rows and columns
  std::vector<double> residual_history;
};

/// Scores padded with a dustbin row and column filled with `alpha` (corner included).
Eigen::MatrixXd augment_scores(const Eigen::MatrixXd& scores, double alpha);

/// Log-domain Sinkhorn on the augmented scores, fitting row marginals (1, ..., 1, N) and
/// column marginals (1, ..., 1, M). Each iteration normalises rows then columns.
SinkhornResult sinkhorn(const Eigen::MatrixXd& scores, double alpha, int iterations = 100);

/// Differentiable version returning the log plan [M+1, N+1]. `alpha` is a one-element tensor.
ad::Tensor sinkhorn_log(const ad::Tensor& scores, const ad::Tensor& alpha, int iterations = 100);

}  // namespace rkp
