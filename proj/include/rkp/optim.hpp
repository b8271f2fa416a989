#pragma once

#include <string>
#include <vector>

#include "rkp/params.hpp"

namespace rkp::ad {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam over the trainable tensors of a store. Moments can be exported into the store so a
/// checkpoint resumes exactly.
class Adam {
 public:
  Adam(ParameterStore& store, AdamConfig config);

  void step();
  void zero_grad();
  long steps() const { return steps_; }
  AdamConfig& config() { return config_; }

  /// Writes "adam.m/<name>", "adam.v/<name>" buffers and the step count into `store`.
  void export_state(ParameterStore& store) const;
  void import_state(const ParameterStore& store);

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> params_;
  std::vector<Eigen::ArrayXd> m_, v_;
  AdamConfig config_;
  long steps_ = 0;
};

class Sgd {
 public:
  Sgd(ParameterStore& store, double learning_rate, double momentum = 0.0);
  void step();
  void zero_grad();

 private:
  std::vector<Tensor> params_;
  std::vector<Eigen::ArrayXd> velocity_;
  double learning_rate_;
  double momentum_;
};

}  // namespace rkp::ad
