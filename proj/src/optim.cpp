#include "rkp/optim.hpp"

#include <cmath>

namespace rkp::ad {

Adam::Adam(ParameterStore& store, AdamConfig config) : config_(config) {
  for (const auto& name : store.trainable_names()) {
    names_.push_back(name);
    params_.push_back(store.at(name));
    m_.push_back(Eigen::ArrayXd::Zero(params_.back().numel()));
    v_.push_back(Eigen::ArrayXd::Zero(params_.back().numel()));
  }
}

void Adam::step() {
  ++steps_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    if (p.grad().size() != p.numel()) continue;  // untouched by this loss
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * p.grad();
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * p.grad().square();
    p.mutable_value() -= config_.learning_rate * (m_[i] / bc1) / ((v_[i] / bc2).sqrt() + config_.epsilon);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Adam::export_state(ParameterStore& store) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    store.set("adam.m/" + names_[i], Tensor::from(params_[i].shape(), m_[i]));
    store.set("adam.v/" + names_[i], Tensor::from(params_[i].shape(), v_[i]));
  }
  store.hyperparameters()["adam_steps"] = steps_;
}

void Adam::import_state(const ParameterStore& store) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (store.contains("adam.m/" + names_[i])) m_[i] = store.at("adam.m/" + names_[i]).value();
    if (store.contains("adam.v/" + names_[i])) v_[i] = store.at("adam.v/" + names_[i]).value();
  }
  steps_ = store.hyperparameters().value("adam_steps", 0L);
}

Sgd::Sgd(ParameterStore& store, double learning_rate, double momentum)
    : learning_rate_(learning_rate), momentum_(momentum) {
  for (const auto& name : store.trainable_names()) {
    params_.push_back(store.at(name));
    velocity_.push_back(Eigen::ArrayXd::Zero(params_.back().numel()));
  }
}

void Sgd::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    if (p.grad().size() != p.numel()) continue;
    velocity_[i] = momentum_ * velocity_[i] + p.grad();
    p.mutable_value() -= learning_rate_ * velocity_[i];
  }
}

void Sgd::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace rkp::ad
