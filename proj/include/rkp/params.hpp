#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

#include "rkp/tensor.hpp"

namespace rkp::ad {

enum class InitKind { Zeros, Constant, Uniform, Normal };

struct Init {
  InitKind kind = InitKind::Zeros;
  double scale = 0.0;  // constant value, uniform half-width, or normal std

  static Init zeros() { return {InitKind::Zeros, 0.0}; }
  static Init constant(double v) { return {InitKind::Constant, v}; }
  static Init uniform(double half_width) { return {InitKind::Uniform, half_width}; }
  static Init normal(double stddev) { return {InitKind::Normal, stddev}; }
};

/// Deterministic stream keyed by (seed, name): the values of a parameter do not depend on
/// which other parameters exist or the order they were created in.
Eigen::ArrayXd keyed_uniform(std::uint64_t seed, const std::string& name, Eigen::Index count);
Eigen::ArrayXd keyed_normal(std::uint64_t seed, const std::string& name, Eigen::Index count);

/// Named tensors of a model. Trainable entries require grad; buffers do not.
class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t seed = 0) : seed_(seed) {}

  Tensor& create(const std::string& name, Shape shape, Init init, bool trainable = true);
  void set(const std::string& name, Tensor t);

  bool contains(const std::string& name) const { return tensors_.count(name) > 0; }
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);

  std::vector<std::string> names() const;
  std::vector<std::string> trainable_names() const;
  const std::map<std::string, Tensor>& tensors() const { return tensors_; }
  Eigen::Index parameter_count() const;

  std::uint64_t seed() const { return seed_; }
  nlohmann::json& hyperparameters() { return hyper_; }
  const nlohmann::json& hyperparameters() const { return hyper_; }

  /// Fresh nodes with copied values; the clone shares nothing with this store.
  ParameterStore clone() const;
  void zero_grad();

 private:
  std::uint64_t seed_;
  std::map<std::string, Tensor> tensors_;
  nlohmann::json hyper_ = nlohmann::json::object();
};

enum class WeightPrecision { Float32, Float64 };

/// RKW1 weight file: magic "RKW1", uint32 little-endian manifest length, JSON manifest
/// (shapes, byte offsets, seed, hyperparameters, dtype), then the raw little-endian payload.
std::vector<std::uint8_t> encode_weights(const ParameterStore& store,
                                         WeightPrecision precision = WeightPrecision::Float32);
ParameterStore decode_weights(std::span<const std::uint8_t> bytes);
void save_weights(const ParameterStore& store, const std::filesystem::path& path,
                  WeightPrecision precision = WeightPrecision::Float32);
ParameterStore load_weights(const std::filesystem::path& path);

}  // namespace rkp::ad
