#pragma once

#include <Eigen/Core>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace rkp::ad {

using Shape = std::vector<int>;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::string to_string(const Shape& s);
Eigen::Index numel(const Shape& s);

struct Node {
  Shape shape;
  Eigen::ArrayXd value;
  Eigen::ArrayXd grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents that require grad.
  std::function<void(Node&)> backward;
  const char* op = "leaf";
};

/// Handle to a node of a dynamically recorded computation graph. Copies share the node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, Eigen::ArrayXd values, bool requires_grad = false);
  static Tensor from_matrix(const RowMatrix& m, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int dim(int i) const;
  Eigen::Index numel() const { return node_->value.size(); }

  const Eigen::ArrayXd& value() const { return node_->value; }
  /// Direct write access for optimisers and finite-difference probes.
  Eigen::ArrayXd& mutable_value() { return node_->value; }
  const Eigen::ArrayXd& grad() const { return node_->grad; }
  Eigen::ArrayXd& mutable_grad() { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  double item() const;

  /// Value of a rank-2 tensor as a row-major matrix.
  Eigen::Map<const RowMatrix> matrix() const;

  /// Reverse-mode sweep from a one-element tensor. Gradients accumulate into leaves.
  void backward() const;
  void zero_grad();
  Tensor detach() const;

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// While alive, new operations record no graph.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};
bool grad_enabled();

// Element-wise arithmetic with numpy-style broadcasting over equal or left-padded ranks.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);
Tensor operator/(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a);
Tensor operator+(const Tensor& a, double s);
Tensor operator+(double s, const Tensor& a);
Tensor operator-(const Tensor& a, double s);
Tensor operator-(double s, const Tensor& a);
Tensor operator*(const Tensor& a, double s);
Tensor operator*(double s, const Tensor& a);
Tensor operator/(const Tensor& a, double s);

Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor square(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Reduction over one axis; the axis is kept with extent 1.
Tensor sum(const Tensor& x, int axis);
Tensor logsumexp(const Tensor& x, int axis);

Tensor reshape(const Tensor& x, Shape shape);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
Tensor slice(const Tensor& x, int axis, int start, int length);
Tensor concat(const std::vector<Tensor>& xs, int axis);
/// Rows of a rank-2 tensor picked by index (repeats allowed).
Tensor gather_rows(const Tensor& x, std::span<const int> rows);

/// Row-wise over the last axis.
Tensor softmax(const Tensor& x);
Tensor layer_norm(const Tensor& x, double eps = 1e-9);

// Image layers over [C, H, W] tensors.
/// Stride 1, zero "same" padding, odd square kernel [O, C, k, k], bias [O].
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias);
Tensor maxpool2x2(const Tensor& x);
/// Half-pixel-centre bilinear resize to (height, width).
Tensor upsample_bilinear(const Tensor& x, int height, int width);
/// Unit L2 norm across channels at every pixel.
Tensor normalize_channels(const Tensor& x, double eps = 1e-12);
/// Bilinear read of every channel at (x, y) points: [C, H, W] -> [N, C].
/// Taps outside the map contribute 0.
Tensor sample_points(const Tensor& x, std::span<const Eigen::Vector2d> points);

}  // namespace rkp::ad
