#include <gtest/gtest.h>

#include <random>

#include "rkp/error.hpp"
#include "rkp/gradcheck.hpp"
#include "rkp/layers.hpp"
#include "rkp/optim.hpp"
#include "rkp/params.hpp"
#include "rkp/tensor.hpp"

using namespace rkp::ad;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, bool grad = true, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0, scale);
  Eigen::ArrayXd v(numel(shape));
  for (auto& x : v) x = n(rng);
  return Tensor::from(shape, v, grad);
}

void expect_grad_ok(const ScalarFunction& f, const std::vector<Tensor>& in, double tol = 1e-4) {
  const auto r = grad_check(f, in, tol);
  EXPECT_TRUE(r.passed()) << "max rel err " << r.max_relative_error << " at input " << r.worst_input
                          << " element " << r.worst_element;
}

}  // namespace

TEST(Tensor, SquareGradient) {
  const Tensor x = Tensor::scalar(3.0, true);
  square(x).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
}

TEST(Tensor, SumOfSoftmaxHasZeroGradient) {
  const Tensor x = random_tensor({2, 5}, 1);
  sum(softmax(x)).backward();
  EXPECT_LE(x.grad().abs().maxCoeff(), 1e-12);
}

TEST(Tensor, SharedSubexpressionsAccumulate) {
  const Tensor x = Tensor::scalar(2.0, true);
  const Tensor y = x * x;
  (y + y * x).backward();  // x^2 + x^3
  EXPECT_DOUBLE_EQ(x.grad()[0], 2 * 2.0 + 3 * 4.0);
}

TEST(Tensor, BackwardOnNonScalarIsContractError) {
  EXPECT_THROW(random_tensor({3}, 2).backward(), rkp::ContractError);
}

TEST(Tensor, ShapeMismatchNamesBothShapes) {
  try {
    matmul(random_tensor({2, 3}, 1), random_tensor({4, 2}, 2));
    FAIL();
  } catch (const rkp::ContractError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2,3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4,2]"), std::string::npos) << msg;
  }
}

TEST(Tensor, NoGradGuardRecordsNothing) {
  const Tensor x = random_tensor({3}, 3);
  NoGradGuard guard;
  const Tensor y = sum(square(x));
  EXPECT_FALSE(y.requires_grad());
}

TEST(Layers, IdentityConvLeavesInputUnchanged) {
  const Tensor x = random_tensor({3, 5, 6}, 4, false);
  Eigen::ArrayXd w = Eigen::ArrayXd::Zero(9);
  for (int c = 0; c < 3; ++c) w[c * 3 + c] = 1.0;
  const Tensor y = conv2d(x, Tensor::from({3, 3, 1, 1}, w), Tensor::zeros({3}));
  EXPECT_TRUE((y.value() == x.value()).all());
}

TEST(Layers, MaxPoolTwoByTwo) {
  const Tensor x = Tensor::from({1, 2, 2}, (Eigen::ArrayXd(4) << 1, 2, 3, 4).finished());
  const Tensor y = maxpool2x2(x);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 1}));
  EXPECT_EQ(y.value()[0], 4.0);
}

TEST(Layers, AttentionWithOrthogonalOneHotsReturnsValues) {
  RowMatrix e = RowMatrix::Identity(4, 4) * 20.0;
  const Tensor q = Tensor::from_matrix(e);
  RowMatrix v(4, 3);
  v << 1, 2, 3, 4, 5, 6, 7, 8, 9, -1, 0, 1;
  const Tensor out = attention(q, q, Tensor::from_matrix(v));
  // Dense oracle: softmax over each row of q q^T / sqrt(d).
  RowMatrix logits = e * e.transpose() / 2.0;
  RowMatrix w = (logits.array().colwise() - logits.rowwise().maxCoeff().array()).exp();
  w = w.array().colwise() / w.rowwise().sum().array();
  EXPECT_LE((out.matrix() - w * v).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((out.matrix() - v).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Layers, SoftmaxRowsSumToOneAndLayerNormMoments) {
  const Tensor x = random_tensor({6, 9}, 5, false, 3.0);
  const auto s = softmax(x).matrix();
  EXPECT_LE((s.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-9);
  const auto n = layer_norm(x).matrix();
  for (int r = 0; r < 6; ++r) {
    EXPECT_LE(std::abs(n.row(r).mean()), 1e-9);
    EXPECT_NEAR((n.row(r).array() - n.row(r).mean()).square().mean(), 1.0, 1e-6);
  }
}

// Each shipped op passes a finite-difference check on randomly shaped inputs.
class OpGradients : public ::testing::TestWithParam<int> {};

TEST_P(OpGradients, ElementwiseAndReductions) {
  const std::uint64_t s = GetParam();
  const int r = 2 + s % 3, c = 2 + (s / 3) % 4;
  const Tensor a = random_tensor({r, c}, s), b = random_tensor({r, c}, s + 100);
  const Tensor pos = Tensor::from({r, c}, random_tensor({r, c}, s + 7).value().abs() + 0.5, true);
  expect_grad_ok([](const auto& in) { return sum(in[0] * in[1] - in[0] / (square(in[1]) + 1.0)); }, {a, b});
  expect_grad_ok([](const auto& in) { return sum(exp(in[0] * 0.3) + log(in[1]) + sqrt(in[1])); }, {a, pos});
  expect_grad_ok([](const auto& in) { return sum(sigmoid(in[0]) * in[1]); }, {a, b});
  expect_grad_ok([](const auto& in) { return sum(square(logsumexp(in[0], 1))) + sum(square(sum(in[0], 0))); }, {a});
  expect_grad_ok([](const auto& in) { return sum(square(softmax(in[0])) * in[1]); }, {a, b});
  expect_grad_ok([](const auto& in) { return sum(layer_norm(in[0]) * in[1]); }, {a, b});
  expect_grad_ok([](const auto& in) { return mean(square(transpose(in[0]))); }, {a});
  // ReLU away from its kink.
  const Tensor shifted = Tensor::from({r, c}, a.value() + (a.value() >= 0).cast<double>() * 0.1 - 0.05, true);
  expect_grad_ok([](const auto& in) { return sum(square(relu(in[0]))); }, {shifted});
}

TEST_P(OpGradients, MatrixAndShapeOps) {
  const std::uint64_t s = GetParam();
  const int m = 2 + s % 3, k = 2 + s % 4, n = 1 + s % 3;
  const Tensor a = random_tensor({m, k}, s), b = random_tensor({k, n}, s + 1);
  expect_grad_ok([](const auto& in) { return sum(square(matmul(in[0], in[1]))); }, {a, b});
  expect_grad_ok([m](const auto& in) { return sum(square(slice(in[0], 0, 1, m - 1))); }, {a});
  expect_grad_ok([](const auto& in) { return sum(square(concat({in[0], in[0] * 2.0}, 1))); }, {a});
  expect_grad_ok([m, k](const auto& in) { return sum(square(reshape(in[0], {k, m})) * 0.5); }, {a});
  const std::vector<int> rows{m - 1, 0, m - 1};
  expect_grad_ok([&rows](const auto& in) { return sum(square(gather_rows(in[0], rows))); }, {a});
}

TEST_P(OpGradients, ImageLayers) {
  const std::uint64_t s = GetParam();
  const int c = 1 + s % 2, h = 4 + 2 * (s % 2), w = 4 + 2 * ((s / 2) % 2);
  const Tensor x = random_tensor({c, h, w}, s);
  const Tensor wt = random_tensor({2, c, 3, 3}, s + 1, true, 0.5), bias = random_tensor({2}, s + 2);
  expect_grad_ok([](const auto& in) { return sum(square(conv2d(in[0], in[1], in[2]))); }, {x, wt, bias});
  expect_grad_ok([](const auto& in) { return sum(square(maxpool2x2(in[0]))); }, {x});
  expect_grad_ok([h, w](const auto& in) { return sum(square(upsample_bilinear(in[0], 2 * h + 1, w + 3))); }, {x});
  expect_grad_ok([](const auto& in) { return sum(normalize_channels(in[0]) * in[1]); }, {x, random_tensor({c, h, w}, s + 9)});
  const std::vector<Eigen::Vector2d> pts{{1.3, 2.6}, {w - 1.5, 0.2}};
  expect_grad_ok([&pts](const auto& in) { return sum(square(sample_points(in[0], pts))); }, {x});
}

TEST_P(OpGradients, LinearAndMultiHeadAttention) {
  const std::uint64_t s = GetParam();
  ParameterStore ps(s);
  add_linear(ps, "lin", 4, 8);
  add_multi_head_attention(ps, "mha", 8);
  const Tensor x = random_tensor({3, 4}, s), src = random_tensor({5, 8}, s + 3);
  std::vector<Tensor> params;
  for (const auto& name : ps.trainable_names()) params.push_back(ps.at(name));
  params.push_back(x);
  expect_grad_ok(
      [&](const auto&) {
        const Tensor h = linear(ps, "lin", x);
        return sum(square(multi_head_attention(ps, "mha", h, src, 2)));
      },
      params);
}

INSTANTIATE_TEST_SUITE_P(Seeds, OpGradients, ::testing::Range(0, 20));

TEST(GradCheck, ThreeLayerMlp) {
  ParameterStore ps(7);
  add_linear(ps, "l0", 5, 8);
  add_linear(ps, "l1", 8, 8);
  add_linear(ps, "l2", 8, 1);
  const Tensor x = random_tensor({4, 5}, 8, false);
  std::vector<Tensor> params;
  for (const auto& name : ps.trainable_names()) params.push_back(ps.at(name));
  expect_grad_ok(
      [&](const auto&) {
        const Tensor h = sigmoid(linear(ps, "l1", sigmoid(linear(ps, "l0", x))));
        return sum(square(linear(ps, "l2", h)));
      },
      params);
}

TEST(GradCheck, ReportsFailures) {
  // An op with a deliberately wrong derivative: detach hides the dependence.
  const Tensor x = random_tensor({3}, 1);
  const auto r = grad_check([](const auto& in) { return sum(in[0] * in[0].detach()); }, {x}, 1e-4);
  EXPECT_FALSE(r.passed());
  EXPECT_GT(r.max_relative_error, 0.1);
}

TEST(Params, KeyedInitIndependentOfOrder) {
  ParameterStore a(3), b(3);
  a.create("x", {4}, Init::normal(1));
  a.create("y", {4}, Init::uniform(1));
  b.create("y", {4}, Init::uniform(1));
  b.create("x", {4}, Init::normal(1));
  EXPECT_TRUE((a.at("x").value() == b.at("x").value()).all());
  EXPECT_TRUE((a.at("y").value() == b.at("y").value()).all());
  EXPECT_THROW(a.create("x", {1}, Init::zeros()), rkp::ContractError);
}

TEST(Params, WeightFileRoundTrip) {
  ParameterStore ps(5);
  ps.create("w", {3, 2}, Init::normal(1));
  ps.create("b", {2}, Init::constant(0.25));
  ps.hyperparameters()["model"] = "test";
  const auto f64 = decode_weights(encode_weights(ps, WeightPrecision::Float64));
  EXPECT_TRUE((f64.at("w").value() == ps.at("w").value()).all());
  EXPECT_EQ(f64.hyperparameters()["model"], "test");
  EXPECT_EQ(f64.seed(), 5u);
  const auto f32 = decode_weights(encode_weights(ps));
  EXPECT_TRUE((f32.at("w").value() == ps.at("w").value().cast<float>().cast<double>()).all());
  // And a second trip is exact.
  EXPECT_EQ(encode_weights(f32), encode_weights(ps));

  auto bytes = encode_weights(ps);
  bytes.resize(bytes.size() - 3);
  EXPECT_THROW(decode_weights(bytes), rkp::FormatError);
  bytes[0] = 'X';
  EXPECT_THROW(decode_weights(bytes), rkp::FormatError);
}

TEST(Optim, ResumedAdamReproducesNextLoss) {
  const auto loss_of = [](const ParameterStore& ps) {
    return sum(square(matmul(ps.at("w"), ps.at("w")) - 1.0)) + sum(square(ps.at("b")));
  };
  ParameterStore ps(2);
  ps.create("w", {3, 3}, Init::normal(0.5));
  ps.create("b", {3}, Init::normal(0.5));
  Adam opt(ps, {0.01});
  for (int i = 0; i < 5; ++i) {
    opt.zero_grad();
    loss_of(ps).backward();
    opt.step();
  }
  ParameterStore snapshot = ps.clone();
  opt.export_state(snapshot);
  ParameterStore restored = decode_weights(encode_weights(snapshot, WeightPrecision::Float64));
  Adam resumed(restored, {0.01});
  resumed.import_state(restored);

  opt.zero_grad();
  loss_of(ps).backward();
  opt.step();
  resumed.zero_grad();
  loss_of(restored).backward();
  resumed.step();
  EXPECT_EQ(loss_of(ps).item(), loss_of(restored).item());
}

TEST(Optim, SgdDescends) {
  ParameterStore ps(1);
  ps.create("x", {2}, Init::constant(3.0));
  Sgd opt(ps, 0.1, 0.5);
  double first = 0, last = 0;
  for (int i = 0; i < 50; ++i) {
    opt.zero_grad();
    const Tensor l = sum(square(ps.at("x")));
    if (i == 0) first = l.item();
    last = l.item();
    l.backward();
    opt.step();
  }
  EXPECT_LT(last, first * 1e-3);
}
