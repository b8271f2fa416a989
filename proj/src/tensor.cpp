#include "rkp/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "rkp/error.hpp"

namespace rkp::ad {

namespace {

thread_local bool g_grad_enabled = true;

using Index = Eigen::Index;

Tensor make_result(const char* op, Shape shape, Eigen::ArrayXd value,
                   std::initializer_list<const Tensor*> parents,
                   std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->op = op;
  bool needs = false;
  if (g_grad_enabled)
    for (const Tensor* p : parents) needs = needs || p->requires_grad();
  if (needs) {
    n->requires_grad = true;
    for (const Tensor* p : parents) n->parents.push_back(p->node_ptr());
    n->backward = std::move(backward);
  }
  return Tensor(std::move(n));
}

Tensor make_result(const char* op, Shape shape, Eigen::ArrayXd value,
                   const std::vector<Tensor>& parents, std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->op = op;
  bool needs = false;
  if (g_grad_enabled)
    for (const auto& p : parents) needs = needs || p.requires_grad();
  if (needs) {
    n->requires_grad = true;
    for (const auto& p : parents) n->parents.push_back(p.node_ptr());
    n->backward = std::move(backward);
  }
  return Tensor(std::move(n));
}

// Zero-initialised gradient buffer of a parent, or nullptr when it takes no gradient.
Eigen::ArrayXd* grad_of(Node& parent) {
  if (!parent.requires_grad) return nullptr;
  if (parent.grad.size() != parent.value.size()) parent.grad = Eigen::ArrayXd::Zero(parent.value.size());
  return &parent.grad;
}

// Splits a shape around `axis` into (outer, extent, inner).
struct AxisSplit {
  Index outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, int axis) {
  AxisSplit a;
  for (int i = 0; i < axis; ++i) a.outer *= s[i];
  a.extent = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) a.inner *= s[i];
  return a;
}

int normalize_axis(int axis, int rank, const char* op) {
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) throw ContractError(std::string(op) + ": axis out of range");
  return axis;
}

void require_rank(const Tensor& x, int rank, const char* op) {
  if (x.rank() != rank)
    throw ContractError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                        to_string(x.shape()));
}

// Flat index mapping from a broadcast output element to each operand.
struct BroadcastPlan {
  enum class Mode { Same, ScalarA, ScalarB, General } mode = Mode::Same;
  Shape out;
  std::shared_ptr<std::vector<Index>> ia, ib;

  Index a(Index k) const {
    switch (mode) {
      case Mode::Same: case Mode::ScalarB: return k;
      case Mode::ScalarA: return 0;
      default: return (*ia)[k];
    }
  }
  Index b(Index k) const {
    switch (mode) {
      case Mode::Same: case Mode::ScalarA: return k;
      case Mode::ScalarB: return 0;
      default: return (*ib)[k];
    }
  }
};

BroadcastPlan plan_broadcast(const Shape& sa, const Shape& sb, const char* op) {
  BroadcastPlan plan;
  if (sa == sb) {
    plan.out = sa;
    return plan;
  }
  if (numel(sb) == 1 && sb.size() <= sa.size()) {
    plan.mode = BroadcastPlan::Mode::ScalarB;
    plan.out = sa;
    return plan;
  }
  if (numel(sa) == 1 && sa.size() <= sb.size()) {
    plan.mode = BroadcastPlan::Mode::ScalarA;
    plan.out = sb;
    return plan;
  }
  const std::size_t rank = std::max(sa.size(), sb.size());
  Shape a(rank, 1), b(rank, 1);
  std::copy(sa.begin(), sa.end(), a.begin() + (rank - sa.size()));
  std::copy(sb.begin(), sb.end(), b.begin() + (rank - sb.size()));
  plan.mode = BroadcastPlan::Mode::General;
  plan.out.resize(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    if (a[i] != b[i] && a[i] != 1 && b[i] != 1)
      throw ContractError(std::string(op) + ": cannot broadcast " + to_string(sa) + " with " + to_string(sb));
    plan.out[i] = std::max(a[i], b[i]);
  }
  std::vector<Index> stride_a(rank, 0), stride_b(rank, 0);
  Index sta = 1, stb = 1;
  for (std::size_t i = rank; i-- > 0;) {
    stride_a[i] = a[i] == 1 ? 0 : sta;
    stride_b[i] = b[i] == 1 ? 0 : stb;
    sta *= a[i];
    stb *= b[i];
  }
  const Index n = numel(plan.out);
  plan.ia = std::make_shared<std::vector<Index>>(n);
  plan.ib = std::make_shared<std::vector<Index>>(n);
  std::vector<int> counter(rank, 0);
  Index oa = 0, ob = 0;
  for (Index k = 0; k < n; ++k) {
    (*plan.ia)[k] = oa;
    (*plan.ib)[k] = ob;
    for (std::size_t d = rank; d-- > 0;) {
      ++counter[d];
      oa += stride_a[d];
      ob += stride_b[d];
      if (counter[d] < plan.out[d]) break;
      oa -= stride_a[d] * counter[d];
      ob -= stride_b[d] * counter[d];
      counter[d] = 0;
    }
  }
  return plan;
}

// f(a, b) with partials fa(a, b), fb(a, b).
template <class F, class FA, class FB>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, F f, FA fa, FB fb) {
  BroadcastPlan plan = plan_broadcast(a.shape(), b.shape(), op);
  const Index n = numel(plan.out);
  Eigen::ArrayXd out(n);
  const auto& av = a.value();
  const auto& bv = b.value();
  if (plan.mode == BroadcastPlan::Mode::Same) {
    for (Index k = 0; k < n; ++k) out[k] = f(av[k], bv[k]);
  } else {
    for (Index k = 0; k < n; ++k) out[k] = f(av[plan.a(k)], bv[plan.b(k)]);
  }
  Shape shape = plan.out;
  return make_result(op, std::move(shape), std::move(out), {&a, &b}, [plan, fa, fb, n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    Eigen::ArrayXd* ga = grad_of(pa);
    Eigen::ArrayXd* gb = grad_of(pb);
    for (Index k = 0; k < n; ++k) {
      const Index i = plan.a(k), j = plan.b(k);
      const double g = self.grad[k];
      if (ga) (*ga)[i] += g * fa(pa.value[i], pb.value[j]);
      if (gb) (*gb)[j] += g * fb(pa.value[i], pb.value[j]);
    }
  });
}

// y = f(x); dy/dx = df(x, y).
template <class F, class DF>
Tensor unary(const char* op, const Tensor& x, F f, DF df) {
  Eigen::ArrayXd out = x.value().unaryExpr(f);
  return make_result(op, x.shape(), std::move(out), {&x}, [df](Node& self) {
    Node& p = *self.parents[0];
    Eigen::ArrayXd* g = grad_of(p);
    for (Index k = 0; k < self.value.size(); ++k) (*g)[k] += self.grad[k] * df(p.value[k], self.value[k]);
  });
}

}  // namespace

std::string to_string(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

Eigen::Index numel(const Shape& s) {
  Index n = 1;
  for (int d : s) n *= d;
  return n;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const Index n = ad::numel(shape);
  return from(std::move(shape), Eigen::ArrayXd::Zero(n), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const Index n = ad::numel(shape);
  return from(std::move(shape), Eigen::ArrayXd::Constant(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, Eigen::ArrayXd values, bool requires_grad) {
  if (ad::numel(shape) != values.size())
    throw ContractError("Tensor::from: shape " + ad::to_string(shape) + " needs " +
                        std::to_string(ad::numel(shape)) + " values, got " + std::to_string(values.size()));
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::from_matrix(const RowMatrix& m, bool requires_grad) {
  Eigen::ArrayXd v = Eigen::Map<const Eigen::ArrayXd>(m.data(), m.size());
  return from({static_cast<int>(m.rows()), static_cast<int>(m.cols())}, std::move(v), requires_grad);
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return from({1}, Eigen::ArrayXd::Constant(1, v), requires_grad);
}

int Tensor::dim(int i) const { return node_->shape.at(normalize_axis(i, rank(), "dim")); }

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item: tensor of shape " + ad::to_string(shape()) + " is not a scalar");
  return node_->value[0];
}

Eigen::Map<const RowMatrix> Tensor::matrix() const {
  require_rank(*this, 2, "matrix");
  return {node_->value.data(), node_->shape[0], node_->shape[1]};
}

void Tensor::backward() const {
  if (numel() != 1)
    throw ContractError("backward: output of shape " + ad::to_string(shape()) + " is not a scalar");

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  for (Node* n : order)
    if (!n->parents.empty()) n->grad = Eigen::ArrayXd::Zero(n->value.size());
  if (node_->grad.size() != 1) node_->grad = Eigen::ArrayXd::Zero(1);
  node_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward) (*it)->backward(**it);
}

void Tensor::zero_grad() { node_->grad = Eigen::ArrayXd::Zero(node_->value.size()); }

Tensor Tensor::detach() const { return from(shape(), value(), false); }

Tensor add(const Tensor& a, const Tensor& b) {
  return binary("add", a, b, [](double x, double y) { return x + y; },
                [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}
Tensor sub(const Tensor& a, const Tensor& b) {
  return binary("sub", a, b, [](double x, double y) { return x - y; },
                [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}
Tensor mul(const Tensor& a, const Tensor& b) {
  return binary("mul", a, b, [](double x, double y) { return x * y; },
                [](double, double y) { return y; }, [](double x, double) { return x; });
}
Tensor div(const Tensor& a, const Tensor& b) {
  return binary("div", a, b, [](double x, double y) { return x / y; },
                [](double, double y) { return 1.0 / y; }, [](double x, double y) { return -x / (y * y); });
}

Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
Tensor operator-(const Tensor& a) {
  return unary("neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}
Tensor operator+(const Tensor& a, double s) {
  return unary("add_scalar", a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}
Tensor operator+(double s, const Tensor& a) { return a + s; }
Tensor operator-(const Tensor& a, double s) { return a + (-s); }
Tensor operator-(double s, const Tensor& a) {
  return unary("rsub_scalar", a, [s](double x) { return s - x; }, [](double, double) { return -1.0; });
}
Tensor operator*(const Tensor& a, double s) {
  return unary("mul_scalar", a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}
Tensor operator*(double s, const Tensor& a) { return a * s; }
Tensor operator/(const Tensor& a, double s) { return a * (1.0 / s); }

Tensor exp(const Tensor& x) {
  return unary("exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}
Tensor log(const Tensor& x) {
  return unary("log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}
Tensor sqrt(const Tensor& x) {
  return unary("sqrt", x, [](double v) { return std::sqrt(v); }, [](double, double y) { return 0.5 / y; });
}
Tensor square(const Tensor& x) {
  return unary("square", x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}
Tensor relu(const Tensor& x) {
  return unary("relu", x, [](double v) { return v > 0 ? v : 0.0; },
               [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}
Tensor sigmoid(const Tensor& x) {
  return unary(
      "sigmoid", x,
      [](double v) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor sum(const Tensor& x) {
  return make_result("sum", {1}, Eigen::ArrayXd::Constant(1, x.value().sum()), {&x}, [](Node& self) {
    Eigen::ArrayXd* g = grad_of(*self.parents[0]);
    *g += self.grad[0];
  });
}

Tensor mean(const Tensor& x) { return sum(x) / static_cast<double>(x.numel()); }

Tensor sum(const Tensor& x, int axis) {
  axis = normalize_axis(axis, x.rank(), "sum");
  const AxisSplit s = split_at(x.shape(), axis);
  Eigen::ArrayXd out = Eigen::ArrayXd::Zero(s.outer * s.inner);
  const auto& v = x.value();
  for (Index o = 0; o < s.outer; ++o)
    for (Index e = 0; e < s.extent; ++e)
      for (Index i = 0; i < s.inner; ++i) out[o * s.inner + i] += v[(o * s.extent + e) * s.inner + i];
  Shape shape = x.shape();
  shape[axis] = 1;
  return make_result("sum_axis", std::move(shape), std::move(out), {&x}, [s](Node& self) {
    Eigen::ArrayXd* g = grad_of(*self.parents[0]);
    for (Index o = 0; o < s.outer; ++o)
      for (Index e = 0; e < s.extent; ++e)
        for (Index i = 0; i < s.inner; ++i) (*g)[(o * s.extent + e) * s.inner + i] += self.grad[o * s.inner + i];
  });
}

Tensor logsumexp(const Tensor& x, int axis) {
  axis = normalize_axis(axis, x.rank(), "logsumexp");
  const AxisSplit s = split_at(x.shape(), axis);
  Eigen::ArrayXd out(s.outer * s.inner);
  const auto& v = x.value();
  for (Index o = 0; o < s.outer; ++o) {
    for (Index i = 0; i < s.inner; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (Index e = 0; e < s.extent; ++e) mx = std::max(mx, v[(o * s.extent + e) * s.inner + i]);
      double acc = 0.0;
      for (Index e = 0; e < s.extent; ++e) acc += std::exp(v[(o * s.extent + e) * s.inner + i] - mx);
      out[o * s.inner + i] = mx + std::log(acc);
    }
  }
  Shape shape = x.shape();
  shape[axis] = 1;
  return make_result("logsumexp", std::move(shape), std::move(out), {&x}, [s](Node& self) {
    Node& p = *self.parents[0];
    Eigen::ArrayXd* g = grad_of(p);
    for (Index o = 0; o < s.outer; ++o)
      for (Index e = 0; e < s.extent; ++e)
        for (Index i = 0; i < s.inner; ++i) {
          const Index k = (o * s.extent + e) * s.inner + i;
          const Index r = o * s.inner + i;
          (*g)[k] += self.grad[r] * std::exp(p.value[k] - self.value[r]);
        }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (ad::numel(shape) != x.numel())
    throw ContractError("reshape: " + to_string(x.shape()) + " -> " + to_string(shape));
  return make_result("reshape", std::move(shape), x.value(), {&x}, [](Node& self) {
    *grad_of(*self.parents[0]) += self.grad;
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  if (a.dim(1) != b.dim(0))
    throw ContractError("matmul: shapes " + to_string(a.shape()) + " and " + to_string(b.shape()));
  const int m = a.dim(0), n = b.dim(1);
  Eigen::ArrayXd out(Index(m) * n);
  Eigen::Map<RowMatrix>(out.data(), m, n).noalias() = a.matrix() * b.matrix();
  return make_result("matmul", {m, n}, std::move(out), {&a, &b}, [m, n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const int k = pa.shape[1];
    Eigen::Map<const RowMatrix> g(self.grad.data(), m, n);
    if (Eigen::ArrayXd* ga = grad_of(pa)) {
      Eigen::Map<RowMatrix>(ga->data(), m, k).noalias() +=
          g * Eigen::Map<const RowMatrix>(pb.value.data(), k, n).transpose();
    }
    if (Eigen::ArrayXd* gb = grad_of(pb)) {
      Eigen::Map<RowMatrix>(gb->data(), k, n).noalias() +=
          Eigen::Map<const RowMatrix>(pa.value.data(), m, k).transpose() * g;
    }
  });
}

Tensor transpose(const Tensor& x) {
  require_rank(x, 2, "transpose");
  const int r = x.dim(0), c = x.dim(1);
  Eigen::ArrayXd out(x.numel());
  Eigen::Map<RowMatrix>(out.data(), c, r) = x.matrix().transpose();
  return make_result("transpose", {c, r}, std::move(out), {&x}, [r, c](Node& self) {
    Eigen::ArrayXd* g = grad_of(*self.parents[0]);
    Eigen::Map<RowMatrix>(g->data(), r, c) += Eigen::Map<const RowMatrix>(self.grad.data(), c, r).transpose();
  });
}

Tensor slice(const Tensor& x, int axis, int start, int length) {
  axis = normalize_axis(axis, x.rank(), "slice");
  if (start < 0 || length < 0 || start + length > x.dim(axis))
    throw ContractError("slice: [" + std::to_string(start) + ", +" + std::to_string(length) +
                        ") outside axis of shape " + to_string(x.shape()));
  const AxisSplit s = split_at(x.shape(), axis);
  Eigen::ArrayXd out(s.outer * length * s.inner);
  const auto& v = x.value();
  for (Index o = 0; o < s.outer; ++o)
    out.segment(o * length * s.inner, length * s.inner) =
        v.segment((o * s.extent + start) * s.inner, length * s.inner);
  Shape shape = x.shape();
  shape[axis] = length;
  return make_result("slice", std::move(shape), std::move(out), {&x}, [s, start, length](Node& self) {
    Eigen::ArrayXd* g = grad_of(*self.parents[0]);
    for (Index o = 0; o < s.outer; ++o)
      g->segment((o * s.extent + start) * s.inner, length * s.inner) +=
          self.grad.segment(o * length * s.inner, length * s.inner);
  });
}

Tensor concat(const std::vector<Tensor>& xs, int axis) {
  if (xs.empty()) throw ContractError("concat: no inputs");
  axis = normalize_axis(axis, xs[0].rank(), "concat");
  Shape shape = xs[0].shape();
  shape[axis] = 0;
  for (const auto& t : xs) {
    Shape probe = t.shape();
    if (probe.size() != shape.size()) throw ContractError("concat: rank mismatch " + to_string(t.shape()));
    probe[axis] = 0;
    if (probe != shape)
      throw ContractError("concat: shapes " + to_string(xs[0].shape()) + " and " + to_string(t.shape()));
  }
  std::vector<int> extents;
  for (const auto& t : xs) extents.push_back(t.dim(axis));
  for (int e : extents) shape[axis] += e;
  const AxisSplit s = split_at(shape, axis);
  Eigen::ArrayXd out(ad::numel(shape));
  Index offset = 0;
  for (std::size_t t = 0; t < xs.size(); ++t) {
    const Index len = Index(extents[t]) * s.inner;
    for (Index o = 0; o < s.outer; ++o)
      out.segment(o * s.extent * s.inner + offset, len) = xs[t].value().segment(o * len, len);
    offset += len;
  }
  return make_result("concat", std::move(shape), std::move(out), xs, [s, extents](Node& self) {
    Index offset = 0;
    for (std::size_t t = 0; t < self.parents.size(); ++t) {
      const Index len = Index(extents[t]) * s.inner;
      if (Eigen::ArrayXd* g = grad_of(*self.parents[t]))
        for (Index o = 0; o < s.outer; ++o) g->segment(o * len, len) += self.grad.segment(o * s.extent * s.inner + offset, len);
      offset += len;
    }
  });
}

Tensor gather_rows(const Tensor& x, std::span<const int> rows) {
  require_rank(x, 2, "gather_rows");
  const int r = x.dim(0), c = x.dim(1);
  std::vector<int> idx(rows.begin(), rows.end());
  Eigen::ArrayXd out(Index(idx.size()) * c);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= r) throw ContractError("gather_rows: index out of range");
    out.segment(Index(i) * c, c) = x.value().segment(Index(idx[i]) * c, c);
  }
  return make_result("gather_rows", {static_cast<int>(idx.size()), c}, std::move(out), {&x},
                     [idx, c](Node& self) {
                       Eigen::ArrayXd* g = grad_of(*self.parents[0]);
                       for (std::size_t i = 0; i < idx.size(); ++i)
                         g->segment(Index(idx[i]) * c, c) += self.grad.segment(Index(i) * c, c);
                     });
}

Tensor softmax(const Tensor& x) {
  const Index cols = x.shape().back();
  const Index rows = x.numel() / cols;
  Eigen::ArrayXd out(x.numel());
  for (Index r = 0; r < rows; ++r) {
    auto in = x.value().segment(r * cols, cols);
    auto o = out.segment(r * cols, cols);
    o = (in - in.maxCoeff()).exp();
    o /= o.sum();
  }
  return make_result("softmax", x.shape(), std::move(out), {&x}, [rows, cols](Node& self) {
    Eigen::ArrayXd* g = grad_of(*self.parents[0]);
    for (Index r = 0; r < rows; ++r) {
      auto y = self.value.segment(r * cols, cols);
      auto gy = self.grad.segment(r * cols, cols);
      const double dot = (y * gy).sum();
      g->segment(r * cols, cols) += y * (gy - dot);
    }
  });
}

Tensor layer_norm(const Tensor& x, double eps) {
  const Index cols = x.shape().back();
  const Index rows = x.numel() / cols;
  Eigen::ArrayXd out(x.numel());
  auto inv_std = std::make_shared<Eigen::ArrayXd>(rows);
  for (Index r = 0; r < rows; ++r) {
    auto in = x.value().segment(r * cols, cols);
    const double mu = in.mean();
    const double var = (in - mu).square().mean();
    (*inv_std)[r] = 1.0 / std::sqrt(var + eps);
    out.segment(r * cols, cols) = (in - mu) * (*inv_std)[r];
  }
  return make_result("layer_norm", x.shape(), std::move(out), {&x}, [rows, cols, inv_std](Node& self) {
    Eigen::ArrayXd* g = grad_of(*self.parents[0]);
    for (Index r = 0; r < rows; ++r) {
      auto y = self.value.segment(r * cols, cols);
      auto gy = self.grad.segment(r * cols, cols);
      const double mg = gy.mean();
      const double mgy = (gy * y).mean();
      g->segment(r * cols, cols) += (*inv_std)[r] * (gy - mg - y * mgy);
    }
  });
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(x, 3, "conv2d");
  require_rank(weight, 4, "conv2d");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int o = weight.dim(0), k = weight.dim(2);
  if (weight.dim(1) != c || weight.dim(3) != k || k % 2 == 0)
    throw ContractError("conv2d: input " + to_string(x.shape()) + " vs weight " + to_string(weight.shape()));
  if (bias.numel() != o) throw ContractError("conv2d: bias " + to_string(bias.shape()) + " for " + std::to_string(o) + " outputs");
  const int pad = k / 2;
  const Index hw = Index(h) * w;
  const Index ckk = Index(c) * k * k;

  auto cols = std::make_shared<RowMatrix>(RowMatrix::Zero(ckk, hw));
  const double* xv = x.value().data();
  for (int ci = 0; ci < c; ++ci)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        double* row = cols->row((Index(ci) * k + ky) * k + kx).data();
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h) continue;
          const double* src = xv + (Index(ci) * h + sy) * w;
          for (int xx = 0; xx < w; ++xx) {
            const int sx = xx + kx - pad;
            if (sx >= 0 && sx < w) row[Index(y) * w + xx] = src[sx];
          }
        }
      }

  Eigen::ArrayXd out(Index(o) * hw);
  Eigen::Map<RowMatrix> om(out.data(), o, hw);
  om.noalias() = Eigen::Map<const RowMatrix>(weight.value().data(), o, ckk) * (*cols);
  om.colwise() += Eigen::Map<const Eigen::VectorXd>(bias.value().data(), o);

  return make_result("conv2d", {o, h, w}, std::move(out), {&x, &weight, &bias},
                     [cols, c, h, w, o, k, pad, hw, ckk](Node& self) {
    Eigen::Map<const RowMatrix> g(self.grad.data(), o, hw);
    Node& px = *self.parents[0];
    Node& pw = *self.parents[1];
    Node& pb = *self.parents[2];
    if (Eigen::ArrayXd* gw = grad_of(pw))
      Eigen::Map<RowMatrix>(gw->data(), o, ckk).noalias() += g * cols->transpose();
    if (Eigen::ArrayXd* gb = grad_of(pb))
      Eigen::Map<Eigen::VectorXd>(gb->data(), o) += g.rowwise().sum();
    if (Eigen::ArrayXd* gx = grad_of(px)) {
      RowMatrix dcols = Eigen::Map<const RowMatrix>(pw.value.data(), o, ckk).transpose() * g;
      double* gxv = gx->data();
      for (int ci = 0; ci < c; ++ci)
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx) {
            const double* row = dcols.row((Index(ci) * k + ky) * k + kx).data();
            for (int y = 0; y < h; ++y) {
              const int sy = y + ky - pad;
              if (sy < 0 || sy >= h) continue;
              double* dst = gxv + (Index(ci) * h + sy) * w;
              for (int xx = 0; xx < w; ++xx) {
                const int sx = xx + kx - pad;
                if (sx >= 0 && sx < w) dst[sx] += row[Index(y) * w + xx];
              }
            }
          }
    }
  });
}

Tensor maxpool2x2(const Tensor& x) {
  require_rank(x, 3, "maxpool2x2");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int oh = h / 2, ow = w / 2;
  if (oh == 0 || ow == 0) throw ContractError("maxpool2x2: input too small " + to_string(x.shape()));
  Eigen::ArrayXd out(Index(c) * oh * ow);
  auto argmax = std::make_shared<std::vector<Index>>(out.size());
  const auto& v = x.value();
  for (int ci = 0; ci < c; ++ci)
    for (int y = 0; y < oh; ++y)
      for (int xx = 0; xx < ow; ++xx) {
        Index best = (Index(ci) * h + 2 * y) * w + 2 * xx;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const Index k = (Index(ci) * h + 2 * y + dy) * w + 2 * xx + dx;
            if (v[k] > v[best]) best = k;
          }
        const Index oi = (Index(ci) * oh + y) * ow + xx;
        out[oi] = v[best];
        (*argmax)[oi] = best;
      }
  return make_result("maxpool2x2", {c, oh, ow}, std::move(out), {&x}, [argmax](Node& self) {
    Eigen::ArrayXd* g = grad_of(*self.parents[0]);
    for (Index i = 0; i < self.grad.size(); ++i) (*g)[(*argmax)[i]] += self.grad[i];
  });
}

namespace {

struct Taps {
  std::vector<int> lo, hi;
  std::vector<double> frac;
};

Taps resize_taps(int in, int out) {
  Taps t;
  const double scale = static_cast<double>(in) / out;
  for (int i = 0; i < out; ++i) {
    const double src = std::max(0.0, (i + 0.5) * scale - 0.5);
    const int lo = std::min(static_cast<int>(std::floor(src)), in - 1);
    t.lo.push_back(lo);
    t.hi.push_back(std::min(lo + 1, in - 1));
    t.frac.push_back(src - lo);
  }
  return t;
}

}  // namespace

Tensor upsample_bilinear(const Tensor& x, int height, int width) {
  require_rank(x, 3, "upsample_bilinear");
  if (height <= 0 || width <= 0) throw ContractError("upsample_bilinear: empty target size");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  auto ty = std::make_shared<Taps>(resize_taps(h, height));
  auto tx = std::make_shared<Taps>(resize_taps(w, width));
  Eigen::ArrayXd out(Index(c) * height * width);
  const auto& v = x.value();
  for (int ci = 0; ci < c; ++ci)
    for (int y = 0; y < height; ++y) {
      const double fy = ty->frac[y];
      const Index r0 = (Index(ci) * h + ty->lo[y]) * w;
      const Index r1 = (Index(ci) * h + ty->hi[y]) * w;
      for (int xx = 0; xx < width; ++xx) {
        const double fx = tx->frac[xx];
        const int x0 = tx->lo[xx], x1 = tx->hi[xx];
        out[(Index(ci) * height + y) * width + xx] =
            (1 - fy) * ((1 - fx) * v[r0 + x0] + fx * v[r0 + x1]) + fy * ((1 - fx) * v[r1 + x0] + fx * v[r1 + x1]);
      }
    }
  return make_result("upsample_bilinear", {c, height, width}, std::move(out), {&x},
                     [ty, tx, c, h, w, height, width](Node& self) {
    Eigen::ArrayXd* g = grad_of(*self.parents[0]);
    for (int ci = 0; ci < c; ++ci)
      for (int y = 0; y < height; ++y) {
        const double fy = ty->frac[y];
        const Index r0 = (Index(ci) * h + ty->lo[y]) * w;
        const Index r1 = (Index(ci) * h + ty->hi[y]) * w;
        for (int xx = 0; xx < width; ++xx) {
          const double fx = tx->frac[xx];
          const int x0 = tx->lo[xx], x1 = tx->hi[xx];
          const double gv = self.grad[(Index(ci) * height + y) * width + xx];
          (*g)[r0 + x0] += gv * (1 - fy) * (1 - fx);
          (*g)[r0 + x1] += gv * (1 - fy) * fx;
          (*g)[r1 + x0] += gv * fy * (1 - fx);
          (*g)[r1 + x1] += gv * fy * fx;
        }
      }
  });
}

Tensor normalize_channels(const Tensor& x, double eps) {
  require_rank(x, 3, "normalize_channels");
  const int c = x.dim(0);
  const Index hw = Index(x.dim(1)) * x.dim(2);
  Eigen::Map<const RowMatrix> in(x.value().data(), c, hw);
  auto norms = std::make_shared<Eigen::RowVectorXd>((in.colwise().squaredNorm().array() + eps).sqrt());
  Eigen::ArrayXd out(x.numel());
  Eigen::Map<RowMatrix>(out.data(), c, hw) = in.array().rowwise() / norms->array();
  return make_result("normalize_channels", x.shape(), std::move(out), {&x}, [norms, c, hw](Node& self) {
    Eigen::ArrayXd* g = grad_of(*self.parents[0]);
    Eigen::Map<const RowMatrix> y(self.value.data(), c, hw);
    Eigen::Map<const RowMatrix> gy(self.grad.data(), c, hw);
    const Eigen::RowVectorXd dots = (y.array() * gy.array()).colwise().sum();
    Eigen::Map<RowMatrix>(g->data(), c, hw).array() +=
        (gy.array() - y.array().rowwise() * dots.array()).rowwise() / norms->array();
  });
}

Tensor sample_points(const Tensor& x, std::span<const Eigen::Vector2d> points) {
  require_rank(x, 3, "sample_points");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  struct Tap {
    Index offset;
    double weight;
  };
  auto taps = std::make_shared<std::vector<std::array<Tap, 4>>>();
  for (const auto& p : points) {
    const double fx0 = std::floor(p.x()), fy0 = std::floor(p.y());
    const double fx = p.x() - fx0, fy = p.y() - fy0;
    const int x0 = static_cast<int>(fx0), y0 = static_cast<int>(fy0);
    std::array<Tap, 4> t{};
    const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
    const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
    const double ws[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
    for (int i = 0; i < 4; ++i) {
      const bool inside = xs[i] >= 0 && ys[i] >= 0 && xs[i] < w && ys[i] < h;
      t[i] = inside ? Tap{Index(ys[i]) * w + xs[i], ws[i]} : Tap{0, 0.0};
    }
    taps->push_back(t);
  }
  const Index n = static_cast<Index>(points.size());
  const Index hw = Index(h) * w;
  Eigen::ArrayXd out = Eigen::ArrayXd::Zero(n * c);
  const auto& v = x.value();
  for (Index i = 0; i < n; ++i)
    for (int ci = 0; ci < c; ++ci)
      for (const Tap& t : (*taps)[i]) out[i * c + ci] += t.weight * v[ci * hw + t.offset];
  return make_result("sample_points", {static_cast<int>(n), c}, std::move(out), {&x}, [taps, c, hw, n](Node& self) {
    Eigen::ArrayXd* g = grad_of(*self.parents[0]);
    for (Index i = 0; i < n; ++i)
      for (int ci = 0; ci < c; ++ci)
        for (const Tap& t : (*taps)[i]) (*g)[ci * hw + t.offset] += t.weight * self.grad[i * c + ci];
  });
}

}  // namespace rkp::ad
