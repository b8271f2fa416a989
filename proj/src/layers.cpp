#include "rkp/layers.hpp"

#include <cmath>

#include "rkp/error.hpp"

namespace rkp::ad {

void add_linear(ParameterStore& ps, const std::string& name, int in, int out) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  ps.create(name + ".weight", {in, out}, Init::uniform(bound));
  ps.create(name + ".bias", {1, out}, Init::zeros());
}

Tensor linear(const ParameterStore& ps, const std::string& name, const Tensor& x) {
  return matmul(x, ps.at(name + ".weight")) + ps.at(name + ".bias");
}

void add_conv(ParameterStore& ps, const std::string& name, int in, int out, int kernel) {
  const double fan_in = static_cast<double>(in) * kernel * kernel;
  ps.create(name + ".weight", {out, in, kernel, kernel}, Init::uniform(std::sqrt(6.0 / fan_in)));
  ps.create(name + ".bias", {out}, Init::zeros());
}

Tensor conv(const ParameterStore& ps, const std::string& name, const Tensor& x) {
  return conv2d(x, ps.at(name + ".weight"), ps.at(name + ".bias"));
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.dim(1) != k.dim(1) || k.dim(0) != v.dim(0))
    throw ContractError("attention: q " + to_string(q.shape()) + ", k " + to_string(k.shape()) + ", v " +
                        to_string(v.shape()));
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.dim(1)));
  return matmul(softmax(matmul(q, transpose(k)) * scale), v);
}

void add_multi_head_attention(ParameterStore& ps, const std::string& name, int dim) {
  add_linear(ps, name + ".query", dim, dim);
  add_linear(ps, name + ".key", dim, dim);
  add_linear(ps, name + ".value", dim, dim);
  add_linear(ps, name + ".out", dim, dim);
}

Tensor multi_head_attention(const ParameterStore& ps, const std::string& name, const Tensor& queries,
                            const Tensor& sources, int heads) {
  const int dim = queries.dim(1);
  if (heads <= 0 || dim % heads != 0)
    throw ContractError("multi_head_attention: width " + std::to_string(dim) + " not divisible by " +
                        std::to_string(heads) + " heads");
  if (sources.dim(1) != dim)
    throw ContractError("multi_head_attention: queries " + to_string(queries.shape()) + " vs sources " +
                        to_string(sources.shape()));
  const Tensor q = linear(ps, name + ".query", queries);
  const Tensor k = linear(ps, name + ".key", sources);
  const Tensor v = linear(ps, name + ".value", sources);
  const int head_dim = dim / heads;
  std::vector<Tensor> outs;
  outs.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    outs.push_back(attention(slice(q, 1, h * head_dim, head_dim), slice(k, 1, h * head_dim, head_dim),
                             slice(v, 1, h * head_dim, head_dim)));
  }
  return linear(ps, name + ".out", heads == 1 ? outs[0] : concat(outs, 1));
}

}  // namespace rkp::ad
