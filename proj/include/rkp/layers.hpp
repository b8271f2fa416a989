#pragma once

#include <string>

#include "rkp/params.hpp"
#include "rkp/tensor.hpp"

namespace rkp::ad {

// Layer parameters live in a ParameterStore under "<name>.weight" / "<name>.bias".
// add_* registers them; the matching free function applies the layer.

/// Weight [in, out] with uniform(+-1/sqrt(in)) init, bias [out].
void add_linear(ParameterStore& ps, const std::string& name, int in, int out);
/// x [N, in] -> [N, out].
Tensor linear(const ParameterStore& ps, const std::string& name, const Tensor& x);

/// Weight [out, in, k, k] with He-uniform init, bias [out].
void add_conv(ParameterStore& ps, const std::string& name, int in, int out, int kernel = 3);
Tensor conv(const ParameterStore& ps, const std::string& name, const Tensor& x);

/// softmax(q k^T / sqrt(d)) v for a single head; q [N, d], k and v [M, d].
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v);

/// Query/key/value/output projections of width `dim`.
void add_multi_head_attention(ParameterStore& ps, const std::string& name, int dim);
/// Heads attend independently over `dim / heads` slices, are concatenated, then mixed by the
/// output projection. queries [N, dim], sources [M, dim].
Tensor multi_head_attention(const ParameterStore& ps, const std::string& name, const Tensor& queries,
                            const Tensor& sources, int heads);

}  // namespace rkp::ad
