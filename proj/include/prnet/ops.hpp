#pragma once

#include "prnet/autograd.hpp"
#include "prnet/tensor.hpp"

// Reverse-mode tensor ops. Every op validates shapes/dtypes, checks the
// result for non-finite values, and (when the graph records and any input
// requires a gradient) appends a tape entry to g.
//
// Maps are laid out [H, W, C] row-major with channels innermost; the
// data-parallel inner loops run over the channel axis through the kernel
// dispatch tables.

namespace prnet::ops {

enum class EwiseKind { add, sub, mul };
enum class Reduction { sum, mean };

// Cross-correlation with odd square kernels. input [H,W,Cin], kernel
// [k,k,Cin,Cout], optional bias [Cout]; "same" output for padding=(k-1)/2.
Tensor conv2d(Graph& g, const Tensor& input, const Tensor& kernel, const Tensor& bias,
              std::int64_t padding);
Tensor conv2d(Graph& g, const Tensor& input, const Tensor& kernel, std::int64_t padding);

// Matrix product over the trailing axis, broadcast over leading axes.
// input [...,Din], weight [Din,Dout], optional bias [Dout].
Tensor linear(Graph& g, const Tensor& input, const Tensor& weight, const Tensor& bias);
Tensor linear(Graph& g, const Tensor& input, const Tensor& weight);

Tensor relu(Graph& g, const Tensor& x);    // gradient 0 at x == 0
Tensor sigmoid(Graph& g, const Tensor& x);

// Bin (i,j) covers rows [floor(i*H/out_h), ceil((i+1)*H/out_h)); gradient
// routes to the first argmax of the bin in row-major order.
Tensor adaptive_max_pool2d(Graph& g, const Tensor& input, std::int64_t out_h, std::int64_t out_w);

// [H,W,C] -> [C], mean over the spatial grid.
Tensor global_avg_pool(Graph& g, const Tensor& input);

// Elementwise with trailing-alignment broadcasting (extent-1 or missing
// leading axes stretch); gradients sum-reduce over broadcast axes.
Tensor ewise(Graph& g, EwiseKind kind, const Tensor& a, const Tensor& b);
Tensor add(Graph& g, const Tensor& a, const Tensor& b);
Tensor sub(Graph& g, const Tensor& a, const Tensor& b);
Tensor mul(Graph& g, const Tensor& a, const Tensor& b);

Tensor concat(Graph& g, const Tensor& a, const Tensor& b, std::int64_t axis);
Tensor reshape(Graph& g, const Tensor& x, Shape new_shape);
Tensor permute(Graph& g, const Tensor& x, std::vector<std::int64_t> axes);

// sum(|pred - target|), optionally divided by the element count. Subgradient
// of |.| is 0 at equality.
Tensor l1_loss(Graph& g, const Tensor& pred, const Tensor& target, Reduction reduction);

Tensor sum(Graph& g, const Tensor& x);

Reduction reduction_from_name(const std::string& name);
const char* reduction_name(Reduction r);

// Exposed for the property tests.
Shape broadcast_shape(const Shape& a, const Shape& b);

}  // namespace prnet::ops
