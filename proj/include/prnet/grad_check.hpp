#pragma once

#include <functional>

#include "prnet/autograd.hpp"
#include "prnet/tensor.hpp"

namespace prnet {

// Compares the analytic gradient of f w.r.t. x against central finite
// differences and returns the worst relative error
//
//   max_i |analytic_i - (f(x+eps e_i) - f(x-eps e_i)) / (2 eps)| / max(1, |analytic_i|).
//
// f receives a graph and must return a scalar built from x (and any other
// tensors it closes over). x must be f64 — at f32 the difference quotient
// drowns in rounding before it says anything. x is perturbed in place and
// restored; its gradient buffer is zeroed before the analytic pass.
double grad_check(const std::function<Tensor(Graph&)>& f, Tensor x, double eps);

}  // namespace prnet
