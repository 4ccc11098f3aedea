#include "prnet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

#include "prnet/kernels.hpp"

namespace prnet::ops {

namespace {

bool wants_grad(const Graph& g, std::initializer_list<const Tensor*> inputs) {
    if (!g.recording()) return false;
    for (const Tensor* t : inputs) {
        if (t->defined() && t->requires_grad()) return true;
    }
    return false;
}

void require_same_dtype(const char* op, const Tensor& a, const Tensor& b) {
    if (a.dtype() != b.dtype()) {
        throw std::invalid_argument(std::string(op) + ": dtype mismatch (" +
                                    dtype_name(a.dtype()) + " vs " + dtype_name(b.dtype()) + ")");
    }
}

std::int64_t axis_extent(const Shape& s, std::size_t trailing_pos) {
    return trailing_pos < s.size() ? s[s.size() - 1 - trailing_pos] : 1;
}

// Length of the contiguous trailing block that x contributes when broadcast
// to out, or -1 if x is not a pure suffix-repeat of out. All axes of x above
// the matching suffix must have extent 1 (so x's data is exactly one block).
std::int64_t suffix_chunk(const Shape& x, const Shape& out) {
    std::int64_t chunk = 1;
    std::size_t i = 0;
    for (; i < x.size(); ++i) {
        const std::int64_t ex = axis_extent(x, i);
        if (ex != axis_extent(out, i)) break;
        chunk *= ex;
    }
    for (; i < x.size(); ++i) {
        if (axis_extent(x, i) != 1) return -1;
    }
    return chunk;
}

// Strides of x against each axis of out (0 where x broadcasts).
std::vector<std::int64_t> broadcast_strides(const Shape& x, const Shape& out) {
    std::vector<std::int64_t> st(out.size(), 0);
    std::int64_t stride = 1;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const std::size_t ax = x.size() - 1 - i;
        const std::size_t ao = out.size() - 1 - i;
        st[ao] = (x[ax] == 1 && out[ao] != 1) ? 0 : stride;
        stride *= x[ax];
    }
    return st;
}

// Row-major odometer over `shape`, advancing two strided offsets in step.
// fn(flat, off_a, off_b) is called once per element.
template <typename Fn>
void for_each_broadcast(const Shape& shape, const std::vector<std::int64_t>& stride_a,
                        const std::vector<std::int64_t>& stride_b, Fn&& fn) {
    const std::int64_t n = shape_numel(shape);
    const std::size_t rank = shape.size();
    std::vector<std::int64_t> idx(rank, 0);
    std::int64_t off_a = 0;
    std::int64_t off_b = 0;
    for (std::int64_t flat = 0; flat < n; ++flat) {
        fn(flat, off_a, off_b);
        for (std::size_t d = rank; d-- > 0;) {
            ++idx[d];
            off_a += stride_a[d];
            off_b += stride_b[d];
            if (idx[d] < shape[d]) break;
            off_a -= stride_a[d] * shape[d];
            off_b -= stride_b[d] * shape[d];
            idx[d] = 0;
        }
    }
}

template <typename T>
T sign_of(T d) {
    return static_cast<T>((d > T(0)) - (d < T(0)));
}

}  // namespace

// ---------------------------------------------------------------------------
// conv2d

Tensor conv2d(Graph& g, const Tensor& input, const Tensor& kernel, const Tensor& bias,
              std::int64_t padding) {
    if (input.ndim() != 3) {
        throw std::invalid_argument("conv2d: input must be rank 3 [H,W,C], got " +
                                    shape_str(input.shape()));
    }
    if (kernel.ndim() != 4) {
        throw std::invalid_argument("conv2d: kernel must be rank 4 [k,k,Cin,Cout], got " +
                                    shape_str(kernel.shape()));
    }
    const std::int64_t h = input.shape()[0];
    const std::int64_t w = input.shape()[1];
    const std::int64_t c_in = input.shape()[2];
    const std::int64_t k = kernel.shape()[0];
    const std::int64_t c_out = kernel.shape()[3];
    if (kernel.shape()[1] != k) {
        throw std::invalid_argument("conv2d: kernel must be square, got " +
                                    shape_str(kernel.shape()));
    }
    if (k % 2 == 0) {
        throw std::invalid_argument("conv2d: kernel size must be odd, got " + std::to_string(k));
    }
    if (kernel.shape()[2] != c_in) {
        throw std::invalid_argument("conv2d: channel mismatch: input has " + std::to_string(c_in) +
                                    ", kernel expects " + std::to_string(kernel.shape()[2]));
    }
    require_same_dtype("conv2d", input, kernel);
    const bool has_bias = bias.defined();
    if (has_bias) {
        if (bias.ndim() != 1 || bias.shape()[0] != c_out) {
            throw std::invalid_argument("conv2d: bias must be [Cout]=[" + std::to_string(c_out) +
                                        "], got " + shape_str(bias.shape()));
        }
        require_same_dtype("conv2d", input, bias);
    }
    if (padding < 0) {
        throw std::invalid_argument("conv2d: padding must be >= 0, got " + std::to_string(padding));
    }
    const std::int64_t h_out = h + 2 * padding - k + 1;
    const std::int64_t w_out = w + 2 * padding - k + 1;
    if (h_out < 1 || w_out < 1) {
        throw std::invalid_argument("conv2d: kernel size " + std::to_string(k) +
                                    " with padding " + std::to_string(padding) +
                                    " exceeds input " + shape_str(input.shape()));
    }

    const bool needs = wants_grad(g, {&input, &kernel, &bias});
    Tensor out = make_op_output({h_out, w_out, c_out}, input.dtype(), needs);

    dispatch_dtype(input.dtype(), [&](auto tag) {
        using T = typename decltype(tag)::type;
        const auto& K = kernels::table<T>();
        const T* in = input.data<T>();
        const T* ker = kernel.data<T>();
        const T* b = has_bias ? bias.data<T>() : nullptr;
        T* o = out.data<T>();
        for (std::int64_t oh = 0; oh < h_out; ++oh) {
            for (std::int64_t ow = 0; ow < w_out; ++ow) {
                T* orow = o + (oh * w_out + ow) * c_out;
                if (has_bias) std::memcpy(orow, b, static_cast<std::size_t>(c_out) * sizeof(T));
                for (std::int64_t kh = 0; kh < k; ++kh) {
                    const std::int64_t ih = oh + kh - padding;
                    if (ih < 0 || ih >= h) continue;
                    for (std::int64_t kw = 0; kw < k; ++kw) {
                        const std::int64_t iw = ow + kw - padding;
                        if (iw < 0 || iw >= w) continue;
                        K.madd_rows(orow, in + (ih * w + iw) * c_in,
                                    ker + (kh * k + kw) * c_in * c_out,
                                    static_cast<std::size_t>(c_in),
                                    static_cast<std::size_t>(c_out));
                    }
                }
            }
        }
    });
    check_finite(out, "conv2d");

    if (needs) {
        g.record(out, [input, kernel, bias, out, padding, h, w, c_in, k, c_out, h_out, w_out,
                       has_bias] {
            dispatch_dtype(input.dtype(), [&](auto tag) {
                using T = typename decltype(tag)::type;
                const auto& K = kernels::table<T>();
                const T* gout = out.node()->grad_as<T>();
                const T* in = input.data<T>();
                const T* ker = kernel.data<T>();
                if (input.requires_grad()) {
                    input.node()->ensure_grad();
                    T* gin = input.node()->grad_as<T>();
                    // [k,k,Cout,Cin] transpose of the kernel so the input
                    // gradient is again row-times-matrix accumulation.
                    std::vector<T> ker_t(static_cast<std::size_t>(k * k * c_in * c_out));
                    for (std::int64_t kh = 0; kh < k; ++kh)
                        for (std::int64_t kw = 0; kw < k; ++kw)
                            for (std::int64_t ci = 0; ci < c_in; ++ci)
                                for (std::int64_t co = 0; co < c_out; ++co)
                                    ker_t[((kh * k + kw) * c_out + co) * c_in + ci] =
                                        ker[((kh * k + kw) * c_in + ci) * c_out + co];
                    for (std::int64_t oh = 0; oh < h_out; ++oh) {
                        for (std::int64_t ow = 0; ow < w_out; ++ow) {
                            const T* grow = gout + (oh * w_out + ow) * c_out;
                            for (std::int64_t kh = 0; kh < k; ++kh) {
                                const std::int64_t ih = oh + kh - padding;
                                if (ih < 0 || ih >= h) continue;
                                for (std::int64_t kw = 0; kw < k; ++kw) {
                                    const std::int64_t iw = ow + kw - padding;
                                    if (iw < 0 || iw >= w) continue;
                                    K.madd_rows(gin + (ih * w + iw) * c_in, grow,
                                                ker_t.data() + (kh * k + kw) * c_out * c_in,
                                                static_cast<std::size_t>(c_out),
                                                static_cast<std::size_t>(c_in));
                                }
                            }
                        }
                    }
                }
                if (kernel.requires_grad()) {
                    kernel.node()->ensure_grad();
                    T* gker = kernel.node()->grad_as<T>();
                    for (std::int64_t oh = 0; oh < h_out; ++oh) {
                        for (std::int64_t ow = 0; ow < w_out; ++ow) {
                            const T* grow = gout + (oh * w_out + ow) * c_out;
                            for (std::int64_t kh = 0; kh < k; ++kh) {
                                const std::int64_t ih = oh + kh - padding;
                                if (ih < 0 || ih >= h) continue;
                                for (std::int64_t kw = 0; kw < k; ++kw) {
                                    const std::int64_t iw = ow + kw - padding;
                                    if (iw < 0 || iw >= w) continue;
                                    K.ger_accum(gker + (kh * k + kw) * c_in * c_out,
                                                in + (ih * w + iw) * c_in, grow,
                                                static_cast<std::size_t>(c_in),
                                                static_cast<std::size_t>(c_out));
                                }
                            }
                        }
                    }
                }
                if (has_bias && bias.requires_grad()) {
                    bias.node()->ensure_grad();
                    T* gb = bias.node()->grad_as<T>();
                    for (std::int64_t cell = 0; cell < h_out * w_out; ++cell) {
                        K.add_inplace(gb, gout + cell * c_out, static_cast<std::size_t>(c_out));
                    }
                }
            });
        });
    }
    return out;
}

Tensor conv2d(Graph& g, const Tensor& input, const Tensor& kernel, std::int64_t padding) {
    return conv2d(g, input, kernel, Tensor(), padding);
}

// ---------------------------------------------------------------------------
// linear

Tensor linear(Graph& g, const Tensor& input, const Tensor& weight, const Tensor& bias) {
    if (input.ndim() < 1) {
        throw std::invalid_argument("linear: input must have at least one axis");
    }
    if (weight.ndim() != 2) {
        throw std::invalid_argument("linear: weight must be rank 2 [Din,Dout], got " +
                                    shape_str(weight.shape()));
    }
    const std::int64_t d_in = weight.shape()[0];
    const std::int64_t d_out = weight.shape()[1];
    if (input.shape().back() != d_in) {
        throw std::invalid_argument("linear: input trailing axis " +
                                    std::to_string(input.shape().back()) +
                                    " != weight rows " + std::to_string(d_in));
    }
    require_same_dtype("linear", input, weight);
    const bool has_bias = bias.defined();
    if (has_bias) {
        if (bias.ndim() != 1 || bias.shape()[0] != d_out) {
            throw std::invalid_argument("linear: bias must be [Dout]=[" + std::to_string(d_out) +
                                        "], got " + shape_str(bias.shape()));
        }
        require_same_dtype("linear", input, bias);
    }

    Shape out_shape = input.shape();
    out_shape.back() = d_out;
    const std::int64_t rows = input.size() / d_in;
    const bool needs = wants_grad(g, {&input, &weight, &bias});
    Tensor out = make_op_output(out_shape, input.dtype(), needs);

    dispatch_dtype(input.dtype(), [&](auto tag) {
        using T = typename decltype(tag)::type;
        const auto& K = kernels::table<T>();
        const T* in = input.data<T>();
        const T* wgt = weight.data<T>();
        const T* b = has_bias ? bias.data<T>() : nullptr;
        T* o = out.data<T>();
        for (std::int64_t r = 0; r < rows; ++r) {
            T* orow = o + r * d_out;
            if (has_bias) std::memcpy(orow, b, static_cast<std::size_t>(d_out) * sizeof(T));
            K.madd_rows(orow, in + r * d_in, wgt, static_cast<std::size_t>(d_in),
                        static_cast<std::size_t>(d_out));
        }
    });
    check_finite(out, "linear");

    if (needs) {
        g.record(out, [input, weight, bias, out, rows, d_in, d_out, has_bias] {
            dispatch_dtype(input.dtype(), [&](auto tag) {
                using T = typename decltype(tag)::type;
                const auto& K = kernels::table<T>();
                const T* gout = out.node()->grad_as<T>();
                if (input.requires_grad()) {
                    input.node()->ensure_grad();
                    T* gin = input.node()->grad_as<T>();
                    const T* wgt = weight.data<T>();
                    std::vector<T> w_t(static_cast<std::size_t>(d_in * d_out));
                    for (std::int64_t i = 0; i < d_in; ++i)
                        for (std::int64_t j = 0; j < d_out; ++j)
                            w_t[j * d_in + i] = wgt[i * d_out + j];
                    for (std::int64_t r = 0; r < rows; ++r) {
                        K.madd_rows(gin + r * d_in, gout + r * d_out, w_t.data(),
                                    static_cast<std::size_t>(d_out),
                                    static_cast<std::size_t>(d_in));
                    }
                }
                if (weight.requires_grad()) {
                    weight.node()->ensure_grad();
                    T* gw = weight.node()->grad_as<T>();
                    const T* in = input.data<T>();
                    for (std::int64_t r = 0; r < rows; ++r) {
                        K.ger_accum(gw, in + r * d_in, gout + r * d_out,
                                    static_cast<std::size_t>(d_in),
                                    static_cast<std::size_t>(d_out));
                    }
                }
                if (has_bias && bias.requires_grad()) {
                    bias.node()->ensure_grad();
                    T* gb = bias.node()->grad_as<T>();
                    for (std::int64_t r = 0; r < rows; ++r) {
                        K.add_inplace(gb, gout + r * d_out, static_cast<std::size_t>(d_out));
                    }
                }
            });
        });
    }
    return out;
}

Tensor linear(Graph& g, const Tensor& input, const Tensor& weight) {
    return linear(g, input, weight, Tensor());
}

// ---------------------------------------------------------------------------
// relu / sigmoid

Tensor relu(Graph& g, const Tensor& x) {
    const bool needs = wants_grad(g, {&x});
    Tensor out = make_op_output(x.shape(), x.dtype(), needs);
    const std::size_t n = static_cast<std::size_t>(x.size());
    dispatch_dtype(x.dtype(), [&](auto tag) {
        using T = typename decltype(tag)::type;
        kernels::table<T>().relu(x.data<T>(), out.data<T>(), n);
    });
    check_finite(out, "relu");
    if (needs) {
        g.record(out, [x, out, n] {
            dispatch_dtype(x.dtype(), [&](auto tag) {
                using T = typename decltype(tag)::type;
                x.node()->ensure_grad();
                kernels::table<T>().relu_grad_accum(x.data<T>(), out.node()->grad_as<T>(),
                                                    x.node()->grad_as<T>(), n);
            });
        });
    }
    return out;
}

Tensor sigmoid(Graph& g, const Tensor& x) {
    const bool needs = wants_grad(g, {&x});
    Tensor out = make_op_output(x.shape(), x.dtype(), needs);
    const std::int64_t n = x.size();
    dispatch_dtype(x.dtype(), [&](auto tag) {
        using T = typename decltype(tag)::type;
        const T* in = x.data<T>();
        T* o = out.data<T>();
        for (std::int64_t i = 0; i < n; ++i) {
            const T v = in[i];
            // Split form keeps exp() arguments non-positive, so no overflow.
            if (v >= T(0)) {
                o[i] = T(1) / (T(1) + std::exp(-v));
            } else {
                const T e = std::exp(v);
                o[i] = e / (T(1) + e);
            }
        }
    });
    check_finite(out, "sigmoid");
    if (needs) {
        g.record(out, [x, out, n] {
            dispatch_dtype(x.dtype(), [&](auto tag) {
                using T = typename decltype(tag)::type;
                x.node()->ensure_grad();
                const T* s = out.data<T>();
                const T* gout = out.node()->grad_as<T>();
                T* gin = x.node()->grad_as<T>();
                for (std::int64_t i = 0; i < n; ++i) {
                    gin[i] += gout[i] * s[i] * (T(1) - s[i]);
                }
            });
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// pooling

Tensor adaptive_max_pool2d(Graph& g, const Tensor& input, std::int64_t out_h, std::int64_t out_w) {
    if (input.ndim() != 3) {
        throw std::invalid_argument("adaptive_max_pool2d: input must be rank 3 [H,W,C], got " +
                                    shape_str(input.shape()));
    }
    const std::int64_t h = input.shape()[0];
    const std::int64_t w = input.shape()[1];
    const std::int64_t c = input.shape()[2];
    if (out_h < 1 || out_h > h || out_w < 1 || out_w > w) {
        throw std::invalid_argument("adaptive_max_pool2d: output " + std::to_string(out_h) + "x" +
                                    std::to_string(out_w) + " not within input " +
                                    std::to_string(h) + "x" + std::to_string(w));
    }
    const bool needs = wants_grad(g, {&input});
    Tensor out = make_op_output({out_h, out_w, c}, input.dtype(), needs);

    const auto row_lo = [h, out_h](std::int64_t i) { return (i * h) / out_h; };
    const auto row_hi = [h, out_h](std::int64_t i) { return ((i + 1) * h + out_h - 1) / out_h; };
    const auto col_lo = [w, out_w](std::int64_t j) { return (j * w) / out_w; };
    const auto col_hi = [w, out_w](std::int64_t j) { return ((j + 1) * w + out_w - 1) / out_w; };

    dispatch_dtype(input.dtype(), [&](auto tag) {
        using T = typename decltype(tag)::type;
        const auto& K = kernels::table<T>();
        const T* in = input.data<T>();
        T* o = out.data<T>();
        for (std::int64_t i = 0; i < out_h; ++i) {
            for (std::int64_t j = 0; j < out_w; ++j) {
                T* orow = o + (i * out_w + j) * c;
                bool first = true;
                for (std::int64_t r = row_lo(i); r < row_hi(i); ++r) {
                    for (std::int64_t cc = col_lo(j); cc < col_hi(j); ++cc) {
                        const T* cell = in + (r * w + cc) * c;
                        if (first) {
                            std::memcpy(orow, cell, static_cast<std::size_t>(c) * sizeof(T));
                            first = false;
                        } else {
                            K.max_inplace(orow, cell, static_cast<std::size_t>(c));
                        }
                    }
                }
            }
        }
    });
    check_finite(out, "adaptive_max_pool2d");

    if (needs) {
        g.record(out, [input, out, out_h, out_w, w, c, row_lo, row_hi, col_lo, col_hi] {
            dispatch_dtype(input.dtype(), [&](auto tag) {
                using T = typename decltype(tag)::type;
                input.node()->ensure_grad();
                const T* in = input.data<T>();
                const T* gout = out.node()->grad_as<T>();
                T* gin = input.node()->grad_as<T>();
                for (std::int64_t i = 0; i < out_h; ++i) {
                    for (std::int64_t j = 0; j < out_w; ++j) {
                        const T* grow = gout + (i * out_w + j) * c;
                        for (std::int64_t ch = 0; ch < c; ++ch) {
                            // First row-major argmax of the bin receives the
                            // whole gradient; ties never split it.
                            std::int64_t best = -1;
                            T best_v = T(0);
                            for (std::int64_t r = row_lo(i); r < row_hi(i); ++r) {
                                for (std::int64_t cc = col_lo(j); cc < col_hi(j); ++cc) {
                                    const std::int64_t at = (r * w + cc) * c + ch;
                                    if (best < 0 || in[at] > best_v) {
                                        best = at;
                                        best_v = in[at];
                                    }
                                }
                            }
                            gin[best] += grow[ch];
                        }
                    }
                }
            });
        });
    }
    return out;
}

Tensor global_avg_pool(Graph& g, const Tensor& input) {
    if (input.ndim() != 3) {
        throw std::invalid_argument("global_avg_pool: input must be rank 3 [H,W,C], got " +
                                    shape_str(input.shape()));
    }
    const std::int64_t cells = input.shape()[0] * input.shape()[1];
    const std::int64_t c = input.shape()[2];
    const bool needs = wants_grad(g, {&input});
    Tensor out = make_op_output({c}, input.dtype(), needs);

    dispatch_dtype(input.dtype(), [&](auto tag) {
        using T = typename decltype(tag)::type;
        const auto& K = kernels::table<T>();
        const T* in = input.data<T>();
        T* o = out.data<T>();
        for (std::int64_t cell = 0; cell < cells; ++cell) {
            K.add_inplace(o, in + cell * c, static_cast<std::size_t>(c));
        }
        K.scale_inplace(o, static_cast<T>(1.0 / static_cast<double>(cells)),
                        static_cast<std::size_t>(c));
    });
    check_finite(out, "global_avg_pool");

    if (needs) {
        g.record(out, [input, out, cells, c] {
            dispatch_dtype(input.dtype(), [&](auto tag) {
                using T = typename decltype(tag)::type;
                const auto& K = kernels::table<T>();
                input.node()->ensure_grad();
                const T* gout = out.node()->grad_as<T>();
                T* gin = input.node()->grad_as<T>();
                const T s = static_cast<T>(1.0 / static_cast<double>(cells));
                for (std::int64_t cell = 0; cell < cells; ++cell) {
                    K.axpy(s, gout, gin + cell * c, static_cast<std::size_t>(c));
                }
            });
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// elementwise with broadcasting

Shape broadcast_shape(const Shape& a, const Shape& b) {
    const std::size_t rank = std::max(a.size(), b.size());
    Shape out(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        const std::int64_t ea = axis_extent(a, i);
        const std::int64_t eb = axis_extent(b, i);
        std::int64_t e;
        if (ea == eb || eb == 1) {
            e = ea;
        } else if (ea == 1) {
            e = eb;
        } else {
            throw std::invalid_argument("broadcast: incompatible shapes " + shape_str(a) +
                                        " and " + shape_str(b));
        }
        out[rank - 1 - i] = e;
    }
    return out;
}

namespace {

const char* ewise_name(EwiseKind kind) {
    switch (kind) {
        case EwiseKind::add: return "add";
        case EwiseKind::sub: return "sub";
        case EwiseKind::mul: return "mul";
    }
    return "?";
}

// Forward where `full` matches the output shape and `small` repeats as
// contiguous blocks of `chunk` elements. small_is_b says which operand the
// block came from (sub is not commutative).
template <typename T>
void ewise_chunked_forward(EwiseKind kind, const T* full, const T* small, T* o, std::int64_t n,
                           std::int64_t chunk, bool small_is_b) {
    const auto& K = kernels::table<T>();
    const std::size_t cn = static_cast<std::size_t>(chunk);
    for (std::int64_t off = 0; off < n; off += chunk) {
        const T* a = small_is_b ? full + off : small;
        const T* b = small_is_b ? small : full + off;
        switch (kind) {
            case EwiseKind::add: K.add(a, b, o + off, cn); break;
            case EwiseKind::sub: K.sub(a, b, o + off, cn); break;
            case EwiseKind::mul: K.mul(a, b, o + off, cn); break;
        }
    }
}

template <typename T>
void ewise_chunked_backward(EwiseKind kind, const Tensor& full, const Tensor& small,
                            const T* gout, std::int64_t n, std::int64_t chunk, bool small_is_b) {
    const auto& K = kernels::table<T>();
    const std::size_t cn = static_cast<std::size_t>(chunk);
    const T full_sign = T(1);
    const T small_sign = (kind == EwiseKind::sub && small_is_b) ? T(-1) : T(1);
    // For sub with the small operand on the left (a - b, a small), the full
    // operand is b and carries the -1.
    const T full_factor = (kind == EwiseKind::sub && !small_is_b) ? T(-1) : full_sign;
    std::vector<T> scratch;
    if (full.requires_grad()) {
        full.node()->ensure_grad();
        T* gf = full.node()->grad_as<T>();
        if (kind == EwiseKind::mul) {
            scratch.resize(cn);
            const T* sm = small.data<T>();
            for (std::int64_t off = 0; off < n; off += chunk) {
                K.mul(gout + off, sm, scratch.data(), cn);
                K.add_inplace(gf + off, scratch.data(), cn);
            }
        } else if (full_factor == T(1)) {
            K.add_inplace(gf, gout, static_cast<std::size_t>(n));
        } else {
            K.axpy(T(-1), gout, gf, static_cast<std::size_t>(n));
        }
    }
    if (small.requires_grad()) {
        small.node()->ensure_grad();
        T* gs = small.node()->grad_as<T>();
        if (kind == EwiseKind::mul) {
            scratch.resize(cn);
            const T* fl = full.data<T>();
            for (std::int64_t off = 0; off < n; off += chunk) {
                K.mul(gout + off, fl + off, scratch.data(), cn);
                K.add_inplace(gs, scratch.data(), cn);
            }
        } else if (small_sign == T(1)) {
            for (std::int64_t off = 0; off < n; off += chunk) {
                K.add_inplace(gs, gout + off, cn);
            }
        } else {
            for (std::int64_t off = 0; off < n; off += chunk) {
                K.axpy(T(-1), gout + off, gs, cn);
            }
        }
    }
}

}  // namespace

Tensor ewise(Graph& g, EwiseKind kind, const Tensor& a, const Tensor& b) {
    require_same_dtype(ewise_name(kind), a, b);
    const Shape out_shape = broadcast_shape(a.shape(), b.shape());
    const bool needs = wants_grad(g, {&a, &b});
    Tensor out = make_op_output(out_shape, a.dtype(), needs);
    const std::int64_t n = out.size();

    const bool a_full = a.shape() == out_shape;
    const bool b_full = b.shape() == out_shape;
    const std::int64_t chunk_b = suffix_chunk(b.shape(), out_shape);
    const std::int64_t chunk_a = suffix_chunk(a.shape(), out_shape);
    // Same-shape inputs take the chunked path with a single full-length block.
    const bool b_repeats = a_full && chunk_b > 0;
    const bool a_repeats = !b_repeats && b_full && chunk_a > 0;

    dispatch_dtype(a.dtype(), [&](auto tag) {
        using T = typename decltype(tag)::type;
        const T* pa = a.data<T>();
        const T* pb = b.data<T>();
        T* o = out.data<T>();
        if (b_repeats) {
            ewise_chunked_forward<T>(kind, pa, pb, o, n, chunk_b, true);
        } else if (a_repeats) {
            ewise_chunked_forward<T>(kind, pb, pa, o, n, chunk_a, false);
        } else {
            const auto sa = broadcast_strides(a.shape(), out_shape);
            const auto sb = broadcast_strides(b.shape(), out_shape);
            for_each_broadcast(out_shape, sa, sb, [&](std::int64_t flat, std::int64_t oa,
                                                      std::int64_t ob) {
                switch (kind) {
                    case EwiseKind::add: o[flat] = pa[oa] + pb[ob]; break;
                    case EwiseKind::sub: o[flat] = pa[oa] - pb[ob]; break;
                    case EwiseKind::mul: o[flat] = pa[oa] * pb[ob]; break;
                }
            });
        }
    });
    check_finite(out, ewise_name(kind));

    if (needs) {
        g.record(out, [kind, a, b, out, out_shape, n, b_repeats, a_repeats, chunk_a, chunk_b] {
            dispatch_dtype(a.dtype(), [&](auto tag) {
                using T = typename decltype(tag)::type;
                const T* gout = out.node()->grad_as<T>();
                if (b_repeats) {
                    ewise_chunked_backward<T>(kind, a, b, gout, n, chunk_b, true);
                } else if (a_repeats) {
                    ewise_chunked_backward<T>(kind, b, a, gout, n, chunk_a, false);
                } else {
                    const auto sa = broadcast_strides(a.shape(), out_shape);
                    const auto sb = broadcast_strides(b.shape(), out_shape);
                    const bool ga_on = a.requires_grad();
                    const bool gb_on = b.requires_grad();
                    if (ga_on) a.node()->ensure_grad();
                    if (gb_on) b.node()->ensure_grad();
                    T* ga = ga_on ? a.node()->grad_as<T>() : nullptr;
                    T* gb = gb_on ? b.node()->grad_as<T>() : nullptr;
                    const T* pa = a.data<T>();
                    const T* pb = b.data<T>();
                    for_each_broadcast(out_shape, sa, sb, [&](std::int64_t flat, std::int64_t oa,
                                                              std::int64_t ob) {
                        const T go = gout[flat];
                        switch (kind) {
                            case EwiseKind::add:
                                if (ga_on) ga[oa] += go;
                                if (gb_on) gb[ob] += go;
                                break;
                            case EwiseKind::sub:
                                if (ga_on) ga[oa] += go;
                                if (gb_on) gb[ob] -= go;
                                break;
                            case EwiseKind::mul:
                                if (ga_on) ga[oa] += go * pb[ob];
                                if (gb_on) gb[ob] += go * pa[oa];
                                break;
                        }
                    });
                }
            });
        });
    }
    return out;
}

Tensor add(Graph& g, const Tensor& a, const Tensor& b) { return ewise(g, EwiseKind::add, a, b); }
Tensor sub(Graph& g, const Tensor& a, const Tensor& b) { return ewise(g, EwiseKind::sub, a, b); }
Tensor mul(Graph& g, const Tensor& a, const Tensor& b) { return ewise(g, EwiseKind::mul, a, b); }

// ---------------------------------------------------------------------------
// concat / reshape / permute

Tensor concat(Graph& g, const Tensor& a, const Tensor& b, std::int64_t axis) {
    require_same_dtype("concat", a, b);
    if (a.ndim() != b.ndim()) {
        throw std::invalid_argument("concat: rank mismatch: " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
    }
    const std::int64_t rank = static_cast<std::int64_t>(a.ndim());
    if (axis < 0 || axis >= rank) {
        throw std::invalid_argument("concat: axis " + std::to_string(axis) +
                                    " out of range for rank " + std::to_string(rank));
    }
    for (std::int64_t d = 0; d < rank; ++d) {
        if (d != axis && a.shape()[d] != b.shape()[d]) {
            throw std::invalid_argument("concat: shapes " + shape_str(a.shape()) + " and " +
                                        shape_str(b.shape()) + " differ outside axis " +
                                        std::to_string(axis));
        }
    }
    Shape out_shape = a.shape();
    out_shape[axis] += b.shape()[axis];

    std::int64_t outer = 1;
    for (std::int64_t d = 0; d < axis; ++d) outer *= out_shape[d];
    std::int64_t inner = 1;
    for (std::int64_t d = axis + 1; d < rank; ++d) inner *= out_shape[d];
    const std::int64_t a_block = a.shape()[axis] * inner;
    const std::int64_t b_block = b.shape()[axis] * inner;

    const bool needs = wants_grad(g, {&a, &b});
    Tensor out = make_op_output(out_shape, a.dtype(), needs);

    dispatch_dtype(a.dtype(), [&](auto tag) {
        using T = typename decltype(tag)::type;
        const T* pa = a.data<T>();
        const T* pb = b.data<T>();
        T* o = out.data<T>();
        for (std::int64_t i = 0; i < outer; ++i) {
            std::memcpy(o + i * (a_block + b_block), pa + i * a_block,
                        static_cast<std::size_t>(a_block) * sizeof(T));
            std::memcpy(o + i * (a_block + b_block) + a_block, pb + i * b_block,
                        static_cast<std::size_t>(b_block) * sizeof(T));
        }
    });
    check_finite(out, "concat");

    if (needs) {
        g.record(out, [a, b, out, outer, a_block, b_block] {
            dispatch_dtype(a.dtype(), [&](auto tag) {
                using T = typename decltype(tag)::type;
                const auto& K = kernels::table<T>();
                const T* gout = out.node()->grad_as<T>();
                if (a.requires_grad()) {
                    a.node()->ensure_grad();
                    T* ga = a.node()->grad_as<T>();
                    for (std::int64_t i = 0; i < outer; ++i) {
                        K.add_inplace(ga + i * a_block, gout + i * (a_block + b_block),
                                      static_cast<std::size_t>(a_block));
                    }
                }
                if (b.requires_grad()) {
                    b.node()->ensure_grad();
                    T* gb = b.node()->grad_as<T>();
                    for (std::int64_t i = 0; i < outer; ++i) {
                        K.add_inplace(gb + i * b_block,
                                      gout + i * (a_block + b_block) + a_block,
                                      static_cast<std::size_t>(b_block));
                    }
                }
            });
        });
    }
    return out;
}

Tensor reshape(Graph& g, const Tensor& x, Shape new_shape) {
    if (shape_numel(new_shape) != x.size()) {
        throw std::invalid_argument("reshape: cannot view " + shape_str(x.shape()) + " (" +
                                    std::to_string(x.size()) + " elements) as " +
                                    shape_str(new_shape));
    }
    const bool needs = wants_grad(g, {&x});
    Tensor out = make_op_output(new_shape, x.dtype(), needs);
    std::memcpy(out.node()->data.data(), x.node()->data.data(), x.node()->data.size());
    if (needs) {
        g.record(out, [x, out] {
            dispatch_dtype(x.dtype(), [&](auto tag) {
                using T = typename decltype(tag)::type;
                x.node()->ensure_grad();
                kernels::table<T>().add_inplace(x.node()->grad_as<T>(), out.node()->grad_as<T>(),
                                                static_cast<std::size_t>(x.size()));
            });
        });
    }
    return out;
}

Tensor permute(Graph& g, const Tensor& x, std::vector<std::int64_t> axes) {
    const std::size_t rank = x.ndim();
    if (axes.size() != rank) {
        throw std::invalid_argument("permute: got " + std::to_string(axes.size()) +
                                    " axes for rank " + std::to_string(rank));
    }
    std::vector<bool> seen(rank, false);
    for (std::int64_t a : axes) {
        if (a < 0 || a >= static_cast<std::int64_t>(rank) || seen[static_cast<std::size_t>(a)]) {
            throw std::invalid_argument("permute: axes are not a permutation of 0.." +
                                        std::to_string(rank - 1));
        }
        seen[static_cast<std::size_t>(a)] = true;
    }

    Shape out_shape(rank);
    for (std::size_t i = 0; i < rank; ++i) out_shape[i] = x.shape()[axes[i]];

    // Stride of x along each output axis; the odometer over the output then
    // walks the matching source elements.
    std::vector<std::int64_t> x_strides(rank, 1);
    for (std::size_t d = rank - 1; d-- > 0;) x_strides[d] = x_strides[d + 1] * x.shape()[d + 1];
    std::vector<std::int64_t> src_stride(rank);
    for (std::size_t i = 0; i < rank; ++i) src_stride[i] = x_strides[axes[i]];
    const std::vector<std::int64_t> unit_zero(rank, 0);

    const bool needs = wants_grad(g, {&x});
    Tensor out = make_op_output(out_shape, x.dtype(), needs);
    dispatch_dtype(x.dtype(), [&](auto tag) {
        using T = typename decltype(tag)::type;
        const T* in = x.data<T>();
        T* o = out.data<T>();
        for_each_broadcast(out_shape, src_stride, unit_zero,
                           [&](std::int64_t flat, std::int64_t src, std::int64_t) {
                               o[flat] = in[src];
                           });
    });
    check_finite(out, "permute");

    if (needs) {
        g.record(out, [x, out, out_shape, src_stride, unit_zero] {
            dispatch_dtype(x.dtype(), [&](auto tag) {
                using T = typename decltype(tag)::type;
                x.node()->ensure_grad();
                const T* gout = out.node()->grad_as<T>();
                T* gin = x.node()->grad_as<T>();
                for_each_broadcast(out_shape, src_stride, unit_zero,
                                   [&](std::int64_t flat, std::int64_t src, std::int64_t) {
                                       gin[src] += gout[flat];
                                   });
            });
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// reductions

Tensor l1_loss(Graph& g, const Tensor& pred, const Tensor& target, Reduction reduction) {
    require_same_dtype("l1_loss", pred, target);
    if (pred.shape() != target.shape()) {
        throw std::invalid_argument("l1_loss: shape mismatch: " + shape_str(pred.shape()) +
                                    " vs " + shape_str(target.shape()));
    }
    const std::int64_t n = pred.size();
    if (n == 0) {
        throw std::invalid_argument("l1_loss: empty tensors");
    }
    const bool needs = wants_grad(g, {&pred, &target});
    Tensor out = make_op_output({1}, pred.dtype(), needs);

    dispatch_dtype(pred.dtype(), [&](auto tag) {
        using T = typename decltype(tag)::type;
        const T* p = pred.data<T>();
        const T* t = target.data<T>();
        double acc = 0.0;
        for (std::int64_t i = 0; i < n; ++i) {
            acc += std::abs(static_cast<double>(p[i]) - static_cast<double>(t[i]));
        }
        if (reduction == Reduction::mean) acc /= static_cast<double>(n);
        out.data<T>()[0] = static_cast<T>(acc);
    });
    check_finite(out, "l1_loss");

    if (needs) {
        g.record(out, [pred, target, out, reduction, n] {
            dispatch_dtype(pred.dtype(), [&](auto tag) {
                using T = typename decltype(tag)::type;
                const T* p = pred.data<T>();
                const T* t = target.data<T>();
                const T go = out.node()->grad_as<T>()[0];
                const T factor = reduction == Reduction::mean
                                     ? go * static_cast<T>(1.0 / static_cast<double>(n))
                                     : go;
                const bool gp_on = pred.requires_grad();
                const bool gt_on = target.requires_grad();
                if (gp_on) pred.node()->ensure_grad();
                if (gt_on) target.node()->ensure_grad();
                T* gp = gp_on ? pred.node()->grad_as<T>() : nullptr;
                T* gt = gt_on ? target.node()->grad_as<T>() : nullptr;
                for (std::int64_t i = 0; i < n; ++i) {
                    const T s = sign_of(p[i] - t[i]) * factor;
                    if (gp_on) gp[i] += s;
                    if (gt_on) gt[i] -= s;
                }
            });
        });
    }
    return out;
}

Tensor sum(Graph& g, const Tensor& x) {
    const std::int64_t n = x.size();
    const bool needs = wants_grad(g, {&x});
    Tensor out = make_op_output({1}, x.dtype(), needs);
    dispatch_dtype(x.dtype(), [&](auto tag) {
        using T = typename decltype(tag)::type;
        const T* p = x.data<T>();
        double acc = 0.0;
        for (std::int64_t i = 0; i < n; ++i) acc += static_cast<double>(p[i]);
        out.data<T>()[0] = static_cast<T>(acc);
    });
    check_finite(out, "sum");
    if (needs) {
        g.record(out, [x, out, n] {
            dispatch_dtype(x.dtype(), [&](auto tag) {
                using T = typename decltype(tag)::type;
                x.node()->ensure_grad();
                const T go = out.node()->grad_as<T>()[0];
                T* gin = x.node()->grad_as<T>();
                for (std::int64_t i = 0; i < n; ++i) gin[i] += go;
            });
        });
    }
    return out;
}

Reduction reduction_from_name(const std::string& name) {
    if (name == "sum") return Reduction::sum;
    if (name == "mean") return Reduction::mean;
    throw std::invalid_argument("unknown reduction '" + name + "' (expected sum|mean)");
}

const char* reduction_name(Reduction r) {
    return r == Reduction::sum ? "sum" : "mean";
}

}  // namespace prnet::ops
