#include "prnet/kernels.hpp"

// Scalar reference kernels. These define the numerical contract: the AVX2
// variants must reproduce them bit-for-bit. Keep the accumulation order of
// every loop stable; the SIMD code relies on it.

namespace prnet::kernels::detail {
namespace {

template <typename T>
void add_k(const T* a, const T* b, T* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <typename T>
void sub_k(const T* a, const T* b, T* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

template <typename T>
void mul_k(const T* a, const T* b, T* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

template <typename T>
void add_inplace_k(T* y, const T* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += x[i];
}

template <typename T>
void axpy_k(T alpha, const T* x, T* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void scale_inplace_k(T* y, T alpha, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] *= alpha;
}

template <typename T>
void relu_k(const T* x, T* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_grad_accum_k(const T* x, const T* g, T* acc, std::size_t n) {
    // Unconditional add of a masked value, same as the vector form.
    for (std::size_t i = 0; i < n; ++i) acc[i] += (x[i] > T(0)) ? g[i] : T(0);
}

template <typename T>
void max_inplace_k(T* y, const T* x, std::size_t n) {
    // Second operand wins ties so the result matches vmaxps/vmaxpd exactly.
    for (std::size_t i = 0; i < n; ++i) y[i] = (y[i] > x[i]) ? y[i] : x[i];
}

template <typename T>
void madd_rows_k(T* y, const T* x, const T* w, std::size_t n_in, std::size_t n_out) {
    for (std::size_t i = 0; i < n_in; ++i) {
        const T xi = x[i];
        const T* wrow = w + i * n_out;
        for (std::size_t j = 0; j < n_out; ++j) y[j] += xi * wrow[j];
    }
}

template <typename T>
void ger_accum_k(T* a, const T* x, const T* y, std::size_t n_x, std::size_t n_y) {
    for (std::size_t i = 0; i < n_x; ++i) {
        const T xi = x[i];
        T* arow = a + i * n_y;
        for (std::size_t j = 0; j < n_y; ++j) arow[j] += xi * y[j];
    }
}

template <typename T>
OpTable<T> make_table() {
    OpTable<T> t;
    t.add = add_k<T>;
    t.sub = sub_k<T>;
    t.mul = mul_k<T>;
    t.add_inplace = add_inplace_k<T>;
    t.axpy = axpy_k<T>;
    t.scale_inplace = scale_inplace_k<T>;
    t.relu = relu_k<T>;
    t.relu_grad_accum = relu_grad_accum_k<T>;
    t.max_inplace = max_inplace_k<T>;
    t.madd_rows = madd_rows_k<T>;
    t.ger_accum = ger_accum_k<T>;
    return t;
}

}  // namespace

template <>
const OpTable<float>& scalar_table<float>() {
    static const OpTable<float> t = make_table<float>();
    return t;
}

template <>
const OpTable<double>& scalar_table<double>() {
    static const OpTable<double> t = make_table<double>();
    return t;
}

}  // namespace prnet::kernels::detail
