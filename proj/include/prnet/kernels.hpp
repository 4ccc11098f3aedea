#pragma once

#include <cstddef>
#include <string>

// Data-parallel inner-loop primitives with a scalar reference implementation
// and an AVX2 variant selected at runtime. Every SIMD variant is lane-parallel
// (no cross-lane reductions), so it produces bit-identical results to the
// scalar reference; the equivalence suite asserts this per kernel.

namespace prnet::kernels {

enum class Backend { scalar, avx2 };

// True when the running CPU supports AVX2 and this binary was built with the
// AVX2 translation unit enabled.
bool avx2_available();

Backend active_backend();

// Forces a backend. Throws std::runtime_error if the backend is unavailable.
void set_backend(Backend b);

// Re-applies the startup policy: PRNET_KERNELS env var (scalar|avx2|auto),
// then best available.
void reset_backend();

const char* backend_name(Backend b);

template <typename T>
struct OpTable {
    // out = a + b / a - b / a * b, elementwise
    void (*add)(const T* a, const T* b, T* out, std::size_t n);
    void (*sub)(const T* a, const T* b, T* out, std::size_t n);
    void (*mul)(const T* a, const T* b, T* out, std::size_t n);
    // y += x
    void (*add_inplace)(T* y, const T* x, std::size_t n);
    // y += alpha * x
    void (*axpy)(T alpha, const T* x, T* y, std::size_t n);
    // y *= alpha
    void (*scale_inplace)(T* y, T alpha, std::size_t n);
    // out = max(0, x)
    void (*relu)(const T* x, T* out, std::size_t n);
    // acc += (x > 0) ? g : 0
    void (*relu_grad_accum)(const T* x, const T* g, T* acc, std::size_t n);
    // y[i] = (y[i] > x[i]) ? y[i] : x[i]   (second operand wins ties, matches vmaxps)
    void (*max_inplace)(T* y, const T* x, std::size_t n);
    // y += x . W with W row-major [n_in x n_out]; per output j the sum runs
    // in fixed i order, so lanes match the scalar reference exactly
    void (*madd_rows)(T* y, const T* x, const T* w, std::size_t n_in, std::size_t n_out);
    // A += outer(x, y) with A row-major [n_x x n_y]
    void (*ger_accum)(T* a, const T* x, const T* y, std::size_t n_x, std::size_t n_y);
};

// Table for the active backend.
template <typename T>
const OpTable<T>& table();

namespace detail {
template <typename T>
const OpTable<T>& scalar_table();
// Null-filled when the binary lacks AVX2 support.
template <typename T>
const OpTable<T>& avx2_table();
}  // namespace detail

}  // namespace prnet::kernels
