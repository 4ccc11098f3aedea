#include "prnet/kernels.hpp"

// AVX2 variants. Strictly lane-parallel: per output element the operation
// sequence is identical to the scalar reference, so results are bit-exact.
// No FMA: explicit mul then add, matching the scalar path compiled with
// -ffp-contract=off.

#if defined(PRNET_AVX2_BUILD) && (defined(__x86_64__) || defined(__i386__))

#include <immintrin.h>

namespace prnet::kernels::detail {
namespace {

// ---------------------------------------------------------------- float ----

void add_f(const float* a, const float* b, float* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_f(const float* a, const float* b, float* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_f(const float* a, const float* b, float* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

void add_inplace_f(float* y, const float* x, std::size_t n) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(y + i), _mm256_loadu_ps(x + i)));
    for (; i < n; ++i) y[i] += x[i];
}

void axpy_f(float alpha, const float* x, float* y, std::size_t n) {
    const __m256 av = _mm256_set1_ps(alpha);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 t = _mm256_mul_ps(av, _mm256_loadu_ps(x + i));
        _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(y + i), t));
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale_inplace_f(float* y, float alpha, std::size_t n) {
    const __m256 av = _mm256_set1_ps(alpha);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_mul_ps(_mm256_loadu_ps(y + i), av));
    for (; i < n; ++i) y[i] *= alpha;
}

void relu_f(const float* x, float* out, std::size_t n) {
    const __m256 zero = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 xv = _mm256_loadu_ps(x + i);
        __m256 mask = _mm256_cmp_ps(xv, zero, _CMP_GT_OQ);
        _mm256_storeu_ps(out + i, _mm256_and_ps(mask, xv));
    }
    for (; i < n; ++i) out[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_grad_accum_f(const float* x, const float* g, float* acc, std::size_t n) {
    const __m256 zero = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_GT_OQ);
        __m256 gv = _mm256_and_ps(mask, _mm256_loadu_ps(g + i));
        _mm256_storeu_ps(acc + i, _mm256_add_ps(_mm256_loadu_ps(acc + i), gv));
    }
    for (; i < n; ++i) acc[i] += (x[i] > 0.0f) ? g[i] : 0.0f;
}

void max_inplace_f(float* y, const float* x, std::size_t n) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_max_ps(_mm256_loadu_ps(y + i), _mm256_loadu_ps(x + i)));
    for (; i < n; ++i) y[i] = (y[i] > x[i]) ? y[i] : x[i];
}

void madd_rows_f(float* y, const float* x, const float* w, std::size_t n_in, std::size_t n_out) {
    std::size_t j = 0;
    for (; j + 8 <= n_out; j += 8) {
        __m256 acc = _mm256_loadu_ps(y + j);
        const float* wj = w + j;
        for (std::size_t i = 0; i < n_in; ++i) {
            __m256 t = _mm256_mul_ps(_mm256_set1_ps(x[i]), _mm256_loadu_ps(wj + i * n_out));
            acc = _mm256_add_ps(acc, t);
        }
        _mm256_storeu_ps(y + j, acc);
    }
    for (; j < n_out; ++j) {
        float acc = y[j];
        for (std::size_t i = 0; i < n_in; ++i) acc += x[i] * w[i * n_out + j];
        y[j] = acc;
    }
}

void ger_accum_f(float* a, const float* x, const float* y, std::size_t n_x, std::size_t n_y) {
    for (std::size_t i = 0; i < n_x; ++i) {
        const __m256 xv = _mm256_set1_ps(x[i]);
        float* arow = a + i * n_y;
        std::size_t j = 0;
        for (; j + 8 <= n_y; j += 8) {
            __m256 t = _mm256_mul_ps(xv, _mm256_loadu_ps(y + j));
            _mm256_storeu_ps(arow + j, _mm256_add_ps(_mm256_loadu_ps(arow + j), t));
        }
        for (; j < n_y; ++j) arow[j] += x[i] * y[j];
    }
}

// --------------------------------------------------------------- double ----

void add_d(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_d(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_d(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

void add_inplace_d(double* y, const double* x, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), _mm256_loadu_pd(x + i)));
    for (; i < n; ++i) y[i] += x[i];
}

void axpy_d(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d av = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d t = _mm256_mul_pd(av, _mm256_loadu_pd(x + i));
        _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), t));
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale_inplace_d(double* y, double alpha, std::size_t n) {
    const __m256d av = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_mul_pd(_mm256_loadu_pd(y + i), av));
    for (; i < n; ++i) y[i] *= alpha;
}

void relu_d(const double* x, double* out, std::size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d xv = _mm256_loadu_pd(x + i);
        __m256d mask = _mm256_cmp_pd(xv, zero, _CMP_GT_OQ);
        _mm256_storeu_pd(out + i, _mm256_and_pd(mask, xv));
    }
    for (; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_grad_accum_d(const double* x, const double* g, double* acc, std::size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
        __m256d gv = _mm256_and_pd(mask, _mm256_loadu_pd(g + i));
        _mm256_storeu_pd(acc + i, _mm256_add_pd(_mm256_loadu_pd(acc + i), gv));
    }
    for (; i < n; ++i) acc[i] += (x[i] > 0.0) ? g[i] : 0.0;
}

void max_inplace_d(double* y, const double* x, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_max_pd(_mm256_loadu_pd(y + i), _mm256_loadu_pd(x + i)));
    for (; i < n; ++i) y[i] = (y[i] > x[i]) ? y[i] : x[i];
}

void madd_rows_d(double* y, const double* x, const double* w, std::size_t n_in, std::size_t n_out) {
    std::size_t j = 0;
    for (; j + 4 <= n_out; j += 4) {
        __m256d acc = _mm256_loadu_pd(y + j);
        const double* wj = w + j;
        for (std::size_t i = 0; i < n_in; ++i) {
            __m256d t = _mm256_mul_pd(_mm256_set1_pd(x[i]), _mm256_loadu_pd(wj + i * n_out));
            acc = _mm256_add_pd(acc, t);
        }
        _mm256_storeu_pd(y + j, acc);
    }
    for (; j < n_out; ++j) {
        double acc = y[j];
        for (std::size_t i = 0; i < n_in; ++i) acc += x[i] * w[i * n_out + j];
        y[j] = acc;
    }
}

void ger_accum_d(double* a, const double* x, const double* y, std::size_t n_x, std::size_t n_y) {
    for (std::size_t i = 0; i < n_x; ++i) {
        const __m256d xv = _mm256_set1_pd(x[i]);
        double* arow = a + i * n_y;
        std::size_t j = 0;
        for (; j + 4 <= n_y; j += 4) {
            __m256d t = _mm256_mul_pd(xv, _mm256_loadu_pd(y + j));
            _mm256_storeu_pd(arow + j, _mm256_add_pd(_mm256_loadu_pd(arow + j), t));
        }
        for (; j < n_y; ++j) arow[j] += x[i] * y[j];
    }
}

}  // namespace

template <>
const OpTable<float>& avx2_table<float>() {
    static const OpTable<float> t = {add_f,  sub_f,  mul_f,  add_inplace_f,
                                     axpy_f, scale_inplace_f, relu_f, relu_grad_accum_f,
                                     max_inplace_f, madd_rows_f, ger_accum_f};
    return t;
}

template <>
const OpTable<double>& avx2_table<double>() {
    static const OpTable<double> t = {add_d,  sub_d,  mul_d,  add_inplace_d,
                                      axpy_d, scale_inplace_d, relu_d, relu_grad_accum_d,
                                      max_inplace_d, madd_rows_d, ger_accum_d};
    return t;
}

}  // namespace prnet::kernels::detail

#else  // no AVX2 build

namespace prnet::kernels::detail {

template <>
const OpTable<float>& avx2_table<float>() {
    static const OpTable<float> t = {};
    return t;
}

template <>
const OpTable<double>& avx2_table<double>() {
    static const OpTable<double> t = {};
    return t;
}

}  // namespace prnet::kernels::detail

#endif
