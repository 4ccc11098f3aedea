#include "prnet/kernels.hpp"

#include <cstdlib>
#include <cstring>
#include <stdexcept>

namespace prnet::kernels {

namespace {

bool cpu_has_avx2() {
#if defined(PRNET_AVX2_BUILD) && (defined(__GNUC__) || defined(__clang__)) && \
    (defined(__x86_64__) || defined(__i386__))
    return __builtin_cpu_supports("avx2");
#else
    return false;
#endif
}

Backend startup_backend() {
    if (const char* env = std::getenv("PRNET_KERNELS")) {
        if (std::strcmp(env, "scalar") == 0) return Backend::scalar;
        if (std::strcmp(env, "avx2") == 0 && cpu_has_avx2()) return Backend::avx2;
        // "auto" or anything unusable falls through to detection.
    }
    return cpu_has_avx2() ? Backend::avx2 : Backend::scalar;
}

Backend& backend_state() {
    static Backend b = startup_backend();
    return b;
}

}  // namespace

bool avx2_available() { return cpu_has_avx2(); }

Backend active_backend() { return backend_state(); }

void set_backend(Backend b) {
    if (b == Backend::avx2 && !cpu_has_avx2())
        throw std::runtime_error("kernels: AVX2 backend not available on this machine/build");
    backend_state() = b;
}

void reset_backend() { backend_state() = startup_backend(); }

const char* backend_name(Backend b) {
    switch (b) {
        case Backend::scalar: return "scalar";
        case Backend::avx2: return "avx2";
    }
    return "?";
}

template <typename T>
const OpTable<T>& table() {
    return backend_state() == Backend::avx2 ? detail::avx2_table<T>() : detail::scalar_table<T>();
}

template const OpTable<float>& table<float>();
template const OpTable<double>& table<double>();

}  // namespace prnet::kernels
