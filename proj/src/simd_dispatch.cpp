#include "fourcrop/simd.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>
#include <string>

#include "fourcrop/errors.hpp"
#include "simd_internal.hpp"

namespace fourcrop::simd {

namespace {

Backend pick_initial_backend() {
    const char* env = std::getenv("FCN_SIMD");
    if (env != nullptr && *env != '\0') {
        if (std::strcmp(env, "scalar") == 0) return Backend::scalar;
        if (std::strcmp(env, "avx2") == 0) {
            if (!cpu_has_avx2()) throw ConfigError("FCN_SIMD=avx2 but CPU lacks AVX2/FMA");
            return Backend::avx2;
        }
        throw ConfigError(std::string("unknown FCN_SIMD value '") + env +
                          "' (expected scalar or avx2)");
    }
    return cpu_has_avx2() ? Backend::avx2 : Backend::scalar;
}

std::atomic<Backend>& backend_slot() {
    static std::atomic<Backend> slot{pick_initial_backend()};
    return slot;
}

} // namespace

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Backend active_backend() { return backend_slot().load(std::memory_order_relaxed); }

void force_backend(Backend b) {
    if (b == Backend::avx2 && !cpu_has_avx2())
        throw ConfigError("cannot force avx2 backend: CPU lacks AVX2/FMA");
    backend_slot().store(b, std::memory_order_relaxed);
}

const char* backend_name(Backend b) { return b == Backend::avx2 ? "avx2" : "scalar"; }

void gemm(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda,
          const float* b, std::size_t ldb, float beta, float* c, std::size_t ldc) {
    if (active_backend() == Backend::avx2)
        detail::gemm_avx2(m, n, k, a, lda, b, ldb, beta, c, ldc);
    else
        detail::gemm_scalar(m, n, k, a, lda, b, ldb, beta, c, ldc);
}

void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
          const double* b, std::size_t ldb, double beta, double* c, std::size_t ldc) {
    detail::gemm_scalar(m, n, k, a, lda, b, ldb, beta, c, ldc);
}

void relu(const float* x, float* y, std::size_t n) {
    if (active_backend() == Backend::avx2)
        detail::relu_avx2(x, y, n);
    else
        detail::relu_scalar(x, y, n);
}

void relu(const double* x, double* y, std::size_t n) { detail::relu_scalar(x, y, n); }

void relu_grad(const float* x, const float* dy, float* dx, std::size_t n) {
    if (active_backend() == Backend::avx2)
        detail::relu_grad_avx2(x, dy, dx, n);
    else
        detail::relu_grad_scalar(x, dy, dx, n);
}

void relu_grad(const double* x, const double* dy, double* dx, std::size_t n) {
    detail::relu_grad_scalar(x, dy, dx, n);
}

void add(const float* a, const float* b, float* y, std::size_t n) {
    if (active_backend() == Backend::avx2)
        detail::add_avx2(a, b, y, n);
    else
        detail::add_scalar(a, b, y, n);
}

void add(const double* a, const double* b, double* y, std::size_t n) {
    detail::add_scalar(a, b, y, n);
}

void axpy(float alpha, const float* x, float* y, std::size_t n) {
    if (active_backend() == Backend::avx2)
        detail::axpy_avx2(alpha, x, y, n);
    else
        detail::axpy_scalar(alpha, x, y, n);
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
    detail::axpy_scalar(alpha, x, y, n);
}

void scale(float alpha, const float* x, float* y, std::size_t n) {
    if (active_backend() == Backend::avx2)
        detail::scale_avx2(alpha, x, y, n);
    else
        detail::scale_scalar(alpha, x, y, n);
}

void scale(double alpha, const double* x, double* y, std::size_t n) {
    detail::scale_scalar(alpha, x, y, n);
}

void channel_affine(const float* x, const float* sc, const float* sh, std::size_t rows,
                    std::size_t cc, float* y) {
    if (active_backend() == Backend::avx2)
        detail::channel_affine_avx2(x, sc, sh, rows, cc, y);
    else
        detail::channel_affine_scalar(x, sc, sh, rows, cc, y);
}

void channel_affine(const double* x, const double* sc, const double* sh, std::size_t rows,
                    std::size_t cc, double* y) {
    detail::channel_affine_scalar(x, sc, sh, rows, cc, y);
}

void channel_sums(const float* x, std::size_t rows, std::size_t cc, float* sum, float* sumsq) {
    if (active_backend() == Backend::avx2)
        detail::channel_sums_avx2(x, rows, cc, sum, sumsq);
    else
        detail::channel_sums_scalar(x, rows, cc, sum, sumsq);
}

void channel_sums(const double* x, std::size_t rows, std::size_t cc, double* sum, double* sumsq) {
    detail::channel_sums_scalar(x, rows, cc, sum, sumsq);
}

void maxpool2x2(const float* x, std::size_t n, std::size_t h, std::size_t w, std::size_t c,
                float* y, std::int32_t* idx) {
    if (active_backend() == Backend::avx2)
        detail::maxpool2x2_avx2(x, n, h, w, c, y, idx);
    else
        detail::maxpool2x2_scalar(x, n, h, w, c, y, idx);
}

void maxpool2x2(const double* x, std::size_t n, std::size_t h, std::size_t w, std::size_t c,
                double* y, std::int32_t* idx) {
    detail::maxpool2x2_scalar(x, n, h, w, c, y, idx);
}

} // namespace fourcrop::simd
