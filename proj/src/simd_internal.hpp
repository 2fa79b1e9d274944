#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>

namespace fourcrop::simd::detail {

// ---- scalar reference kernels ----------------------------------------------
// These define the semantics every other backend is tested against.

template <class T>
void gemm_scalar(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda,
                 const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc) {
    for (std::size_t i = 0; i < m; ++i) {
        T* ci = c + i * ldc;
        if (beta == T(0)) std::fill(ci, ci + n, T(0));
        const T* ai = a + i * lda;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = ai[p];
            const T* bp = b + p * ldb;
            for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

template <class T>
void relu_scalar(const T* x, T* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <class T>
void relu_grad_scalar(const T* x, const T* dy, T* dx, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dx[i] = x[i] > T(0) ? dy[i] : T(0);
}

template <class T>
void add_scalar(const T* a, const T* b, T* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

template <class T>
void axpy_scalar(T alpha, const T* x, T* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <class T>
void scale_scalar(T alpha, const T* x, T* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = alpha * x[i];
}

template <class T>
void channel_affine_scalar(const T* x, const T* sc, const T* sh, std::size_t rows,
                           std::size_t cc, T* y) {
    for (std::size_t r = 0; r < rows; ++r) {
        const T* xr = x + r * cc;
        T* yr = y + r * cc;
        for (std::size_t c = 0; c < cc; ++c) yr[c] = xr[c] * sc[c] + sh[c];
    }
}

template <class T>
void channel_sums_scalar(const T* x, std::size_t rows, std::size_t cc, T* sum, T* sumsq) {
    std::fill(sum, sum + cc, T(0));
    std::fill(sumsq, sumsq + cc, T(0));
    for (std::size_t r = 0; r < rows; ++r) {
        const T* xr = x + r * cc;
        for (std::size_t c = 0; c < cc; ++c) {
            sum[c] += xr[c];
            sumsq[c] += xr[c] * xr[c];
        }
    }
}

template <class T>
void maxpool2x2_scalar(const T* x, std::size_t n, std::size_t h, std::size_t w, std::size_t c,
                       T* y, std::int32_t* idx) {
    const std::size_t oh = h / 2, ow = w / 2;
    for (std::size_t img = 0; img < n; ++img) {
        for (std::size_t r = 0; r < oh; ++r) {
            for (std::size_t q = 0; q < ow; ++q) {
                const T* w00 = x + ((img * h + 2 * r) * w + 2 * q) * c;
                const T* w01 = w00 + c;
                const T* w10 = w00 + w * c;
                const T* w11 = w10 + c;
                T* yo = y + ((img * oh + r) * ow + q) * c;
                std::int32_t* io = idx + ((img * oh + r) * ow + q) * c;
                for (std::size_t ch = 0; ch < c; ++ch) {
                    T best = w00[ch];
                    std::int32_t bi = 0;
                    if (w01[ch] > best) { best = w01[ch]; bi = 1; }
                    if (w10[ch] > best) { best = w10[ch]; bi = 2; }
                    if (w11[ch] > best) { best = w11[ch]; bi = 3; }
                    yo[ch] = best;
                    io[ch] = bi;
                }
            }
        }
    }
}

// ---- AVX2 kernels (defined in simd_avx2.cpp, float only) -------------------

void gemm_avx2(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda,
               const float* b, std::size_t ldb, float beta, float* c, std::size_t ldc);
void relu_avx2(const float* x, float* y, std::size_t n);
void relu_grad_avx2(const float* x, const float* dy, float* dx, std::size_t n);
void add_avx2(const float* a, const float* b, float* y, std::size_t n);
void axpy_avx2(float alpha, const float* x, float* y, std::size_t n);
void scale_avx2(float alpha, const float* x, float* y, std::size_t n);
void channel_affine_avx2(const float* x, const float* sc, const float* sh, std::size_t rows,
                         std::size_t cc, float* y);
void channel_sums_avx2(const float* x, std::size_t rows, std::size_t cc, float* sum,
                       float* sumsq);
void maxpool2x2_avx2(const float* x, std::size_t n, std::size_t h, std::size_t w, std::size_t c,
                     float* y, std::int32_t* idx);

} // namespace fourcrop::simd::detail
