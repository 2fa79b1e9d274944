#pragma once

#include <cstddef>
#include <cstdint>

namespace fourcrop::simd {

// Numerical inner loops exist twice: a scalar reference and an AVX2 variant.
// The scalar path defines semantics; the AVX2 path must match it within
// reassociation tolerance (exactly, for elementwise ops). Selection happens
// once at startup from CPUID, overridable with FCN_SIMD=scalar|avx2.
enum class Backend { scalar, avx2 };

bool cpu_has_avx2();
Backend active_backend();
void force_backend(Backend b); // throws ConfigError if unsupported on this CPU
const char* backend_name(Backend b);

// Row-major C(MxN) = A(MxK)*B(KxN) + beta*C. Only beta 0 or 1 is supported.
void gemm(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda,
          const float* b, std::size_t ldb, float beta, float* c, std::size_t ldc);
void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
          const double* b, std::size_t ldb, double beta, double* c, std::size_t ldc);

void relu(const float* x, float* y, std::size_t n);
void relu(const double* x, double* y, std::size_t n);

// dx = (x > 0) ? dy : 0
void relu_grad(const float* x, const float* dy, float* dx, std::size_t n);
void relu_grad(const double* x, const double* dy, double* dx, std::size_t n);

void add(const float* a, const float* b, float* y, std::size_t n);
void add(const double* a, const double* b, double* y, std::size_t n);

// y += alpha * x
void axpy(float alpha, const float* x, float* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);

void scale(float alpha, const float* x, float* y, std::size_t n);
void scale(double alpha, const double* x, double* y, std::size_t n);

// y[r*cc + c] = x[r*cc + c] * sc[c] + sh[c]
void channel_affine(const float* x, const float* sc, const float* sh, std::size_t rows,
                    std::size_t cc, float* y);
void channel_affine(const double* x, const double* sc, const double* sh, std::size_t rows,
                    std::size_t cc, double* y);

// per-channel sum and sum of squares over all rows; accumulators are overwritten
void channel_sums(const float* x, std::size_t rows, std::size_t cc, float* sum, float* sumsq);
void channel_sums(const double* x, std::size_t rows, std::size_t cc, double* sum, double* sumsq);

// 2x2/stride-2 max pooling over NxHxWxC with even H, W. idx records the window
// position 2*dh+dw of each maximum (first occurrence wins on ties).
void maxpool2x2(const float* x, std::size_t n, std::size_t h, std::size_t w, std::size_t c,
                float* y, std::int32_t* idx);
void maxpool2x2(const double* x, std::size_t n, std::size_t h, std::size_t w, std::size_t c,
                double* y, std::int32_t* idx);

} // namespace fourcrop::simd
