// AVX2/FMA kernel variants. Compiled with -mavx2 -mfma; only reached after the
// dispatcher has confirmed CPU support.

#include <immintrin.h>

#include <cstring>
#include <vector>

#include "simd_internal.hpp"

namespace fourcrop::simd::detail {

namespace {

// GEMM blocking: 6x16 FMA micro-tile (12 ymm accumulators), panels packed so the
// k-loop streams contiguously. A panel slice is 6*KC floats, B panel 16*KC.
constexpr std::size_t MR = 6;
constexpr std::size_t NR = 16;
constexpr std::size_t KC = 256;
constexpr std::size_t MC = 264; // multiple of MR

void pack_a_block(const float* a, std::size_t lda, std::size_t mb, std::size_t kb, float* ap) {
    for (std::size_t i = 0; i < mb; i += MR) {
        const std::size_t mr = std::min(MR, mb - i);
        for (std::size_t k = 0; k < kb; ++k) {
            for (std::size_t r = 0; r < mr; ++r) *ap++ = a[(i + r) * lda + k];
            for (std::size_t r = mr; r < MR; ++r) *ap++ = 0.0f;
        }
    }
}

void pack_b_block(const float* b, std::size_t ldb, std::size_t kb, std::size_t nb, float* bp) {
    for (std::size_t j = 0; j < nb; j += NR) {
        const std::size_t nr = std::min(NR, nb - j);
        for (std::size_t k = 0; k < kb; ++k) {
            const float* bk = b + k * ldb + j;
            if (nr == NR) {
                _mm256_storeu_ps(bp, _mm256_loadu_ps(bk));
                _mm256_storeu_ps(bp + 8, _mm256_loadu_ps(bk + 8));
                bp += NR;
            } else {
                std::size_t q = 0;
                for (; q < nr; ++q) *bp++ = bk[q];
                for (; q < NR; ++q) *bp++ = 0.0f;
            }
        }
    }
}

// c(6x16) = packed_a * packed_b [+ c]
void micro_6x16(std::size_t kb, const float* ap, const float* bp, float* c, std::size_t ldc,
                bool accumulate) {
    __m256 acc00 = _mm256_setzero_ps(), acc01 = _mm256_setzero_ps();
    __m256 acc10 = _mm256_setzero_ps(), acc11 = _mm256_setzero_ps();
    __m256 acc20 = _mm256_setzero_ps(), acc21 = _mm256_setzero_ps();
    __m256 acc30 = _mm256_setzero_ps(), acc31 = _mm256_setzero_ps();
    __m256 acc40 = _mm256_setzero_ps(), acc41 = _mm256_setzero_ps();
    __m256 acc50 = _mm256_setzero_ps(), acc51 = _mm256_setzero_ps();

    for (std::size_t k = 0; k < kb; ++k) {
        const __m256 b0 = _mm256_loadu_ps(bp);
        const __m256 b1 = _mm256_loadu_ps(bp + 8);
        bp += NR;

        __m256 a;
        a = _mm256_broadcast_ss(ap + 0);
        acc00 = _mm256_fmadd_ps(a, b0, acc00);
        acc01 = _mm256_fmadd_ps(a, b1, acc01);
        a = _mm256_broadcast_ss(ap + 1);
        acc10 = _mm256_fmadd_ps(a, b0, acc10);
        acc11 = _mm256_fmadd_ps(a, b1, acc11);
        a = _mm256_broadcast_ss(ap + 2);
        acc20 = _mm256_fmadd_ps(a, b0, acc20);
        acc21 = _mm256_fmadd_ps(a, b1, acc21);
        a = _mm256_broadcast_ss(ap + 3);
        acc30 = _mm256_fmadd_ps(a, b0, acc30);
        acc31 = _mm256_fmadd_ps(a, b1, acc31);
        a = _mm256_broadcast_ss(ap + 4);
        acc40 = _mm256_fmadd_ps(a, b0, acc40);
        acc41 = _mm256_fmadd_ps(a, b1, acc41);
        a = _mm256_broadcast_ss(ap + 5);
        acc50 = _mm256_fmadd_ps(a, b0, acc50);
        acc51 = _mm256_fmadd_ps(a, b1, acc51);
        ap += MR;
    }

    float* c0 = c;
    float* c1 = c + ldc;
    float* c2 = c + 2 * ldc;
    float* c3 = c + 3 * ldc;
    float* c4 = c + 4 * ldc;
    float* c5 = c + 5 * ldc;
    if (accumulate) {
        acc00 = _mm256_add_ps(acc00, _mm256_loadu_ps(c0));
        acc01 = _mm256_add_ps(acc01, _mm256_loadu_ps(c0 + 8));
        acc10 = _mm256_add_ps(acc10, _mm256_loadu_ps(c1));
        acc11 = _mm256_add_ps(acc11, _mm256_loadu_ps(c1 + 8));
        acc20 = _mm256_add_ps(acc20, _mm256_loadu_ps(c2));
        acc21 = _mm256_add_ps(acc21, _mm256_loadu_ps(c2 + 8));
        acc30 = _mm256_add_ps(acc30, _mm256_loadu_ps(c3));
        acc31 = _mm256_add_ps(acc31, _mm256_loadu_ps(c3 + 8));
        acc40 = _mm256_add_ps(acc40, _mm256_loadu_ps(c4));
        acc41 = _mm256_add_ps(acc41, _mm256_loadu_ps(c4 + 8));
        acc50 = _mm256_add_ps(acc50, _mm256_loadu_ps(c5));
        acc51 = _mm256_add_ps(acc51, _mm256_loadu_ps(c5 + 8));
    }
    _mm256_storeu_ps(c0, acc00);
    _mm256_storeu_ps(c0 + 8, acc01);
    _mm256_storeu_ps(c1, acc10);
    _mm256_storeu_ps(c1 + 8, acc11);
    _mm256_storeu_ps(c2, acc20);
    _mm256_storeu_ps(c2 + 8, acc21);
    _mm256_storeu_ps(c3, acc30);
    _mm256_storeu_ps(c3 + 8, acc31);
    _mm256_storeu_ps(c4, acc40);
    _mm256_storeu_ps(c4 + 8, acc41);
    _mm256_storeu_ps(c5, acc50);
    _mm256_storeu_ps(c5 + 8, acc51);
}

} // namespace

void gemm_avx2(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda,
               const float* b, std::size_t ldb, float beta, float* c, std::size_t ldc) {
    if (k == 0 || m == 0 || n == 0) {
        if (beta == 0.0f) {
            for (std::size_t i = 0; i < m; ++i) std::memset(c + i * ldc, 0, n * sizeof(float));
        }
        return;
    }

    thread_local std::vector<float> apack;
    thread_local std::vector<float> bpack;
    const std::size_t npanels = (n + NR - 1) / NR;
    apack.resize(MC * KC);
    bpack.resize(npanels * NR * KC);

    for (std::size_t k0 = 0; k0 < k; k0 += KC) {
        const std::size_t kb = std::min(KC, k - k0);
        const bool accumulate = (k0 > 0) || beta == 1.0f;
        pack_b_block(b + k0 * ldb, ldb, kb, n, bpack.data());

        for (std::size_t i0 = 0; i0 < m; i0 += MC) {
            const std::size_t mb = std::min(MC, m - i0);
            pack_a_block(a + i0 * lda + k0, lda, mb, kb, apack.data());

            for (std::size_t j0 = 0; j0 < n; j0 += NR) {
                const std::size_t nr = std::min(NR, n - j0);
                const float* bpanel = bpack.data() + (j0 / NR) * (kb * NR);

                for (std::size_t i1 = 0; i1 < mb; i1 += MR) {
                    const std::size_t mr = std::min(MR, mb - i1);
                    const float* apanel = apack.data() + (i1 / MR) * (kb * MR);
                    float* ctile = c + (i0 + i1) * ldc + j0;

                    if (mr == MR && nr == NR) {
                        micro_6x16(kb, apanel, bpanel, ctile, ldc, accumulate);
                    } else {
                        alignas(32) float tmp[MR * NR];
                        std::memset(tmp, 0, sizeof(tmp));
                        if (accumulate) {
                            for (std::size_t r = 0; r < mr; ++r)
                                std::memcpy(tmp + r * NR, ctile + r * ldc, nr * sizeof(float));
                        }
                        micro_6x16(kb, apanel, bpanel, tmp, NR, accumulate);
                        for (std::size_t r = 0; r < mr; ++r)
                            std::memcpy(ctile + r * ldc, tmp + r * NR, nr * sizeof(float));
                    }
                }
            }
        }
    }
}

void relu_avx2(const float* x, float* y, std::size_t n) {
    const __m256 zero = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) _mm256_storeu_ps(y + i, _mm256_max_ps(_mm256_loadu_ps(x + i), zero));
    for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_grad_avx2(const float* x, const float* dy, float* dx, std::size_t n) {
    const __m256 zero = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_GT_OQ);
        _mm256_storeu_ps(dx + i, _mm256_and_ps(mask, _mm256_loadu_ps(dy + i)));
    }
    for (; i < n; ++i) dx[i] = x[i] > 0.0f ? dy[i] : 0.0f;
}

void add_avx2(const float* a, const float* b, float* y, std::size_t n) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) y[i] = a[i] + b[i];
}

// mul+add kept unfused so results are bitwise equal to the scalar reference
void axpy_avx2(float alpha, const float* x, float* y, std::size_t n) {
    const __m256 av = _mm256_set1_ps(alpha);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(y + i),
                                              _mm256_mul_ps(av, _mm256_loadu_ps(x + i))));
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale_avx2(float alpha, const float* x, float* y, std::size_t n) {
    const __m256 av = _mm256_set1_ps(alpha);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) _mm256_storeu_ps(y + i, _mm256_mul_ps(av, _mm256_loadu_ps(x + i)));
    for (; i < n; ++i) y[i] = alpha * x[i];
}

void channel_affine_avx2(const float* x, const float* sc, const float* sh, std::size_t rows,
                         std::size_t cc, float* y) {
    for (std::size_t r = 0; r < rows; ++r) {
        const float* xr = x + r * cc;
        float* yr = y + r * cc;
        std::size_t c = 0;
        for (; c + 8 <= cc; c += 8) {
            const __m256 v = _mm256_loadu_ps(xr + c);
            _mm256_storeu_ps(yr + c, _mm256_add_ps(_mm256_mul_ps(v, _mm256_loadu_ps(sc + c)),
                                                   _mm256_loadu_ps(sh + c)));
        }
        for (; c < cc; ++c) yr[c] = xr[c] * sc[c] + sh[c];
    }
}

void channel_sums_avx2(const float* x, std::size_t rows, std::size_t cc, float* sum,
                       float* sumsq) {
    std::memset(sum, 0, cc * sizeof(float));
    std::memset(sumsq, 0, cc * sizeof(float));
    for (std::size_t r = 0; r < rows; ++r) {
        const float* xr = x + r * cc;
        std::size_t c = 0;
        for (; c + 8 <= cc; c += 8) {
            const __m256 v = _mm256_loadu_ps(xr + c);
            _mm256_storeu_ps(sum + c, _mm256_add_ps(_mm256_loadu_ps(sum + c), v));
            _mm256_storeu_ps(sumsq + c, _mm256_fmadd_ps(v, v, _mm256_loadu_ps(sumsq + c)));
        }
        for (; c < cc; ++c) {
            sum[c] += xr[c];
            sumsq[c] += xr[c] * xr[c];
        }
    }
}

void maxpool2x2_avx2(const float* x, std::size_t n, std::size_t h, std::size_t w, std::size_t c,
                     float* y, std::int32_t* idx) {
    const std::size_t oh = h / 2, ow = w / 2;
    const __m256i i0 = _mm256_setzero_si256();
    const __m256i i1 = _mm256_set1_epi32(1);
    const __m256i i2 = _mm256_set1_epi32(2);
    const __m256i i3 = _mm256_set1_epi32(3);
    for (std::size_t img = 0; img < n; ++img) {
        for (std::size_t r = 0; r < oh; ++r) {
            for (std::size_t q = 0; q < ow; ++q) {
                const float* w00 = x + ((img * h + 2 * r) * w + 2 * q) * c;
                const float* w01 = w00 + c;
                const float* w10 = w00 + w * c;
                const float* w11 = w10 + c;
                float* yo = y + ((img * oh + r) * ow + q) * c;
                std::int32_t* io = idx + ((img * oh + r) * ow + q) * c;
                std::size_t ch = 0;
                for (; ch + 8 <= c; ch += 8) {
                    const __m256 v0 = _mm256_loadu_ps(w00 + ch);
                    const __m256 v1 = _mm256_loadu_ps(w01 + ch);
                    const __m256 v2 = _mm256_loadu_ps(w10 + ch);
                    const __m256 v3 = _mm256_loadu_ps(w11 + ch);
                    // strictly-greater comparisons keep the first occurrence on ties
                    const __m256 g1 = _mm256_cmp_ps(v1, v0, _CMP_GT_OQ);
                    const __m256 m01 = _mm256_max_ps(v0, v1);
                    const __m256i x01 =
                        _mm256_blendv_epi8(i0, i1, _mm256_castps_si256(g1));
                    const __m256 g3 = _mm256_cmp_ps(v3, v2, _CMP_GT_OQ);
                    const __m256 m23 = _mm256_max_ps(v2, v3);
                    const __m256i x23 =
                        _mm256_blendv_epi8(i2, i3, _mm256_castps_si256(g3));
                    const __m256 g23 = _mm256_cmp_ps(m23, m01, _CMP_GT_OQ);
                    const __m256 mx = _mm256_max_ps(m01, m23);
                    const __m256i xi =
                        _mm256_blendv_epi8(x01, x23, _mm256_castps_si256(g23));
                    _mm256_storeu_ps(yo + ch, mx);
                    _mm256_storeu_si256(reinterpret_cast<__m256i*>(io + ch), xi);
                }
                for (; ch < c; ++ch) {
                    float best = w00[ch];
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

} // namespace fourcrop::simd::detail
