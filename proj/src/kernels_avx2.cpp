// AVX2 variants. Compiled with -mavx2 only; the dispatcher never hands these
// out unless the CPU reports AVX2. Each kernel performs the same per-element
// IEEE operations as the scalar reference (4 independent lanes, no FMA), so
// outputs are bit-identical to the scalar backend.

#include "geez/kernels.hpp"

#if defined(__AVX2__)
#include <immintrin.h>
#include <cstring>
#include <vector>

namespace geez::kernels {
namespace {

void add_avx2(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_avx2(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_avx2(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_avx2(const double* x, double c, double* out, std::size_t n) {
    const __m256d vc = _mm256_set1_pd(c);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), vc));
    }
    for (; i < n; ++i) out[i] = x[i] * c;
}

void axpy_avx2(double a, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
        _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

void relu_avx2(const double* x, double* out, std::size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d v = _mm256_loadu_pd(x + i);
        // x > 0 ? x : 0, with +0.0 for non-positive lanes like the reference.
        _mm256_storeu_pd(out + i, _mm256_and_pd(v, _mm256_cmp_pd(v, zero, _CMP_GT_OQ)));
    }
    for (; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_mask_avx2(const double* x, const double* g, double* out, std::size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
        _mm256_storeu_pd(out + i, _mm256_and_pd(_mm256_loadu_pd(g + i), mask));
    }
    for (; i < n; ++i) out[i] = x[i] > 0.0 ? g[i] : 0.0;
}

// Single row tail: j widened to 4 lanes, k ascending per element.
void gemm_row_avx2(const double* arow, const double* b, double* crow,
                   std::size_t k, std::size_t n, std::size_t j0, std::size_t j1) {
    const std::size_t jv = j0 + ((j1 - j0) / 4) * 4;
    for (std::size_t kk = 0; kk < k; ++kk) {
        const double aik = arow[kk];
        const double* brow = b + kk * n;
        const __m256d va = _mm256_set1_pd(aik);
        std::size_t j = j0;
        for (; j < jv; j += 4) {
            const __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(brow + j));
            _mm256_storeu_pd(crow + j, _mm256_add_pd(_mm256_loadu_pd(crow + j), prod));
        }
        for (; j < j1; ++j) crow[j] += aik * brow[j];
    }
}

// Same arithmetic as the reference — every c[i][j] accumulates over k
// ascending with separate mul and add — restructured for locality: 4×8 output
// tiles held in registers across the k loop, with the b panel packed
// tile-major so the inner loop streams contiguous cache lines. Packing only
// relocates values, so results stay bit-identical.
void gemm_avx2(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n) {
    constexpr std::size_t kColBlock = 512;
    thread_local std::vector<double> pack;
    for (std::size_t j0 = 0; j0 < n; j0 += kColBlock) {
        const std::size_t j1 = j0 + kColBlock < n ? j0 + kColBlock : n;
        const std::size_t tiles = (j1 - j0) / 8;
        pack.resize(tiles * k * 8);
        for (std::size_t t = 0; t < tiles; ++t) {
            double* dst = pack.data() + t * k * 8;
            const double* src = b + j0 + t * 8;
            for (std::size_t kk = 0; kk < k; ++kk, dst += 8, src += n) {
                std::memcpy(dst, src, 8 * sizeof(double));
            }
        }
        std::size_t i = 0;
        for (; i + 4 <= m; i += 4) {
            const double* a0 = a + i * k;
            const double* a1 = a0 + k;
            const double* a2 = a1 + k;
            const double* a3 = a2 + k;
            double* c0 = c + i * n;
            double* c1 = c0 + n;
            double* c2 = c1 + n;
            double* c3 = c2 + n;
            for (std::size_t t = 0; t < tiles; ++t) {
                const std::size_t j = j0 + t * 8;
                const double* bp = pack.data() + t * k * 8;
                __m256d s00 = _mm256_loadu_pd(c0 + j), s01 = _mm256_loadu_pd(c0 + j + 4);
                __m256d s10 = _mm256_loadu_pd(c1 + j), s11 = _mm256_loadu_pd(c1 + j + 4);
                __m256d s20 = _mm256_loadu_pd(c2 + j), s21 = _mm256_loadu_pd(c2 + j + 4);
                __m256d s30 = _mm256_loadu_pd(c3 + j), s31 = _mm256_loadu_pd(c3 + j + 4);
                for (std::size_t kk = 0; kk < k; ++kk, bp += 8) {
                    const __m256d b0 = _mm256_loadu_pd(bp);
                    const __m256d b1 = _mm256_loadu_pd(bp + 4);
                    __m256d va = _mm256_set1_pd(a0[kk]);
                    s00 = _mm256_add_pd(s00, _mm256_mul_pd(va, b0));
                    s01 = _mm256_add_pd(s01, _mm256_mul_pd(va, b1));
                    va = _mm256_set1_pd(a1[kk]);
                    s10 = _mm256_add_pd(s10, _mm256_mul_pd(va, b0));
                    s11 = _mm256_add_pd(s11, _mm256_mul_pd(va, b1));
                    va = _mm256_set1_pd(a2[kk]);
                    s20 = _mm256_add_pd(s20, _mm256_mul_pd(va, b0));
                    s21 = _mm256_add_pd(s21, _mm256_mul_pd(va, b1));
                    va = _mm256_set1_pd(a3[kk]);
                    s30 = _mm256_add_pd(s30, _mm256_mul_pd(va, b0));
                    s31 = _mm256_add_pd(s31, _mm256_mul_pd(va, b1));
                }
                _mm256_storeu_pd(c0 + j, s00);
                _mm256_storeu_pd(c0 + j + 4, s01);
                _mm256_storeu_pd(c1 + j, s10);
                _mm256_storeu_pd(c1 + j + 4, s11);
                _mm256_storeu_pd(c2 + j, s20);
                _mm256_storeu_pd(c2 + j + 4, s21);
                _mm256_storeu_pd(c3 + j, s30);
                _mm256_storeu_pd(c3 + j + 4, s31);
            }
            for (std::size_t j = j0 + tiles * 8; j < j1; ++j) {
                double s0 = c0[j], s1 = c1[j], s2 = c2[j], s3 = c3[j];
                for (std::size_t kk = 0; kk < k; ++kk) {
                    const double bv = b[kk * n + j];
                    s0 += a0[kk] * bv;
                    s1 += a1[kk] * bv;
                    s2 += a2[kk] * bv;
                    s3 += a3[kk] * bv;
                }
                c0[j] = s0;
                c1[j] = s1;
                c2[j] = s2;
                c3[j] = s3;
            }
        }
        for (; i < m; ++i) {
            gemm_row_avx2(a + i * k, b, c + i * n, k, n, j0, j1);
        }
    }
}

// c += aᵀ·b with a stored (k×m): i-k-j with the j loop widened to 4 lanes,
// k ascending per element, matching the scalar reference bit for bit.
void gemm_tn_avx2(const double* a, const double* b, double* c,
                  std::size_t m, std::size_t k, std::size_t n) {
    constexpr std::size_t kColBlock = 512;
    for (std::size_t j0 = 0; j0 < n; j0 += kColBlock) {
        const std::size_t j1 = j0 + kColBlock < n ? j0 + kColBlock : n;
        const std::size_t jv = j0 + ((j1 - j0) / 4) * 4;
        for (std::size_t i = 0; i < m; ++i) {
            double* crow = c + i * n;
            for (std::size_t kk = 0; kk < k; ++kk) {
                const double aik = a[kk * m + i];
                const double* brow = b + kk * n;
                const __m256d va = _mm256_set1_pd(aik);
                std::size_t j = j0;
                for (; j < jv; j += 4) {
                    const __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(brow + j));
                    _mm256_storeu_pd(crow + j, _mm256_add_pd(_mm256_loadu_pd(crow + j), prod));
                }
                for (; j < j1; ++j) crow[j] += aik * brow[j];
            }
        }
    }
}

}  // namespace

const Backend& avx2_backend() {
    static const Backend backend{
        "avx2",    add_avx2,  sub_avx2,       mul_avx2,  scale_avx2,
        axpy_avx2, relu_avx2, relu_mask_avx2, gemm_avx2, gemm_tn_avx2,
        detail_gemm_nt,
    };
    return backend;
}

}  // namespace geez::kernels

#else  // !__AVX2__

namespace geez::kernels {

const Backend& avx2_backend() { return scalar_backend(); }

}  // namespace geez::kernels

#endif
