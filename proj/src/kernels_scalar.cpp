#include "geez/kernels.hpp"

namespace geez::kernels {
namespace {

void add_scalar(const double* a, const double* b, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_scalar(const double* a, const double* b, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_scalar(const double* a, const double* b, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_scalar(const double* x, double c, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * c;
}

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void relu_scalar(const double* x, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_mask_scalar(const double* x, const double* g, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > 0.0 ? g[i] : 0.0;
}

// Row-major c += a·b, i-k-j order: every c[i][j] accumulates over k ascending.
// Column blocking keeps the active b panel and c row segment cache resident.
void gemm_scalar(const double* a, const double* b, double* c,
                 std::size_t m, std::size_t k, std::size_t n) {
    constexpr std::size_t kColBlock = 512;
    for (std::size_t j0 = 0; j0 < n; j0 += kColBlock) {
        const std::size_t j1 = j0 + kColBlock < n ? j0 + kColBlock : n;
        for (std::size_t i = 0; i < m; ++i) {
            double* crow = c + i * n;
            const double* arow = a + i * k;
            for (std::size_t kk = 0; kk < k; ++kk) {
                const double aik = arow[kk];
                const double* brow = b + kk * n;
                for (std::size_t j = j0; j < j1; ++j) {
                    crow[j] += aik * brow[j];
                }
            }
        }
    }
}

// c += aᵀ·b, a stored (k×m): i-k-j with a[k*m+i] broadcast, k ascending per
// element.
void gemm_tn_scalar(const double* a, const double* b, double* c,
                    std::size_t m, std::size_t k, std::size_t n) {
    constexpr std::size_t kColBlock = 512;
    for (std::size_t j0 = 0; j0 < n; j0 += kColBlock) {
        const std::size_t j1 = j0 + kColBlock < n ? j0 + kColBlock : n;
        for (std::size_t i = 0; i < m; ++i) {
            double* crow = c + i * n;
            for (std::size_t kk = 0; kk < k; ++kk) {
                const double aik = a[kk * m + i];
                const double* brow = b + kk * n;
                for (std::size_t j = j0; j < j1; ++j) {
                    crow[j] += aik * brow[j];
                }
            }
        }
    }
}

}  // namespace

// c += a·bᵀ, b stored (n×k): per-element dot products, k ascending. Both
// operand rows stream contiguously; 4 output rows share each b row. Shared by
// every backend (a vector variant would reorder the reduction).
void detail_gemm_nt(const double* a, const double* b, double* c,
                    std::size_t m, std::size_t k, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
        const double* a0 = a + i * k;
        const double* a1 = a0 + k;
        const double* a2 = a1 + k;
        const double* a3 = a2 + k;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
            for (std::size_t kk = 0; kk < k; ++kk) {
                const double bv = brow[kk];
                s0 += a0[kk] * bv;
                s1 += a1[kk] * bv;
                s2 += a2[kk] * bv;
                s3 += a3[kk] * bv;
            }
            c[(i + 0) * n + j] += s0;
            c[(i + 1) * n + j] += s1;
            c[(i + 2) * n + j] += s2;
            c[(i + 3) * n + j] += s3;
        }
    }
    for (; i < m; ++i) {
        const double* arow = a + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double s = 0.0;
            for (std::size_t kk = 0; kk < k; ++kk) s += arow[kk] * brow[kk];
            c[i * n + j] += s;
        }
    }
}

const Backend& scalar_backend() {
    static const Backend backend{
        "scalar",    add_scalar,  sub_scalar,       mul_scalar,  scale_scalar,
        axpy_scalar, relu_scalar, relu_mask_scalar, gemm_scalar, gemm_tn_scalar,
        detail_gemm_nt,
    };
    return backend;
}

}  // namespace geez::kernels
