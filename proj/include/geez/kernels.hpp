#pragma once

#include <cstddef>

namespace geez::kernels {

// Data-parallel inner loops behind the tensor ops. Each function has a scalar
// reference implementation and may have wider variants. Variants are required
// to be bit-identical to the reference: they vectorize across independent
// output elements and keep the per-element operation order unchanged, so the
// selected backend never affects numerics. Reductions that cannot preserve
// order stay out of this table.
struct Backend {
    const char* name;

    void (*add)(const double* a, const double* b, double* out, std::size_t n);
    void (*sub)(const double* a, const double* b, double* out, std::size_t n);
    void (*mul)(const double* a, const double* b, double* out, std::size_t n);
    void (*scale)(const double* x, double c, double* out, std::size_t n);
    // y += a * x
    void (*axpy)(double a, const double* x, double* y, std::size_t n);
    void (*relu)(const double* x, double* out, std::size_t n);
    // out = x > 0 ? g : 0
    void (*relu_mask)(const double* x, const double* g, double* out, std::size_t n);
    // c (m×n, row-major) += a (m×k) · b (k×n). Caller zeroes c for a plain
    // product. Accumulation order per output element is k ascending.
    void (*gemm)(const double* a, const double* b, double* c,
                 std::size_t m, std::size_t k, std::size_t n);
    // c (m×n) += aᵀ·b with a stored (k×m); avoids materializing transposes in
    // backward passes. Same per-element k order as gemm.
    void (*gemm_tn)(const double* a, const double* b, double* c,
                    std::size_t m, std::size_t k, std::size_t n);
    // c (m×n) += a·bᵀ with b stored (n×k). Dot-product shaped; kept scalar in
    // every backend (vector variants would reorder the reduction).
    void (*gemm_nt)(const double* a, const double* b, double* c,
                    std::size_t m, std::size_t k, std::size_t n);
};

const Backend& scalar_backend();

// Reference a·bᵀ kernel shared by every backend (see Backend::gemm_nt).
void detail_gemm_nt(const double* a, const double* b, double* c,
                    std::size_t m, std::size_t k, std::size_t n);

bool avx2_available();
// Valid only when avx2_available(); falls back to scalar otherwise.
const Backend& avx2_backend();

// Backend selected once at first use: AVX2 when the CPU supports it, scalar
// otherwise. Override with GEEZ_KERNELS=scalar|avx2.
const Backend& active();

}  // namespace geez::kernels
