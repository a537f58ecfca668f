#pragma once
// Dense arithmetic kernels used by the network code.
//
// Every kernel has a portable scalar reference implementation and, on x86-64,
// an AVX2/FMA variant. The variant is selected once at runtime from the CPU
// feature set; MVE_FORCE_SCALAR=1 in the environment pins the scalar table.

#include <cstddef>
#include <string_view>

namespace mve::kernels {

enum class Isa { Scalar, Avx2 };

struct KernelTable {
    Isa isa;
    // sum_i a[i] * b[i]
    double (*dot)(const double* a, const double* b, std::size_t n);
    // y[i] += alpha * x[i]
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    // sum_i x[i]^2
    double (*sum_squares)(const double* x, std::size_t n);
    // x[i] *= alpha
    void (*scale)(double alpha, double* x, std::size_t n);
    // sum_i x[i]
    double (*sum)(const double* x, std::size_t n);
    // out[i] = z[i] > 0 ? z[i] : exp(z[i]) - 1
    void (*elu)(const double* z, double* out, std::size_t n);
    // out[i] = exp(z[i])
    void (*exp)(const double* z, double* out, std::size_t n);
    // delta[i] *= (z[i] > 0 ? 1 : out[i] + 1), the ELU derivative
    void (*elu_backward)(const double* z, const double* out, double* delta, std::size_t n);
    // y[i] *= x[i]
    void (*mul)(const double* x, double* y, std::size_t n);
    // Small dense products on feature-major blocks (row stride = cols):
    // gemm_nn: Z[o][b] += sum_i W[o][i] * A[i][b]     W: out x in, A: in x B
    void (*gemm_nn)(const double* W, std::size_t out, std::size_t in, const double* A, double* Z, std::size_t B);
    // gemm_tn: A[i][b] += sum_o W[o][i] * D[o][b]     (W transposed)
    void (*gemm_tn)(const double* W, std::size_t out, std::size_t in, const double* D, double* A, std::size_t B);
    // gemm_nt: G[o][i] += alpha * sum_b D[o][b] * A[i][b]
    void (*gemm_nt)(double alpha, const double* D, std::size_t out, const double* A, std::size_t in, double* G,
                    std::size_t B);
    // One bias-corrected Adam update over a contiguous parameter block.
    // bc1 = 1 - beta1^t, bc2 = 1 - beta2^t.
    void (*adam_update)(double* param, const double* grad, double* m, double* v, std::size_t n,
                        double lr, double beta1, double beta2, double eps, double bc1, double bc2);
};

const KernelTable& scalar_table();

// nullptr when the binary was built without AVX2 support or the CPU lacks it.
const KernelTable* avx2_table();

// The table chosen for this process.
const KernelTable& active();

// Override the runtime choice (tests and benchmarking). Falls back to scalar
// when the requested ISA is unavailable; returns the ISA actually installed.
Isa select(Isa isa);

std::string_view isa_name(Isa isa);

}  // namespace mve::kernels
