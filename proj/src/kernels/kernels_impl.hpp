#pragma once
// Per-ISA kernel entry points. Internal to the kernels library.

#include <cstddef>

namespace mve::kernels::scalar {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
double sum_squares(const double* x, std::size_t n);
void scale(double alpha, double* x, std::size_t n);
double sum(const double* x, std::size_t n);
void elu(const double* z, double* out, std::size_t n);
void exp(const double* z, double* out, std::size_t n);
void elu_backward(const double* z, const double* out, double* delta, std::size_t n);
void mul(const double* x, double* y, std::size_t n);
void gemm_nn(const double* W, std::size_t out, std::size_t in, const double* A, double* Z, std::size_t B);
void gemm_tn(const double* W, std::size_t out, std::size_t in, const double* D, double* A, std::size_t B);
void gemm_nt(double alpha, const double* D, std::size_t out, const double* A, std::size_t in, double* G,
             std::size_t B);
void adam_update(double* param, const double* grad, double* m, double* v, std::size_t n, double lr,
                 double beta1, double beta2, double eps, double bc1, double bc2);
}  // namespace mve::kernels::scalar

#if defined(MVE_HAVE_AVX2)
namespace mve::kernels::avx2 {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
double sum_squares(const double* x, std::size_t n);
void scale(double alpha, double* x, std::size_t n);
double sum(const double* x, std::size_t n);
void elu(const double* z, double* out, std::size_t n);
void exp(const double* z, double* out, std::size_t n);
void elu_backward(const double* z, const double* out, double* delta, std::size_t n);
void mul(const double* x, double* y, std::size_t n);
void gemm_nn(const double* W, std::size_t out, std::size_t in, const double* A, double* Z, std::size_t B);
void gemm_tn(const double* W, std::size_t out, std::size_t in, const double* D, double* A, std::size_t B);
void gemm_nt(double alpha, const double* D, std::size_t out, const double* A, std::size_t in, double* G,
             std::size_t B);
void adam_update(double* param, const double* grad, double* m, double* v, std::size_t n, double lr,
                 double beta1, double beta2, double eps, double bc1, double bc2);
}  // namespace mve::kernels::avx2
#endif
