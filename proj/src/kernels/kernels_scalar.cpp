#include "kernels_impl.hpp"

#include <cmath>

namespace mve::kernels::scalar {

double dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double sum_squares(const double* x, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i] * x[i];
    return s;
}

void scale(double alpha, double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

double sum(const double* x, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
}

void elu(const double* z, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = z[i] > 0.0 ? z[i] : std::expm1(z[i]);
}

void exp(const double* z, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(z[i]);
}

void elu_backward(const double* z, const double* out, double* delta, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) delta[i] *= z[i] > 0.0 ? 1.0 : out[i] + 1.0;
}

void mul(const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] *= x[i];
}

void gemm_nn(const double* W, std::size_t out, std::size_t in, const double* A, double* Z, std::size_t B) {
    for (std::size_t o = 0; o < out; ++o) {
        double* z = Z + o * B;
        for (std::size_t i = 0; i < in; ++i) {
            const double w = W[o * in + i];
            const double* a = A + i * B;
            for (std::size_t b = 0; b < B; ++b) z[b] += w * a[b];
        }
    }
}

void gemm_tn(const double* W, std::size_t out, std::size_t in, const double* D, double* A, std::size_t B) {
    for (std::size_t i = 0; i < in; ++i) {
        double* a = A + i * B;
        for (std::size_t o = 0; o < out; ++o) {
            const double w = W[o * in + i];
            const double* d = D + o * B;
            for (std::size_t b = 0; b < B; ++b) a[b] += w * d[b];
        }
    }
}

void gemm_nt(double alpha, const double* D, std::size_t out, const double* A, std::size_t in, double* G,
             std::size_t B) {
    for (std::size_t o = 0; o < out; ++o) {
        for (std::size_t i = 0; i < in; ++i) G[o * in + i] += alpha * dot(D + o * B, A + i * B, B);
    }
}

void adam_update(double* param, const double* grad, double* m, double* v, std::size_t n, double lr,
                 double beta1, double beta2, double eps, double bc1, double bc2) {
    const double c1 = 1.0 - beta1;
    const double c2 = 1.0 - beta2;
    for (std::size_t i = 0; i < n; ++i) {
        const double g = grad[i];
        m[i] = beta1 * m[i] + c1 * g;
        v[i] = beta2 * v[i] + c2 * (g * g);
        const double m_hat = m[i] / bc1;
        const double v_hat = v[i] / bc2;
        param[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
}

}  // namespace mve::kernels::scalar
