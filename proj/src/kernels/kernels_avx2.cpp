// Compiled with -mavx2 -mfma -ffp-contract=off. Only reached through the
// dispatch table after a CPUID check.
#include "kernels_impl.hpp"

#include <immintrin.h>

#include <cmath>

namespace mve::kernels::avx2 {

namespace {

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d swapped = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, swapped));
}

// exp(x) for four lanes: range reduction x = n*ln2 + r with |r| <= ln2/2, a
// degree-12 Taylor polynomial for exp(r), then scaling by 2^n through the
// exponent bits. Relative error is a few ulp. Inputs below -708 return 0,
// above the double range return +inf, and NaN propagates.
inline __m256d exp_pd(__m256d x) {
    const __m256d lo = _mm256_set1_pd(-708.0);
    const __m256d hi = _mm256_set1_pd(709.782712893384);
    const __m256d xc = _mm256_min_pd(_mm256_max_pd(x, lo), hi);
    const __m256d n = _mm256_round_pd(_mm256_mul_pd(xc, _mm256_set1_pd(1.4426950408889634)),
                                      _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
    __m256d r = _mm256_fnmadd_pd(n, _mm256_set1_pd(6.93147180369123816490e-01), xc);
    r = _mm256_fnmadd_pd(n, _mm256_set1_pd(1.90821492927058770002e-10), r);

    __m256d p = _mm256_set1_pd(1.0 / 479001600.0);
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 39916800.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 3628800.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 362880.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 40320.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 5040.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 720.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 120.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 24.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 6.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(0.5));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));

    // 2^(n-1) keeps the biased exponent inside [1, 2046] for n in [-1021, 1024].
    const __m128i n32 = _mm256_cvtpd_epi32(_mm256_sub_pd(n, _mm256_set1_pd(1.0)));
    __m256i bits = _mm256_cvtepi32_epi64(n32);
    bits = _mm256_slli_epi64(_mm256_add_epi64(bits, _mm256_set1_epi64x(1023)), 52);
    __m256d result = _mm256_mul_pd(_mm256_mul_pd(p, _mm256_set1_pd(2.0)), _mm256_castsi256_pd(bits));

    result = _mm256_blendv_pd(result, _mm256_setzero_pd(), _mm256_cmp_pd(x, lo, _CMP_LT_OQ));
    result = _mm256_blendv_pd(result, _mm256_set1_pd(HUGE_VAL), _mm256_cmp_pd(x, hi, _CMP_GT_OQ));
    return _mm256_blendv_pd(result, x, _mm256_cmp_pd(x, x, _CMP_UNORD_Q));
}

}  // namespace

double sum(const double* x, std::size_t n) {
    std::size_t i = 0;
    __m256d acc = _mm256_setzero_pd();
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
    double s = hsum(acc);
    for (; i < n; ++i) s += x[i];
    return s;
}

void exp(const double* z, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) _mm256_storeu_pd(out + i, exp_pd(_mm256_loadu_pd(z + i)));
    if (i < n) {
        alignas(32) double buf[4] = {0.0, 0.0, 0.0, 0.0};
        for (std::size_t j = i; j < n; ++j) buf[j - i] = z[j];
        _mm256_store_pd(buf, exp_pd(_mm256_load_pd(buf)));
        for (std::size_t j = i; j < n; ++j) out[j] = buf[j - i];
    }
}

namespace {

inline __m256d elu_pd(__m256d z) {
    const __m256d zero = _mm256_setzero_pd();
    const __m256d neg = _mm256_sub_pd(exp_pd(_mm256_min_pd(z, zero)), _mm256_set1_pd(1.0));
    return _mm256_blendv_pd(neg, z, _mm256_cmp_pd(z, zero, _CMP_GT_OQ));
}

}  // namespace

void elu(const double* z, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) _mm256_storeu_pd(out + i, elu_pd(_mm256_loadu_pd(z + i)));
    if (i < n) {
        alignas(32) double buf[4] = {0.0, 0.0, 0.0, 0.0};
        for (std::size_t j = i; j < n; ++j) buf[j - i] = z[j];
        _mm256_store_pd(buf, elu_pd(_mm256_load_pd(buf)));
        for (std::size_t j = i; j < n; ++j) out[j] = buf[j - i];
    }
}

void elu_backward(const double* z, const double* out, double* delta, std::size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    const __m256d one = _mm256_set1_pd(1.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d vz = _mm256_loadu_pd(z + i);
        const __m256d slope =
            _mm256_blendv_pd(_mm256_add_pd(_mm256_loadu_pd(out + i), one), one, _mm256_cmp_pd(vz, zero, _CMP_GT_OQ));
        _mm256_storeu_pd(delta + i, _mm256_mul_pd(_mm256_loadu_pd(delta + i), slope));
    }
    for (; i < n; ++i) delta[i] *= z[i] > 0.0 ? 1.0 : out[i] + 1.0;
}

void mul(const double* x, double* y, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    }
    for (; i < n; ++i) y[i] *= x[i];
}

double dot(const double* a, const double* b, std::size_t n) {
    std::size_t i = 0;
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    }
    double s = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vy = _mm256_loadu_pd(y + i);
        vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
        _mm256_storeu_pd(y + i, vy);
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

double sum_squares(const double* x, std::size_t n) {
    std::size_t i = 0;
    __m256d acc = _mm256_setzero_pd();
    for (; i + 4 <= n; i += 4) {
        const __m256d v = _mm256_loadu_pd(x + i);
        acc = _mm256_fmadd_pd(v, v, acc);
    }
    double s = hsum(acc);
    for (; i < n; ++i) s += x[i] * x[i];
    return s;
}

void scale(double alpha, double* x, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(x + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
    }
    for (; i < n; ++i) x[i] *= alpha;
}

void gemm_nn(const double* W, std::size_t out, std::size_t in, const double* A, double* Z, std::size_t B) {
    for (std::size_t o = 0; o < out; ++o) {
        double* z = Z + o * B;
        const double* wrow = W + o * in;
        std::size_t b = 0;
        for (; b + 16 <= B; b += 16) {
            __m256d c0 = _mm256_loadu_pd(z + b);
            __m256d c1 = _mm256_loadu_pd(z + b + 4);
            __m256d c2 = _mm256_loadu_pd(z + b + 8);
            __m256d c3 = _mm256_loadu_pd(z + b + 12);
            for (std::size_t i = 0; i < in; ++i) {
                const __m256d w = _mm256_broadcast_sd(wrow + i);
                const double* a = A + i * B + b;
                c0 = _mm256_fmadd_pd(w, _mm256_loadu_pd(a), c0);
                c1 = _mm256_fmadd_pd(w, _mm256_loadu_pd(a + 4), c1);
                c2 = _mm256_fmadd_pd(w, _mm256_loadu_pd(a + 8), c2);
                c3 = _mm256_fmadd_pd(w, _mm256_loadu_pd(a + 12), c3);
            }
            _mm256_storeu_pd(z + b, c0);
            _mm256_storeu_pd(z + b + 4, c1);
            _mm256_storeu_pd(z + b + 8, c2);
            _mm256_storeu_pd(z + b + 12, c3);
        }
        for (; b + 4 <= B; b += 4) {
            __m256d c0 = _mm256_loadu_pd(z + b);
            for (std::size_t i = 0; i < in; ++i) {
                c0 = _mm256_fmadd_pd(_mm256_broadcast_sd(wrow + i), _mm256_loadu_pd(A + i * B + b), c0);
            }
            _mm256_storeu_pd(z + b, c0);
        }
        for (; b < B; ++b) {
            double acc = z[b];
            for (std::size_t i = 0; i < in; ++i) acc += wrow[i] * A[i * B + b];
            z[b] = acc;
        }
    }
}

void gemm_tn(const double* W, std::size_t out, std::size_t in, const double* D, double* A, std::size_t B) {
    for (std::size_t i = 0; i < in; ++i) {
        double* a = A + i * B;
        std::size_t b = 0;
        for (; b + 16 <= B; b += 16) {
            __m256d c0 = _mm256_loadu_pd(a + b);
            __m256d c1 = _mm256_loadu_pd(a + b + 4);
            __m256d c2 = _mm256_loadu_pd(a + b + 8);
            __m256d c3 = _mm256_loadu_pd(a + b + 12);
            for (std::size_t o = 0; o < out; ++o) {
                const __m256d w = _mm256_broadcast_sd(W + o * in + i);
                const double* d = D + o * B + b;
                c0 = _mm256_fmadd_pd(w, _mm256_loadu_pd(d), c0);
                c1 = _mm256_fmadd_pd(w, _mm256_loadu_pd(d + 4), c1);
                c2 = _mm256_fmadd_pd(w, _mm256_loadu_pd(d + 8), c2);
                c3 = _mm256_fmadd_pd(w, _mm256_loadu_pd(d + 12), c3);
            }
            _mm256_storeu_pd(a + b, c0);
            _mm256_storeu_pd(a + b + 4, c1);
            _mm256_storeu_pd(a + b + 8, c2);
            _mm256_storeu_pd(a + b + 12, c3);
        }
        for (; b + 4 <= B; b += 4) {
            __m256d c0 = _mm256_loadu_pd(a + b);
            for (std::size_t o = 0; o < out; ++o) {
                c0 = _mm256_fmadd_pd(_mm256_broadcast_sd(W + o * in + i), _mm256_loadu_pd(D + o * B + b), c0);
            }
            _mm256_storeu_pd(a + b, c0);
        }
        for (; b < B; ++b) {
            double acc = a[b];
            for (std::size_t o = 0; o < out; ++o) acc += W[o * in + i] * D[o * B + b];
            a[b] = acc;
        }
    }
}

void gemm_nt(double alpha, const double* D, std::size_t out, const double* A, std::size_t in, double* G,
             std::size_t B) {
    for (std::size_t o = 0; o < out; ++o) {
        const double* d = D + o * B;
        double* g = G + o * in;
        std::size_t i = 0;
        for (; i + 4 <= in; i += 4) {
            const double* a0 = A + i * B;
            const double* a1 = a0 + B;
            const double* a2 = a1 + B;
            const double* a3 = a2 + B;
            __m256d s0 = _mm256_setzero_pd();
            __m256d s1 = _mm256_setzero_pd();
            __m256d s2 = _mm256_setzero_pd();
            __m256d s3 = _mm256_setzero_pd();
            std::size_t b = 0;
            for (; b + 4 <= B; b += 4) {
                const __m256d vd = _mm256_loadu_pd(d + b);
                s0 = _mm256_fmadd_pd(vd, _mm256_loadu_pd(a0 + b), s0);
                s1 = _mm256_fmadd_pd(vd, _mm256_loadu_pd(a1 + b), s1);
                s2 = _mm256_fmadd_pd(vd, _mm256_loadu_pd(a2 + b), s2);
                s3 = _mm256_fmadd_pd(vd, _mm256_loadu_pd(a3 + b), s3);
            }
            double t0 = hsum(s0), t1 = hsum(s1), t2 = hsum(s2), t3 = hsum(s3);
            for (; b < B; ++b) {
                t0 += d[b] * a0[b];
                t1 += d[b] * a1[b];
                t2 += d[b] * a2[b];
                t3 += d[b] * a3[b];
            }
            g[i] += alpha * t0;
            g[i + 1] += alpha * t1;
            g[i + 2] += alpha * t2;
            g[i + 3] += alpha * t3;
        }
        for (; i < in; ++i) g[i] += alpha * dot(d, A + i * B, B);
    }
}

// Same operation order as the scalar reference and no FMA, so the result is
// bit-identical to it.
void adam_update(double* param, const double* grad, double* m, double* v, std::size_t n, double lr,
                 double beta1, double beta2, double eps, double bc1, double bc2) {
    const __m256d vb1 = _mm256_set1_pd(beta1);
    const __m256d vb2 = _mm256_set1_pd(beta2);
    const __m256d vc1 = _mm256_set1_pd(1.0 - beta1);
    const __m256d vc2 = _mm256_set1_pd(1.0 - beta2);
    const __m256d vbc1 = _mm256_set1_pd(bc1);
    const __m256d vbc2 = _mm256_set1_pd(bc2);
    const __m256d vlr = _mm256_set1_pd(lr);
    const __m256d veps = _mm256_set1_pd(eps);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d g = _mm256_loadu_pd(grad + i);
        __m256d mi = _mm256_add_pd(_mm256_mul_pd(vb1, _mm256_loadu_pd(m + i)), _mm256_mul_pd(vc1, g));
        __m256d vi = _mm256_add_pd(_mm256_mul_pd(vb2, _mm256_loadu_pd(v + i)),
                                   _mm256_mul_pd(vc2, _mm256_mul_pd(g, g)));
        _mm256_storeu_pd(m + i, mi);
        _mm256_storeu_pd(v + i, vi);
        const __m256d m_hat = _mm256_div_pd(mi, vbc1);
        const __m256d v_hat = _mm256_div_pd(vi, vbc2);
        const __m256d step =
            _mm256_div_pd(_mm256_mul_pd(vlr, m_hat), _mm256_add_pd(_mm256_sqrt_pd(v_hat), veps));
        _mm256_storeu_pd(param + i, _mm256_sub_pd(_mm256_loadu_pd(param + i), step));
    }
    const double c1 = 1.0 - beta1;
    const double c2 = 1.0 - beta2;
    for (; i < n; ++i) {
        const double g = grad[i];
        m[i] = beta1 * m[i] + c1 * g;
        v[i] = beta2 * v[i] + c2 * (g * g);
        param[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
    }
}

}  // namespace mve::kernels::avx2
