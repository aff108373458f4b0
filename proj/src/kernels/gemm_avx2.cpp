#include "cnncap/kernels/kernels.hpp"

#if defined(CNNCAP_X86)

#include <immintrin.h>

#include "gemm_blocked.hpp"

// Only the functions below are compiled for AVX2; the rest of this unit (and
// every inline library function it instantiates) stays baseline x86-64.
#define CNNCAP_AVX2 __attribute__((target("avx2,fma")))

namespace cnncap::kernels::detail {

namespace {

struct Avx2Kernel6x16 {
    static constexpr int MR = 6;
    static constexpr int NR = 16;

    CNNCAP_AVX2 static void run(int kc, const float* ap, const float* bp, float* c, std::ptrdiff_t ldc)
    {
        __m256 c00 = _mm256_setzero_ps(), c01 = _mm256_setzero_ps();
        __m256 c10 = _mm256_setzero_ps(), c11 = _mm256_setzero_ps();
        __m256 c20 = _mm256_setzero_ps(), c21 = _mm256_setzero_ps();
        __m256 c30 = _mm256_setzero_ps(), c31 = _mm256_setzero_ps();
        __m256 c40 = _mm256_setzero_ps(), c41 = _mm256_setzero_ps();
        __m256 c50 = _mm256_setzero_ps(), c51 = _mm256_setzero_ps();

        for (int p = 0; p < kc; ++p) {
            const __m256 b0 = _mm256_loadu_ps(bp);
            const __m256 b1 = _mm256_loadu_ps(bp + 8);
            __m256 a;
            a = _mm256_broadcast_ss(ap + 0);
            c00 = _mm256_fmadd_ps(a, b0, c00);
            c01 = _mm256_fmadd_ps(a, b1, c01);
            a = _mm256_broadcast_ss(ap + 1);
            c10 = _mm256_fmadd_ps(a, b0, c10);
            c11 = _mm256_fmadd_ps(a, b1, c11);
            a = _mm256_broadcast_ss(ap + 2);
            c20 = _mm256_fmadd_ps(a, b0, c20);
            c21 = _mm256_fmadd_ps(a, b1, c21);
            a = _mm256_broadcast_ss(ap + 3);
            c30 = _mm256_fmadd_ps(a, b0, c30);
            c31 = _mm256_fmadd_ps(a, b1, c31);
            a = _mm256_broadcast_ss(ap + 4);
            c40 = _mm256_fmadd_ps(a, b0, c40);
            c41 = _mm256_fmadd_ps(a, b1, c41);
            a = _mm256_broadcast_ss(ap + 5);
            c50 = _mm256_fmadd_ps(a, b0, c50);
            c51 = _mm256_fmadd_ps(a, b1, c51);
            ap += MR;
            bp += NR;
        }

        flush(c, c00, c01);
        flush(c + ldc, c10, c11);
        flush(c + 2 * ldc, c20, c21);
        flush(c + 3 * ldc, c30, c31);
        flush(c + 4 * ldc, c40, c41);
        flush(c + 5 * ldc, c50, c51);
    }

    CNNCAP_AVX2 static void flush(float* row, __m256 lo, __m256 hi)
    {
        _mm256_storeu_ps(row, _mm256_add_ps(_mm256_loadu_ps(row), lo));
        _mm256_storeu_ps(row + 8, _mm256_add_ps(_mm256_loadu_ps(row + 8), hi));
    }
};

void sgemm_avx2(Trans ta, Trans tb, int m, int n, int k, const float* a, int lda, const float* b,
                int ldb, float beta, float* c, int ldc)
{
    gemm_blocked<Avx2Kernel6x16, 256, 96, 2048>(ta, tb, m, n, k, a, lda, b, ldb, beta, c, ldc);
}

CNNCAP_AVX2 double ddot_avx2(const double* x, const double* y, std::size_t n)
{
    __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
        s1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), s1);
    }
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, _mm256_add_pd(s0, s1));
    double s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
    for (; i < n; ++i)
        s += x[i] * y[i];
    return s;
}

CNNCAP_AVX2 void daxpy_avx2(double alpha, const double* x, double* y, std::size_t n)
{
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    for (; i < n; ++i)
        y[i] += alpha * x[i];
}

CNNCAP_AVX2 void dxpby_avx2(const double* x, double beta, double* y, std::size_t n)
{
    const __m256d vb = _mm256_set1_pd(beta);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(vb, _mm256_loadu_pd(y + i), _mm256_loadu_pd(x + i)));
    for (; i < n; ++i)
        y[i] = x[i] + beta * y[i];
}

} // namespace

const KernelTable* avx2_table()
{
    static const KernelTable table{sgemm_avx2, ddot_avx2, daxpy_avx2, dxpby_avx2};
    return &table;
}

} // namespace cnncap::kernels::detail

#else

namespace cnncap::kernels::detail {
const KernelTable* avx2_table() { return nullptr; }
} // namespace cnncap::kernels::detail

#endif
