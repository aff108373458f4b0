#include "cnncap/kernels/kernels.hpp"

#if defined(CNNCAP_X86)

#include <immintrin.h>

#include "gemm_blocked.hpp"

#define CNNCAP_AVX512 __attribute__((target("avx512f,avx512dq,avx2,fma")))

namespace cnncap::kernels::detail {

namespace {

struct Avx512Kernel12x32 {
    static constexpr int MR = 12;
    static constexpr int NR = 32;

    CNNCAP_AVX512 static void run(int kc, const float* ap, const float* bp, float* c, std::ptrdiff_t ldc)
    {
        __m512 lo[MR];
        __m512 hi[MR];
#pragma GCC unroll 12
        for (int r = 0; r < MR; ++r) {
            lo[r] = _mm512_setzero_ps();
            hi[r] = _mm512_setzero_ps();
        }

        for (int p = 0; p < kc; ++p) {
            const __m512 b0 = _mm512_loadu_ps(bp);
            const __m512 b1 = _mm512_loadu_ps(bp + 16);
#pragma GCC unroll 12
            for (int r = 0; r < MR; ++r) {
                const __m512 a = _mm512_set1_ps(ap[r]);
                lo[r] = _mm512_fmadd_ps(a, b0, lo[r]);
                hi[r] = _mm512_fmadd_ps(a, b1, hi[r]);
            }
            ap += MR;
            bp += NR;
        }

#pragma GCC unroll 12
        for (int r = 0; r < MR; ++r) {
            float* row = c + r * ldc;
            _mm512_storeu_ps(row, _mm512_add_ps(_mm512_loadu_ps(row), lo[r]));
            _mm512_storeu_ps(row + 16, _mm512_add_ps(_mm512_loadu_ps(row + 16), hi[r]));
        }
    }
};

void sgemm_avx512(Trans ta, Trans tb, int m, int n, int k, const float* a, int lda, const float* b,
                  int ldb, float beta, float* c, int ldc)
{
    gemm_blocked<Avx512Kernel12x32, 256, 96, 4096>(ta, tb, m, n, k, a, lda, b, ldb, beta, c, ldc);
}

CNNCAP_AVX512 double ddot_avx512(const double* x, const double* y, std::size_t n)
{
    __m512d s0 = _mm512_setzero_pd(), s1 = _mm512_setzero_pd();
    std::size_t i = 0;
    for (; i + 16 <= n; i += 16) {
        s0 = _mm512_fmadd_pd(_mm512_loadu_pd(x + i), _mm512_loadu_pd(y + i), s0);
        s1 = _mm512_fmadd_pd(_mm512_loadu_pd(x + i + 8), _mm512_loadu_pd(y + i + 8), s1);
    }
    double s = _mm512_reduce_add_pd(_mm512_add_pd(s0, s1));
    for (; i < n; ++i)
        s += x[i] * y[i];
    return s;
}

CNNCAP_AVX512 void daxpy_avx512(double alpha, const double* x, double* y, std::size_t n)
{
    const __m512d va = _mm512_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm512_storeu_pd(y + i, _mm512_fmadd_pd(va, _mm512_loadu_pd(x + i), _mm512_loadu_pd(y + i)));
    for (; i < n; ++i)
        y[i] += alpha * x[i];
}

CNNCAP_AVX512 void dxpby_avx512(const double* x, double beta, double* y, std::size_t n)
{
    const __m512d vb = _mm512_set1_pd(beta);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm512_storeu_pd(y + i, _mm512_fmadd_pd(vb, _mm512_loadu_pd(y + i), _mm512_loadu_pd(x + i)));
    for (; i < n; ++i)
        y[i] = x[i] + beta * y[i];
}

} // namespace

const KernelTable* avx512_table()
{
    static const KernelTable table{sgemm_avx512, ddot_avx512, daxpy_avx512, dxpby_avx512};
    return &table;
}

} // namespace cnncap::kernels::detail

#else

namespace cnncap::kernels::detail {
const KernelTable* avx512_table() { return nullptr; }
} // namespace cnncap::kernels::detail

#endif
