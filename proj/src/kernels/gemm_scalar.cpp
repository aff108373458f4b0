#include "cnncap/kernels/kernels.hpp"

namespace cnncap::kernels::detail {

namespace {

void sgemm_scalar(Trans ta, Trans tb, int m, int n, int k, const float* a, int lda, const float* b,
                  int ldb, float beta, float* c, int ldc)
{
    gemm_reference<float>(ta, tb, m, n, k, a, lda, b, ldb, beta, c, ldc);
}

double ddot_scalar(const double* x, const double* y, std::size_t n)
{
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        s += x[i] * y[i];
    return s;
}

void daxpy_scalar(double alpha, const double* x, double* y, std::size_t n)
{
    for (std::size_t i = 0; i < n; ++i)
        y[i] += alpha * x[i];
}

void dxpby_scalar(const double* x, double beta, double* y, std::size_t n)
{
    for (std::size_t i = 0; i < n; ++i)
        y[i] = x[i] + beta * y[i];
}

} // namespace

const KernelTable& scalar_table()
{
    static const KernelTable table{sgemm_scalar, ddot_scalar, daxpy_scalar, dxpby_scalar};
    return table;
}

} // namespace cnncap::kernels::detail
