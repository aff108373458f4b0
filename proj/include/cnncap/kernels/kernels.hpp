#pragma once

// Dense arithmetic kernels with a scalar reference path and SIMD variants
// chosen at runtime from CPUID.

#include <cstddef>
#include <span>
#include <string_view>
#include <type_traits>

namespace cnncap::kernels {

enum class Isa { scalar, avx2, avx512 };

std::string_view isa_name(Isa isa);

/// True when the running CPU can execute kernels compiled for `isa`.
bool isa_supported(Isa isa);

/// Widest ISA the CPU supports (and the build contains).
Isa best_isa();

/// ISA currently used by the dispatching entry points. Defaults to best_isa().
Isa active_isa();

/// Forces a variant. Throws std::invalid_argument when the CPU lacks it.
void set_active_isa(Isa isa);

/// RAII override of the active ISA, mainly for equivalence tests.
class ScopedIsa {
public:
    explicit ScopedIsa(Isa isa) : saved_(active_isa()) { set_active_isa(isa); }
    ~ScopedIsa() { set_active_isa(saved_); }
    ScopedIsa(const ScopedIsa&) = delete;
    ScopedIsa& operator=(const ScopedIsa&) = delete;

private:
    Isa saved_;
};

enum class Trans : bool { no = false, yes = true };

/// Row-major GEMM: C[m x n] = op(A) * op(B) + beta * C.
/// op(A) is m x k; with Trans::yes, `a` holds a k x m matrix. Likewise for B.
/// For a fixed k, every output element is reduced in the same order no matter
/// where it sits in C, so results do not depend on m or n.
void sgemm(Trans ta, Trans tb, int m, int n, int k, const float* a, int lda, const float* b,
           int ldb, float beta, float* c, int ldc);

/// Straightforward triple loop. This is the reference every SIMD variant is
/// checked against, and the only path for double precision.
template <class T>
void gemm_reference(Trans ta, Trans tb, int m, int n, int k, const T* a, int lda, const T* b,
                    int ldb, T beta, T* c, int ldc)
{
    for (int i = 0; i < m; ++i) {
        T* crow = c + static_cast<std::ptrdiff_t>(i) * ldc;
        for (int j = 0; j < n; ++j)
            crow[j] = beta == T(0) ? T(0) : beta * crow[j];
        for (int p = 0; p < k; ++p) {
            const T av = ta == Trans::yes ? a[static_cast<std::ptrdiff_t>(p) * lda + i]
                                          : a[static_cast<std::ptrdiff_t>(i) * lda + p];
            if (av == T(0))
                continue;
            if (tb == Trans::yes) {
                for (int j = 0; j < n; ++j)
                    crow[j] += av * b[static_cast<std::ptrdiff_t>(j) * ldb + p];
            } else {
                const T* brow = b + static_cast<std::ptrdiff_t>(p) * ldb;
                for (int j = 0; j < n; ++j)
                    crow[j] += av * brow[j];
            }
        }
    }
}

/// Precision-generic front end: float goes through the dispatcher, anything
/// else through the reference loop.
template <class T>
inline void gemm(Trans ta, Trans tb, int m, int n, int k, const T* a, int lda, const T* b, int ldb,
                 T beta, T* c, int ldc)
{
    if constexpr (std::is_same_v<T, float>)
        sgemm(ta, tb, m, n, k, a, lda, b, ldb, beta, c, ldc);
    else
        gemm_reference(ta, tb, m, n, k, a, lda, b, ldb, beta, c, ldc);
}

double ddot(std::span<const double> x, std::span<const double> y);

/// y += alpha * x
void daxpy(double alpha, std::span<const double> x, std::span<double> y);

/// y = x + beta * y
void dxpby(std::span<const double> x, double beta, std::span<double> y);

namespace detail {

struct KernelTable {
    void (*sgemm)(Trans, Trans, int, int, int, const float*, int, const float*, int, float, float*,
                  int);
    double (*ddot)(const double*, const double*, std::size_t);
    void (*daxpy)(double, const double*, double*, std::size_t);
    void (*dxpby)(const double*, double, double*, std::size_t);
};

const KernelTable& scalar_table();
const KernelTable* avx2_table();   // nullptr when not compiled in
const KernelTable* avx512_table(); // nullptr when not compiled in

} // namespace detail

} // namespace cnncap::kernels
