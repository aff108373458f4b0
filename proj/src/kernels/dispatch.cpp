#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "cnncap/kernels/kernels.hpp"

namespace cnncap::kernels {

namespace {

const detail::KernelTable* table_for(Isa isa)
{
    switch (isa) {
    case Isa::scalar:
        return &detail::scalar_table();
    case Isa::avx2:
        return detail::avx2_table();
    case Isa::avx512:
        return detail::avx512_table();
    }
    return nullptr;
}

bool cpu_has(Isa isa)
{
#if defined(__x86_64__) || defined(__i386__)
    __builtin_cpu_init();
    switch (isa) {
    case Isa::scalar:
        return true;
    case Isa::avx2:
        return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    case Isa::avx512:
        return __builtin_cpu_supports("avx512f") && __builtin_cpu_supports("avx512dq") &&
               __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    }
    return false;
#else
    return isa == Isa::scalar;
#endif
}

// CNNCAP_ISA=scalar|avx2|avx512 caps the startup choice.
Isa startup_isa()
{
    const char* env = std::getenv("CNNCAP_ISA");
    if (env == nullptr)
        return best_isa();
    for (Isa isa : {Isa::scalar, Isa::avx2, Isa::avx512})
        if (isa_name(isa) == env && cpu_has(isa))
            return isa;
    return best_isa();
}

std::atomic<Isa>& active_slot()
{
    static std::atomic<Isa> slot{startup_isa()};
    return slot;
}

const detail::KernelTable& active_table() { return *table_for(active_slot().load(std::memory_order_relaxed)); }

} // namespace

std::string_view isa_name(Isa isa)
{
    switch (isa) {
    case Isa::scalar:
        return "scalar";
    case Isa::avx2:
        return "avx2";
    case Isa::avx512:
        return "avx512";
    }
    return "unknown";
}

bool isa_supported(Isa isa) { return table_for(isa) != nullptr && cpu_has(isa); }

Isa best_isa()
{
    if (isa_supported(Isa::avx512))
        return Isa::avx512;
    if (isa_supported(Isa::avx2))
        return Isa::avx2;
    return Isa::scalar;
}

Isa active_isa() { return active_slot().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa)
{
    if (!isa_supported(isa))
        throw std::invalid_argument("kernel ISA not supported on this CPU: " + std::string(isa_name(isa)));
    active_slot().store(isa, std::memory_order_relaxed);
}

void sgemm(Trans ta, Trans tb, int m, int n, int k, const float* a, int lda, const float* b, int ldb,
           float beta, float* c, int ldc)
{
    active_table().sgemm(ta, tb, m, n, k, a, lda, b, ldb, beta, c, ldc);
}

double ddot(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size())
        throw std::invalid_argument("ddot: length mismatch");
    return active_table().ddot(x.data(), y.data(), x.size());
}

void daxpy(double alpha, std::span<const double> x, std::span<double> y)
{
    if (x.size() != y.size())
        throw std::invalid_argument("daxpy: length mismatch");
    active_table().daxpy(alpha, x.data(), y.data(), x.size());
}

void dxpby(std::span<const double> x, double beta, std::span<double> y)
{
    if (x.size() != y.size())
        throw std::invalid_argument("dxpby: length mismatch");
    active_table().dxpby(x.data(), beta, y.data(), x.size());
}

} // namespace cnncap::kernels
