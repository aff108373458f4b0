#pragma once

// Cache-blocked GEMM driver shared by the SIMD translation units. Each unit
// instantiates it with a microkernel type declared in its own anonymous
// namespace, so the instantiations never merge across ISA-specific objects.

#include <algorithm>
#include <cstddef>
#include <cstring>
#include <vector>

#include "cnncap/kernels/kernels.hpp"

namespace cnncap::kernels::detail {

// Ukr must provide: MR, NR (ints) and
//   static void run(int kc, const float* ap, const float* bp, float* c, std::ptrdiff_t ldc);
// which computes acc = sum_p ap[p*MR + r] * bp[p*NR + j] starting from zero and
// then adds acc into c. Accumulating from zero keeps full tiles and padded edge
// tiles numerically identical.
template <class Ukr, int KC, int MC, int NC>
void gemm_blocked(Trans ta, Trans tb, int m, int n, int k, const float* a, int lda, const float* b,
                  int ldb, float beta, float* c, int ldc)
{
    constexpr int MR = Ukr::MR;
    constexpr int NR = Ukr::NR;
    static_assert(MC % MR == 0 && NC % NR == 0);

    for (int i = 0; i < m; ++i) {
        float* row = c + static_cast<std::ptrdiff_t>(i) * ldc;
        if (beta == 0.0f)
            std::fill(row, row + n, 0.0f);
        else if (beta != 1.0f)
            for (int j = 0; j < n; ++j)
                row[j] *= beta;
    }
    if (k == 0 || m == 0 || n == 0)
        return;

    thread_local std::vector<float> apack;
    thread_local std::vector<float> bpack;
    apack.resize(static_cast<std::size_t>(MC) * KC);
    bpack.resize(static_cast<std::size_t>(KC) * NC);
    alignas(64) float edge[MR * NR];

    for (int jc = 0; jc < n; jc += NC) {
        const int nc = std::min(NC, n - jc);
        for (int pc = 0; pc < k; pc += KC) {
            const int kc = std::min(KC, k - pc);

            // B block (kc x nc) -> NR-wide column panels, zero padded.
            for (int jr = 0; jr < nc; jr += NR) {
                float* dst = bpack.data() + static_cast<std::size_t>(jr) * kc;
                const int nr = std::min(NR, nc - jr);
                for (int p = 0; p < kc; ++p) {
                    float* d = dst + static_cast<std::size_t>(p) * NR;
                    if (tb == Trans::no) {
                        const float* src =
                            b + static_cast<std::ptrdiff_t>(pc + p) * ldb + (jc + jr);
                        std::memcpy(d, src, sizeof(float) * nr);
                    } else {
                        for (int j = 0; j < nr; ++j)
                            d[j] = b[static_cast<std::ptrdiff_t>(jc + jr + j) * ldb + (pc + p)];
                    }
                    for (int j = nr; j < NR; ++j)
                        d[j] = 0.0f;
                }
            }

            for (int ic = 0; ic < m; ic += MC) {
                const int mc = std::min(MC, m - ic);

                // A block (mc x kc) -> MR-tall row panels, zero padded.
                for (int ir = 0; ir < mc; ir += MR) {
                    float* dst = apack.data() + static_cast<std::size_t>(ir) * kc;
                    const int mr = std::min(MR, mc - ir);
                    if (ta == Trans::no) {
                        for (int r = 0; r < mr; ++r) {
                            const float* src = a + static_cast<std::ptrdiff_t>(ic + ir + r) * lda + pc;
                            for (int p = 0; p < kc; ++p)
                                dst[static_cast<std::size_t>(p) * MR + r] = src[p];
                        }
                    } else {
                        for (int p = 0; p < kc; ++p) {
                            const float* src = a + static_cast<std::ptrdiff_t>(pc + p) * lda + (ic + ir);
                            float* d = dst + static_cast<std::size_t>(p) * MR;
                            std::memcpy(d, src, sizeof(float) * mr);
                        }
                    }
                    if (mr < MR)
                        for (int p = 0; p < kc; ++p)
                            for (int r = mr; r < MR; ++r)
                                dst[static_cast<std::size_t>(p) * MR + r] = 0.0f;
                }

                for (int jr = 0; jr < nc; jr += NR) {
                    const int nr = std::min(NR, nc - jr);
                    const float* bp = bpack.data() + static_cast<std::size_t>(jr) * kc;
                    for (int ir = 0; ir < mc; ir += MR) {
                        const int mr = std::min(MR, mc - ir);
                        const float* ap = apack.data() + static_cast<std::size_t>(ir) * kc;
                        float* ctile =
                            c + static_cast<std::ptrdiff_t>(ic + ir) * ldc + (jc + jr);
                        if (mr == MR && nr == NR) {
                            Ukr::run(kc, ap, bp, ctile, ldc);
                        } else {
                            std::fill(edge, edge + MR * NR, 0.0f);
                            Ukr::run(kc, ap, bp, edge, NR);
                            for (int r = 0; r < mr; ++r)
                                for (int j = 0; j < nr; ++j)
                                    ctile[static_cast<std::ptrdiff_t>(r) * ldc + j] += edge[r * NR + j];
                        }
                    }
                }
            }
        }
    }
}

} // namespace cnncap::kernels::detail
