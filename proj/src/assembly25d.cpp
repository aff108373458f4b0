#include "cnncap/assembly25d.hpp"

#include <cmath>

#include "cnncap/error.hpp"

namespace cnncap {

double cross_section_total(const CrossSectionCaps& c)
{
    if (!(c.fringe_left >= 0.0 && c.overlap >= 0.0 && c.fringe_right >= 0.0))
        throw DataError("cross-section components must be non-negative");
    return c.fringe_left + c.overlap + c.fringe_right;
}

double assemble_crossover(const CrossSectionCaps& a, const CrossSectionCaps& b, double w1, double w2)
{
    if (!(w1 > 0.0 && w2 > 0.0) || !std::isfinite(w1) || !std::isfinite(w2))
        throw DataError("wire widths must be positive");
    const double ca = cross_section_total(a);
    const double cb = cross_section_total(b);
    return ca * w1 + (cb - b.overlap) * w2;
}

} // namespace cnncap
