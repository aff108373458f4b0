#pragma once

// 2.5-D crossover assembly from two perpendicular cross-section solves.

namespace cnncap {

struct CrossSectionCaps {
    double fringe_left = 0.0;  // fF/um
    double overlap = 0.0;      // fF/um
    double fringe_right = 0.0; // fF/um
};

/// fringe_left + overlap + fringe_right; throws DataError on a negative component.
double cross_section_total(const CrossSectionCaps& c);

/// C = C_A * w1 + (C_B - C_B.overlap) * w2, in fF for widths in um.
/// Throws DataError on a non-positive width or negative component.
double assemble_crossover(const CrossSectionCaps& a, const CrossSectionCaps& b, double w1, double w2);

} // namespace cnncap
