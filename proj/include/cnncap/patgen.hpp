#pragma once

// Random, design-rule-clean 2-D cross-section structures (Pattern-A/B/C).

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cnncap/tech.hpp"

namespace cnncap {

enum class Pattern { A, B, C };

char pattern_letter(Pattern p);
/// Accepts "A"/"B"/"C" (case-insensitive); throws DataError otherwise.
Pattern parse_pattern(std::string_view s);

/// Metal layers of a pattern, bottom (k) to top (i); the master is on `middle`.
struct LayerTriple {
    int bottom = 0;
    int middle = 0;
    int top = 0;

    bool operator==(const LayerTriple&) const = default;
};

/// Parses "k,j,i".
LayerTriple parse_layer_triple(std::string_view s);

struct Conductor {
    int id = 0; // 0 is the master
    int layer = 0;
    double x_left = 0.0;
    double width = 0.0;

    double x_right() const { return x_left + width; }
    bool operator==(const Conductor&) const = default;
};

struct Structure2D {
    std::string id;
    Pattern pattern = Pattern::C;
    LayerTriple layers;
    double window_width = 0.0;
    std::vector<Conductor> conductors;
    bool has_substrate_ground = true;

    const Conductor& master() const;
    /// Throws DataError for an unknown id.
    const Conductor& conductor(int id) const;
    int conductor_count() const { return static_cast<int>(conductors.size()); }

    bool operator==(const Structure2D&) const = default;
};

/// Sampling parameters. Widths are w_min * (1 + E) with E ~ Exp(mean) capped at
/// `width_excess_cap`; spacings are s_min * (1 + E') with E' ~ Exp(mean).
struct GeneratorParams {
    double width_excess_mean = 1.5;
    double width_excess_cap = 9.0;
    double spacing_excess_mean = 2.0;
    int max_attempts = 100;
};

Structure2D generate_pattern_a(const TechFile& tech, LayerTriple layers, std::uint64_t seed,
                               std::string id = {}, const GeneratorParams& params = {});
Structure2D generate_pattern_b(const TechFile& tech, LayerTriple layers, std::uint64_t seed,
                               std::string id = {}, const GeneratorParams& params = {});
Structure2D generate_pattern_c(const TechFile& tech, LayerTriple layers, std::uint64_t seed,
                               std::string id = {}, const GeneratorParams& params = {});
Structure2D generate_pattern(Pattern p, const TechFile& tech, LayerTriple layers, std::uint64_t seed,
                             std::string id = {}, const GeneratorParams& params = {});

/// Per-structure seed for batch generation; decorrelates consecutive indices.
std::uint64_t derive_seed(std::uint64_t base_seed, std::uint64_t index);

struct Violation {
    std::string rule; // "min-width", "min-spacing", "master-centering", ...
    std::vector<int> conductor_ids;
    double measured = 0.0;
    double required = 0.0;

    std::string describe() const;
};

/// Empty iff every structural invariant and design rule holds.
std::vector<Violation> validate_structure(const TechFile& tech, const Structure2D& s);

/// Mirror image about the window centre (ids preserved).
Structure2D mirror_structure(const Structure2D& s);

/// One self-describing line:
/// `id pattern layers=(k,j,i) W=<um> ground=<0|1> cond=(id,layer,x,w);...`
std::string format_structure(const Structure2D& s);
Structure2D parse_structure(std::string_view line);

/// Structure files: one record per line, '#' lines are comments/provenance.
void write_structures(const std::filesystem::path& path, std::span<const Structure2D> structures,
                      std::string_view header_comment = {});
std::vector<Structure2D> read_structures(const std::filesystem::path& path);

} // namespace cnncap
