#pragma once

// Grid-based 3-channel encoding of a cross-section and per-structure sample expansion.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cnncap/fieldsolver.hpp"
#include "cnncap/patgen.hpp"
#include "cnncap/tech.hpp"

namespace cnncap {

/// Channel order of every encoded feature: bottom, middle, top.
inline constexpr int kChannels = 3;
enum Channel : int { kBottom = 0, kMiddle = 1, kTop = 2 };

struct DensityMap {
    int L = 0;
    std::array<std::vector<double>, kChannels> ch; // coverage fractions in [0, 1]
};

enum class TaskKind : std::uint8_t { total = 0, coupling = 1 };

struct FeatureVector {
    int L = 0;
    TaskKind task = TaskKind::total;
    int env_id = -1;           // coupling only
    std::vector<float> values; // channel-major, kChannels * L

    float at(int channel, int i) const { return values[static_cast<std::size_t>(channel) * L + i]; }
    bool operator==(const FeatureVector&) const = default;
};

struct GridSample {
    FeatureVector x;
    double target = 0.0; // fF/um
    std::string structure_id;

    bool operator==(const GridSample&) const = default;
};

/// Channel of a conductor's layer within the structure's triple; throws DataError.
int channel_of(const Structure2D& s, int layer);

/// Exact coverage fractions. Throws DataError (naming the layer) unless the
/// cell size W/L is below s_min of each of the three layers.
DensityMap density_map(const TechFile& tech, const Structure2D& s, int L);

FeatureVector total_feature(const DensityMap& d, const Structure2D& s);
/// Throws DataError for the master, unknown ids or a ground id.
FeatureVector coupling_feature(const DensityMap& d, const Structure2D& s, int env_id);

/// One total sample, then one coupling sample per environment conductor with
/// coupling >= filter_ratio * total, ascending by env id.
std::vector<GridSample> expand_sample(const TechFile& tech, const Structure2D& s, const CapacitanceResult& label,
                                      int L, double filter_ratio = 0.01);

/// Pattern-B parameters (w1, w2, w3, w4, w5, x2, x3, x4, x5) in um, where
/// conductor k+1 is structure id k: master, left, right, bottom, top.
inline constexpr int kPatternBFeatures = 9;
std::array<double, kPatternBFeatures> mlp_feature_pattern_b(const Structure2D& s);
Structure2D pattern_b_from_features(const TechFile& tech, LayerTriple layers,
                                    const std::array<double, kPatternBFeatures>& f, std::string id = {});

/// Recovers maximal covered intervals [x0, x1) per channel from a density map
/// (exact when the cell size is below the minimum spacing).
std::vector<std::pair<double, double>> intervals_from_density(const std::vector<double>& d, double window_width);

} // namespace cnncap
