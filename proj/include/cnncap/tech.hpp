#pragma once

// Process-technology description: metal layer geometry and the dielectric stack.

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace cnncap {

/// One routing layer. Lengths in micrometres; z is measured from the substrate.
struct MetalLayerSpec {
    int index = 0;
    double thickness = 0.0;
    double w_min = 0.0;
    double s_min = 0.0;
    double z_bottom = 0.0;

    double z_top() const { return z_bottom + thickness; }
    bool operator==(const MetalLayerSpec&) const = default;
};

struct DielectricSlab {
    double z_bottom = 0.0;
    double z_top = 0.0;
    double eps_r = 1.0;

    bool operator==(const DielectricSlab&) const = default;
};

/// Immutable after load; share freely across threads.
struct TechFile {
    std::string name;
    std::vector<MetalLayerSpec> layers;      // sorted by index
    std::vector<DielectricSlab> dielectrics; // sorted by z, tiling [0, z_max]

    bool has_layer(int index) const;
    /// Throws DataError for an unknown index.
    const MetalLayerSpec& layer(int index) const;
    double z_max() const;
    /// Relative permittivity at height z (the upper slab wins on a boundary).
    double eps_at(double z) const;

    bool operator==(const TechFile&) const = default;
};

/// Parses the line-oriented tech format. Errors carry `source:line:`.
TechFile parse_techfile(std::string_view text, std::string_view source = "<memory>");
TechFile load_techfile(const std::filesystem::path& path);

/// Shortest round-trip formatting: parse(format(t)) == t bit for bit.
std::string format_techfile(const TechFile& tech);
void save_techfile(const TechFile& tech, const std::filesystem::path& path);

/// Checks every invariant and throws DataError naming the offending layer or slab.
void validate_techfile(const TechFile& tech);

/// Extraction window multiplier applied to the master layer's minimum width.
inline constexpr double kWindowWidthFactor = 56.0;

/// Fixed window width: 56 x w_min of the master layer.
double window_width(const TechFile& tech, int master_layer);

/// Coupling-to-total ratio of a lone same-layer neighbour whose near edge sits
/// `offset_wmin` minimum widths from the master centre.
using NeighbourRatioProbe = std::function<double(double offset_wmin)>;

struct WindowCalibration {
    double half_width_wmin = 0.0; // smallest offset with ratio <= threshold
    double window_width = 0.0;    // 2 * half_width_wmin * w_min, in um
    int probes = 0;
};

/// Bisects the neighbour offset until the coupling ratio drops to `threshold`.
/// The probe is usually backed by the field solver (see make_window_probe).
WindowCalibration calibrate_window(const TechFile& tech, int master_layer,
                                   const NeighbourRatioProbe& probe, double threshold = 0.01,
                                   double resolution_wmin = 0.25);

} // namespace cnncap
