#include "cnncap/gridrep.hpp"

#include <algorithm>
#include <cmath>

#include "cnncap/error.hpp"

namespace cnncap {

namespace {

constexpr double kCellSnap = 1e-9;

double to_cells(double x, int L, double W)
{
    const double u = x * L / W;
    const double r = std::round(u);
    return std::abs(u - r) < kCellSnap ? r : u;
}

// Per-cell covered fraction of [x0, x1), added into `out`.
void add_coverage(double x0, double x1, int L, double W, std::vector<double>& out)
{
    const double u0 = std::clamp(to_cells(x0, L, W), 0.0, double(L));
    const double u1 = std::clamp(to_cells(x1, L, W), 0.0, double(L));
    if (!(u1 > u0))
        return;
    const int j0 = static_cast<int>(std::floor(u0));
    const int j1 = std::min(L, static_cast<int>(std::ceil(u1)));
    for (int j = j0; j < j1; ++j) {
        const double ov = std::min(u1, j + 1.0) - std::max(u0, double(j));
        if (ov > 0.0)
            out[j] += ov;
    }
}

std::vector<double> coverage_of(const Conductor& c, int L, double W)
{
    std::vector<double> v(L, 0.0);
    add_coverage(c.x_left, c.x_right(), L, W, v);
    return v;
}

FeatureVector base_feature(const DensityMap& d)
{
    FeatureVector f;
    f.L = d.L;
    f.values.resize(static_cast<std::size_t>(kChannels) * d.L);
    for (int c = 0; c < kChannels; ++c)
        for (int i = 0; i < d.L; ++i)
            f.values[static_cast<std::size_t>(c) * d.L + i] = static_cast<float>(d.ch[c][i]);
    return f;
}

void mark_master(const DensityMap& d, const Structure2D& s, FeatureVector& f)
{
    const auto& m = s.master();
    if (m.layer != s.layers.middle)
        throw DataError("structure '" + s.id + "': master is not on the middle layer");
    const auto cov = coverage_of(m, d.L, s.window_width);
    for (int i = 0; i < d.L; ++i)
        if (cov[i] > 0.0)
            f.values[static_cast<std::size_t>(kMiddle) * d.L + i] = static_cast<float>(d.ch[kMiddle][i] + 1.0);
}

} // namespace

int channel_of(const Structure2D& s, int layer)
{
    if (layer == s.layers.bottom)
        return kBottom;
    if (layer == s.layers.middle)
        return kMiddle;
    if (layer == s.layers.top)
        return kTop;
    throw DataError("structure '" + s.id + "': layer " + std::to_string(layer) + " is not in its layer triple");
}

DensityMap density_map(const TechFile& tech, const Structure2D& s, int L)
{
    if (L < 1)
        throw DataError("grid length L must be positive");
    const double cell = s.window_width / L;
    for (int layer : {s.layers.bottom, s.layers.middle, s.layers.top}) {
        const double s_min = tech.layer(layer).s_min;
        if (!(cell < s_min))
            throw DataError("grid cell " + std::to_string(cell) + " um is not below s_min " + std::to_string(s_min) +
                            " um of layer " + std::to_string(layer) + " (increase L)");
    }
    DensityMap d;
    d.L = L;
    for (auto& c : d.ch)
        c.assign(L, 0.0);
    for (const auto& c : s.conductors)
        add_coverage(c.x_left, c.x_right(), L, s.window_width, d.ch[channel_of(s, c.layer)]);
    for (auto& ch : d.ch)
        for (auto& v : ch)
            v = std::min(v, 1.0);
    return d;
}

FeatureVector total_feature(const DensityMap& d, const Structure2D& s)
{
    FeatureVector f = base_feature(d);
    f.task = TaskKind::total;
    mark_master(d, s, f);
    return f;
}

FeatureVector coupling_feature(const DensityMap& d, const Structure2D& s, int env_id)
{
    if (env_id < 0)
        throw DataError("ground not encodable");
    if (env_id == 0)
        throw DataError("coupling target must be an environment conductor, not the master");
    const auto& env = s.conductor(env_id);
    FeatureVector f = base_feature(d);
    f.task = TaskKind::coupling;
    f.env_id = env_id;
    mark_master(d, s, f);
    const int ch = channel_of(s, env.layer);
    const auto cov = coverage_of(env, d.L, s.window_width);
    for (int i = 0; i < d.L; ++i)
        if (cov[i] > 0.0)
            f.values[static_cast<std::size_t>(ch) * d.L + i] = static_cast<float>(-d.ch[ch][i]);
    return f;
}

std::vector<GridSample> expand_sample(const TechFile& tech, const Structure2D& s, const CapacitanceResult& label,
                                      int L, double filter_ratio)
{
    if (!(label.total > 0.0))
        throw DataError("structure '" + s.id + "': total capacitance label missing or non-positive");
    const DensityMap d = density_map(tech, s, L);
    std::vector<GridSample> out;
    out.push_back({total_feature(d, s), label.total, s.id});

    std::vector<int> env;
    for (const auto& c : s.conductors)
        if (c.id != 0)
            env.push_back(c.id);
    std::sort(env.begin(), env.end());
    for (int id : env) {
        const auto it = label.couplings.find(id);
        if (it == label.couplings.end())
            throw DataError("structure '" + s.id + "': missing coupling label for conductor " + std::to_string(id));
        if (it->second < filter_ratio * label.total)
            continue;
        out.push_back({coupling_feature(d, s, id), it->second, s.id});
    }
    return out;
}

std::array<double, kPatternBFeatures> mlp_feature_pattern_b(const Structure2D& s)
{
    if (s.pattern != Pattern::B)
        throw DataError("structure '" + s.id + "': 9-parameter features need a Pattern-B structure");
    if (s.conductor_count() != 5)
        throw DataError("structure '" + s.id + "': Pattern-B needs exactly 5 conductors");
    std::array<double, kPatternBFeatures> f{};
    for (int k = 0; k < 5; ++k)
        f[k] = s.conductor(k).width;
    for (int k = 1; k < 5; ++k)
        f[4 + k] = s.conductor(k).x_left;
    return f;
}

Structure2D pattern_b_from_features(const TechFile& tech, LayerTriple layers,
                                    const std::array<double, kPatternBFeatures>& f, std::string id)
{
    Structure2D s;
    s.id = std::move(id);
    s.pattern = Pattern::B;
    s.layers = layers;
    s.window_width = window_width(tech, layers.middle);
    s.has_substrate_ground = true;
    const int layer_of[5] = {layers.middle, layers.middle, layers.middle, layers.bottom, layers.top};
    s.conductors.push_back({0, layers.middle, 0.5 * (s.window_width - f[0]), f[0]});
    for (int k = 1; k < 5; ++k)
        s.conductors.push_back({k, layer_of[k], f[4 + k], f[k]});
    return s;
}

std::vector<std::pair<double, double>> intervals_from_density(const std::vector<double>& d, double window_width)
{
    const int L = static_cast<int>(d.size());
    const double cell = window_width / L;
    std::vector<std::pair<double, double>> out;
    int j = 0;
    while (j < L) {
        if (d[j] <= 0.0) {
            ++j;
            continue;
        }
        // A partial first cell is a left edge: wires are wider than a cell.
        const double start = j + (1.0 - d[j]);
        ++j;
        while (j < L && d[j] >= 1.0 - 1e-6)
            ++j;
        double end = j;
        if (j < L && d[j] > 0.0) {
            end = j + d[j];
            ++j;
        }
        out.emplace_back(start * cell, end * cell);
    }
    return out;
}

} // namespace cnncap
