#include "cnncap/patgen.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "cnncap/error.hpp"
#include "cnncap/rng.hpp"
#include "cnncap/textio.hpp"

namespace cnncap {

namespace {

// Geometric slack for rule checks, um.
constexpr double kGeomTol = 1e-9;

class Sampler {
public:
    Sampler(const TechFile& tech, std::uint64_t seed, const GeneratorParams& params)
        : tech_(tech), rng_(seed), params_(params)
    {
    }

    double width(int layer)
    {
        const double w_min = tech_.layer(layer).w_min;
        double e;
        do {
            e = rng_.exponential(params_.width_excess_mean);
        } while (e > params_.width_excess_cap);
        return w_min * (1.0 + e);
    }

    double spacing(int layer)
    {
        return tech_.layer(layer).s_min * (1.0 + rng_.exponential(params_.spacing_excess_mean));
    }

    Rng& rng() { return rng_; }

private:
    const TechFile& tech_;
    Rng rng_;
    GeneratorParams params_;
};

void check_triple(const TechFile& tech, LayerTriple t)
{
    for (int l : {t.bottom, t.middle, t.top})
        if (!tech.has_layer(l))
            throw DataError("layer triple references unknown layer " + std::to_string(l));
    if (!(t.bottom < t.middle && t.middle < t.top))
        throw DataError("layer triple must satisfy bottom < middle < top");
}

Structure2D skeleton(const TechFile& tech, Pattern p, LayerTriple layers, std::string id,
                     std::uint64_t seed)
{
    check_triple(tech, layers);
    Structure2D s;
    s.id = id.empty() ? std::string(1, pattern_letter(p)) + "_" + std::to_string(seed) : std::move(id);
    s.pattern = p;
    s.layers = layers;
    s.window_width = window_width(tech, layers.middle);
    return s;
}

struct MiddleRow {
    Conductor master;
    Conductor left;
    Conductor right;
};

// Master centred, one neighbour on each side. With `symmetric` the right
// neighbour mirrors the left one exactly.
bool place_middle(Sampler& smp, const TechFile& tech, int layer, double W, bool symmetric, MiddleRow& out)
{
    (void)tech;
    const double w1 = smp.width(layer);
    const double xm = 0.5 * (W - w1);
    const double wl = smp.width(layer);
    const double sl = smp.spacing(layer);
    const double wr = symmetric ? wl : smp.width(layer);
    const double sr = symmetric ? sl : smp.spacing(layer);

    const double xl = xm - sl - wl;
    if (xl < 0.0)
        return false;
    double xr;
    if (symmetric) {
        xr = W - xl - wl;
    } else {
        xr = xm + w1 + sr;
        if (xr + wr > W)
            return false;
    }
    out.master = {0, layer, xm, w1};
    out.left = {1, layer, xl, wl};
    out.right = {2, layer, xr, wr};
    return true;
}

// `count` wires left to right on one layer from a uniform random offset.
bool place_row(Sampler& smp, const TechFile& tech, int layer, int count, double W, int first_id,
               std::vector<Conductor>& out)
{
    (void)tech;
    std::vector<double> widths(count), gaps(count > 0 ? count - 1 : 0);
    double span = 0.0;
    for (int i = 0; i < count; ++i) {
        widths[i] = smp.width(layer);
        span += widths[i];
        if (i + 1 < count) {
            gaps[i] = smp.spacing(layer);
            span += gaps[i];
        }
    }
    if (span > W)
        return false;
    double x = smp.rng().uniform(0.0, W - span);
    for (int i = 0; i < count; ++i) {
        out.push_back({first_id + i, layer, x, widths[i]});
        x += widths[i];
        if (i + 1 < count)
            x += gaps[i];
    }
    return !(out.back().x_right() > W);
}

[[noreturn]] void give_up(const Structure2D& s, int attempts)
{
    throw DataError("pattern " + std::string(1, pattern_letter(s.pattern)) + " structure '" + s.id +
                    "': no rule-clean placement after " + std::to_string(attempts) + " attempts");
}

} // namespace

char pattern_letter(Pattern p)
{
    switch (p) {
    case Pattern::A:
        return 'A';
    case Pattern::B:
        return 'B';
    case Pattern::C:
        return 'C';
    }
    return '?';
}

Pattern parse_pattern(std::string_view s)
{
    if (s.size() == 1) {
        switch (std::toupper(static_cast<unsigned char>(s[0]))) {
        case 'A':
            return Pattern::A;
        case 'B':
            return Pattern::B;
        case 'C':
            return Pattern::C;
        }
    }
    throw DataError("unknown pattern '" + std::string(s) + "' (expected A, B or C)");
}

LayerTriple parse_layer_triple(std::string_view s)
{
    if (!s.empty() && s.front() == '(' && s.back() == ')')
        s = s.substr(1, s.size() - 2);
    const auto parts = text::split(s, ',');
    if (parts.size() != 3)
        throw DataError("layer triple must be 'k,j,i', got '" + std::string(s) + "'");
    int v[3];
    for (int i = 0; i < 3; ++i) {
        const auto n = text::parse_int(parts[i]);
        if (!n)
            throw DataError("bad layer index in triple '" + std::string(s) + "'");
        v[i] = static_cast<int>(*n);
    }
    return {v[0], v[1], v[2]};
}

const Conductor& Structure2D::master() const { return conductor(0); }

const Conductor& Structure2D::conductor(int cid) const
{
    for (const auto& c : conductors)
        if (c.id == cid)
            return c;
    throw DataError("structure '" + id + "' has no conductor " + std::to_string(cid));
}

std::uint64_t derive_seed(std::uint64_t base_seed, std::uint64_t index)
{
    return splitmix64(base_seed ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

Structure2D generate_pattern_a(const TechFile& tech, LayerTriple layers, std::uint64_t seed,
                               std::string id, const GeneratorParams& params)
{
    Structure2D s = skeleton(tech, Pattern::A, layers, std::move(id), seed);
    s.has_substrate_ground = false;
    const double W = s.window_width;
    Sampler smp(tech, seed, params);
    for (int attempt = 0; attempt < params.max_attempts; ++attempt) {
        MiddleRow row;
        if (!place_middle(smp, tech, layers.middle, W, true, row))
            continue;
        s.conductors = {row.master,
                        row.left,
                        row.right,
                        {3, layers.bottom, 0.0, W},
                        {4, layers.top, 0.0, W}};
        return s;
    }
    give_up(s, params.max_attempts);
}

Structure2D generate_pattern_b(const TechFile& tech, LayerTriple layers, std::uint64_t seed,
                               std::string id, const GeneratorParams& params)
{
    Structure2D s = skeleton(tech, Pattern::B, layers, std::move(id), seed);
    s.has_substrate_ground = true;
    const double W = s.window_width;
    Sampler smp(tech, seed, params);
    for (int attempt = 0; attempt < params.max_attempts; ++attempt) {
        MiddleRow row;
        if (!place_middle(smp, tech, layers.middle, W, false, row))
            continue;
        std::vector<Conductor> conds{row.master, row.left, row.right};
        if (!place_row(smp, tech, layers.bottom, 1, W, 3, conds))
            continue;
        if (!place_row(smp, tech, layers.top, 1, W, 4, conds))
            continue;
        s.conductors = std::move(conds);
        return s;
    }
    give_up(s, params.max_attempts);
}

Structure2D generate_pattern_c(const TechFile& tech, LayerTriple layers, std::uint64_t seed,
                               std::string id, const GeneratorParams& params)
{
    Structure2D s = skeleton(tech, Pattern::C, layers, std::move(id), seed);
    s.has_substrate_ground = true;
    const double W = s.window_width;
    Sampler smp(tech, seed, params);
    const int outer = static_cast<int>(smp.rng().uniform_int(6, 8));
    const int n_top = static_cast<int>(smp.rng().uniform_int(1, outer - 1));
    const int n_bottom = outer - n_top;
    for (int attempt = 0; attempt < params.max_attempts; ++attempt) {
        MiddleRow row;
        if (!place_middle(smp, tech, layers.middle, W, false, row))
            continue;
        std::vector<Conductor> conds{row.master, row.left, row.right};
        if (!place_row(smp, tech, layers.bottom, n_bottom, W, 3, conds))
            continue;
        if (!place_row(smp, tech, layers.top, n_top, W, 3 + n_bottom, conds))
            continue;
        s.conductors = std::move(conds);
        return s;
    }
    give_up(s, params.max_attempts);
}

Structure2D generate_pattern(Pattern p, const TechFile& tech, LayerTriple layers, std::uint64_t seed,
                             std::string id, const GeneratorParams& params)
{
    switch (p) {
    case Pattern::A:
        return generate_pattern_a(tech, layers, seed, std::move(id), params);
    case Pattern::B:
        return generate_pattern_b(tech, layers, seed, std::move(id), params);
    case Pattern::C:
        return generate_pattern_c(tech, layers, seed, std::move(id), params);
    }
    throw DataError("unknown pattern");
}

std::string Violation::describe() const
{
    std::ostringstream os;
    os << rule << " [";
    for (std::size_t i = 0; i < conductor_ids.size(); ++i)
        os << (i ? "," : "") << conductor_ids[i];
    os << "] measured=" << text::format_double(measured) << " required=" << text::format_double(required);
    return os.str();
}

std::vector<Violation> validate_structure(const TechFile& tech, const Structure2D& s)
{
    std::vector<Violation> out;
    const LayerTriple t = s.layers;
    bool triple_ok = true;
    for (int l : {t.bottom, t.middle, t.top})
        if (!tech.has_layer(l)) {
            out.push_back({"unknown-layer", {}, double(l), 0.0});
            triple_ok = false;
        }
    if (!(t.bottom < t.middle && t.middle < t.top)) {
        out.push_back({"layer-order", {}, double(t.middle), 0.0});
        triple_ok = false;
    }
    if (!(s.window_width > 0.0))
        out.push_back({"window-width", {}, s.window_width, 0.0});

    // ids: unique, master present exactly once
    std::vector<int> ids;
    for (const auto& c : s.conductors)
        ids.push_back(c.id);
    std::sort(ids.begin(), ids.end());
    for (std::size_t i = 1; i < ids.size(); ++i)
        if (ids[i] == ids[i - 1])
            out.push_back({"duplicate-id", {ids[i]}, 2.0, 1.0});
    const auto masters = std::count(ids.begin(), ids.end(), 0);
    if (masters != 1)
        out.push_back({"master-count", {0}, double(masters), 1.0});

    const double W = s.window_width;
    for (const auto& c : s.conductors) {
        if (c.layer != t.bottom && c.layer != t.middle && c.layer != t.top) {
            out.push_back({"layer-membership", {c.id}, double(c.layer), double(t.middle)});
            continue;
        }
        if (triple_ok && c.width < tech.layer(c.layer).w_min - kGeomTol)
            out.push_back({"min-width", {c.id}, c.width, tech.layer(c.layer).w_min});
        if (c.x_left < -kGeomTol)
            out.push_back({"window-bounds", {c.id}, c.x_left, 0.0});
        if (c.x_right() > W + kGeomTol)
            out.push_back({"window-bounds", {c.id}, c.x_right(), W});
        if (c.id == 0) {
            if (c.layer != t.middle)
                out.push_back({"master-layer", {0}, double(c.layer), double(t.middle)});
            const double centred = 0.5 * (W - c.width);
            if (std::abs(c.x_left - centred) > kGeomTol)
                out.push_back({"master-centering", {0}, c.x_left, centred});
        }
    }

    if (triple_ok) {
        for (int l : {t.bottom, t.middle, t.top}) {
            std::vector<const Conductor*> row;
            for (const auto& c : s.conductors)
                if (c.layer == l)
                    row.push_back(&c);
            std::sort(row.begin(), row.end(),
                      [](const Conductor* a, const Conductor* b) { return a->x_left < b->x_left; });
            const double s_min = tech.layer(l).s_min;
            for (std::size_t i = 1; i < row.size(); ++i) {
                const double gap = row[i]->x_left - row[i - 1]->x_right();
                if (gap < s_min - kGeomTol)
                    out.push_back({"min-spacing", {row[i - 1]->id, row[i]->id}, gap, s_min});
            }
        }
    }
    return out;
}

Structure2D mirror_structure(const Structure2D& s)
{
    Structure2D m = s;
    for (auto& c : m.conductors)
        c.x_left = s.window_width - c.x_left - c.width;
    // Keep the master exactly centred after the round trip through floating point.
    for (auto& c : m.conductors)
        if (c.id == 0)
            c.x_left = 0.5 * (s.window_width - c.width);
    return m;
}

std::string format_structure(const Structure2D& s)
{
    std::ostringstream os;
    os << s.id << ' ' << pattern_letter(s.pattern) << " layers=(" << s.layers.bottom << ','
       << s.layers.middle << ',' << s.layers.top << ") W=" << text::format_double(s.window_width)
       << " ground=" << (s.has_substrate_ground ? 1 : 0) << " cond=";
    for (std::size_t i = 0; i < s.conductors.size(); ++i) {
        const auto& c = s.conductors[i];
        os << (i ? ";" : "") << '(' << c.id << ',' << c.layer << ',' << text::format_double(c.x_left) << ','
           << text::format_double(c.width) << ')';
    }
    return os.str();
}

Structure2D parse_structure(std::string_view line)
{
    const auto toks = text::split_ws(text::trim(line));
    auto fail = [&](const std::string& why) -> DataError {
        return DataError("bad structure record (" + why + "): " + std::string(line.substr(0, 80)));
    };
    if (toks.size() != 6)
        throw fail("expected 6 fields");
    auto value_of = [&](std::string_view tok, std::string_view key) {
        if (tok.substr(0, key.size()) != key)
            throw fail("expected field '" + std::string(key) + "'");
        return tok.substr(key.size());
    };

    Structure2D s;
    s.id = std::string(toks[0]);
    s.pattern = parse_pattern(toks[1]);
    s.layers = parse_layer_triple(value_of(toks[2], "layers="));
    const auto W = text::parse_double(value_of(toks[3], "W="));
    if (!W)
        throw fail("bad window width");
    s.window_width = *W;
    const auto g = value_of(toks[4], "ground=");
    if (g != "0" && g != "1")
        throw fail("ground must be 0 or 1");
    s.has_substrate_ground = g == "1";
    const auto conds = value_of(toks[5], "cond=");
    if (!conds.empty()) {
        for (auto item : text::split(conds, ';')) {
            if (item.size() < 2 || item.front() != '(' || item.back() != ')')
                throw fail("conductor must be '(id,layer,x,w)'");
            const auto f = text::split(item.substr(1, item.size() - 2), ',');
            if (f.size() != 4)
                throw fail("conductor must have 4 fields");
            const auto cid = text::parse_int(f[0]);
            const auto layer = text::parse_int(f[1]);
            const auto x = text::parse_double(f[2]);
            const auto w = text::parse_double(f[3]);
            if (!cid || !layer || !x || !w)
                throw fail("bad conductor numbers");
            s.conductors.push_back({static_cast<int>(*cid), static_cast<int>(*layer), *x, *w});
        }
    }
    return s;
}

void write_structures(const std::filesystem::path& path, std::span<const Structure2D> structures,
                      std::string_view header_comment)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw DataError("cannot write structures: " + path.string());
    if (!header_comment.empty()) {
        for (auto line : text::split(header_comment, '\n'))
            out << "# " << line << '\n';
    }
    for (const auto& s : structures)
        out << format_structure(s) << '\n';
    if (!out)
        throw DataError("write failed: " + path.string());
}

std::vector<Structure2D> read_structures(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DataError("cannot open structures: " + path.string());
    std::vector<Structure2D> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto t = text::trim(line);
        if (t.empty() || t.front() == '#')
            continue;
        try {
            out.push_back(parse_structure(t));
        } catch (const DataError& e) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

} // namespace cnncap
