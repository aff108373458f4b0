#include "cnncap/tech.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "cnncap/error.hpp"
#include "cnncap/textio.hpp"

namespace cnncap {

namespace {

// Interfaces closer than this (um) are treated as coincident.
constexpr double kZTol = 1e-9;

[[noreturn]] void parse_fail(std::string_view source, int line, const std::string& msg)
{
    std::ostringstream os;
    os << source << ':' << line << ": " << msg;
    throw DataError(os.str());
}

std::map<std::string, double, std::less<>> parse_keyvals(const std::vector<std::string_view>& toks,
                                                        std::size_t first, std::string_view source,
                                                        int line)
{
    std::map<std::string, double, std::less<>> kv;
    for (std::size_t i = first; i < toks.size(); ++i) {
        const auto eq = toks[i].find('=');
        if (eq == std::string_view::npos)
            parse_fail(source, line, "expected key=value, got '" + std::string(toks[i]) + "'");
        const std::string key(toks[i].substr(0, eq));
        const auto value = text::parse_double(toks[i].substr(eq + 1));
        if (!value || !std::isfinite(*value))
            parse_fail(source, line, "bad number for '" + key + "'");
        if (!kv.emplace(key, *value).second)
            parse_fail(source, line, "duplicate key '" + key + "'");
    }
    return kv;
}

double take(std::map<std::string, double, std::less<>>& kv, const char* key, std::string_view source,
            int line)
{
    auto it = kv.find(key);
    if (it == kv.end())
        parse_fail(source, line, std::string("missing key '") + key + "'");
    const double v = it->second;
    kv.erase(it);
    return v;
}

} // namespace

bool TechFile::has_layer(int index) const
{
    return std::any_of(layers.begin(), layers.end(), [index](const auto& l) { return l.index == index; });
}

const MetalLayerSpec& TechFile::layer(int index) const
{
    for (const auto& l : layers)
        if (l.index == index)
            return l;
    throw DataError("tech '" + name + "': unknown metal layer " + std::to_string(index));
}

double TechFile::z_max() const { return dielectrics.empty() ? 0.0 : dielectrics.back().z_top; }

double TechFile::eps_at(double z) const
{
    for (auto it = dielectrics.rbegin(); it != dielectrics.rend(); ++it)
        if (z >= it->z_bottom)
            return it->eps_r;
    return dielectrics.empty() ? 1.0 : dielectrics.front().eps_r;
}

TechFile parse_techfile(std::string_view text, std::string_view source)
{
    TechFile tech;
    bool have_name = false;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        const auto raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;

        const auto toks = text::split_ws(text::strip_comment(raw));
        if (toks.empty())
            continue;
        if (toks[0] == "tech") {
            if (toks.size() != 2)
                parse_fail(source, line_no, "expected 'tech <name>'");
            if (have_name)
                parse_fail(source, line_no, "duplicate 'tech' line");
            tech.name = std::string(toks[1]);
            have_name = true;
        } else if (toks[0] == "layer") {
            if (toks.size() < 2)
                parse_fail(source, line_no, "expected 'layer <index> ...'");
            const auto idx = text::parse_int(toks[1]);
            if (!idx || *idx < 1 || *idx > 1000)
                parse_fail(source, line_no, "bad layer index '" + std::string(toks[1]) + "'");
            auto kv = parse_keyvals(toks, 2, source, line_no);
            MetalLayerSpec l;
            l.index = static_cast<int>(*idx);
            l.z_bottom = take(kv, "zbottom", source, line_no);
            l.thickness = take(kv, "thickness", source, line_no);
            l.w_min = take(kv, "wmin", source, line_no);
            l.s_min = take(kv, "smin", source, line_no);
            if (!kv.empty())
                parse_fail(source, line_no, "unknown key '" + kv.begin()->first + "'");
            tech.layers.push_back(l);
        } else if (toks[0] == "dielectric") {
            auto kv = parse_keyvals(toks, 1, source, line_no);
            DielectricSlab d;
            d.z_bottom = take(kv, "zbottom", source, line_no);
            d.z_top = take(kv, "ztop", source, line_no);
            d.eps_r = take(kv, "epsr", source, line_no);
            if (!kv.empty())
                parse_fail(source, line_no, "unknown key '" + kv.begin()->first + "'");
            tech.dielectrics.push_back(d);
        } else {
            parse_fail(source, line_no, "unknown record '" + std::string(toks[0]) + "'");
        }
    }
    if (!have_name)
        throw DataError(std::string(source) + ": missing 'tech <name>' line");

    std::stable_sort(tech.layers.begin(), tech.layers.end(),
                     [](const auto& a, const auto& b) { return a.index < b.index; });
    std::stable_sort(tech.dielectrics.begin(), tech.dielectrics.end(),
                     [](const auto& a, const auto& b) { return a.z_bottom < b.z_bottom; });
    validate_techfile(tech);
    return tech;
}

TechFile load_techfile(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DataError("cannot open tech file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_techfile(ss.str(), path.string());
}

std::string format_techfile(const TechFile& tech)
{
    std::ostringstream os;
    os << "tech " << tech.name << '\n';
    for (const auto& l : tech.layers)
        os << "layer " << l.index << " zbottom=" << text::format_double(l.z_bottom)
           << " thickness=" << text::format_double(l.thickness) << " wmin=" << text::format_double(l.w_min)
           << " smin=" << text::format_double(l.s_min) << '\n';
    for (const auto& d : tech.dielectrics)
        os << "dielectric zbottom=" << text::format_double(d.z_bottom)
           << " ztop=" << text::format_double(d.z_top) << " epsr=" << text::format_double(d.eps_r) << '\n';
    return os.str();
}

void save_techfile(const TechFile& tech, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw DataError("cannot write tech file: " + path.string());
    out << format_techfile(tech);
    if (!out)
        throw DataError("write failed: " + path.string());
}

void validate_techfile(const TechFile& tech)
{
    const std::string who = "tech '" + tech.name + "': ";
    if (tech.name.empty())
        throw DataError("tech file has an empty name");
    if (tech.layers.empty())
        throw DataError(who + "no metal layers");
    if (tech.dielectrics.empty())
        throw DataError(who + "no dielectric slabs");

    for (std::size_t i = 0; i < tech.layers.size(); ++i) {
        const auto& l = tech.layers[i];
        const std::string lname = who + "layer " + std::to_string(l.index) + ": ";
        if (!(l.thickness > 0))
            throw DataError(lname + "thickness must be > 0");
        if (!(l.w_min > 0))
            throw DataError(lname + "wmin must be > 0");
        if (!(l.s_min > 0))
            throw DataError(lname + "smin must be > 0");
        if (!(l.z_bottom >= 0))
            throw DataError(lname + "zbottom must be >= 0");
        if (i > 0) {
            const auto& prev = tech.layers[i - 1];
            if (prev.index == l.index)
                throw DataError(lname + "duplicate layer index");
            if (!(l.z_bottom > prev.z_bottom))
                throw DataError(lname + "zbottom must exceed that of layer " + std::to_string(prev.index));
            if (l.z_bottom < prev.z_top() - kZTol)
                throw DataError(lname + "overlaps layer " + std::to_string(prev.index));
        }
    }

    for (std::size_t i = 0; i < tech.dielectrics.size(); ++i) {
        const auto& d = tech.dielectrics[i];
        const std::string dname = who + "dielectric slab " + std::to_string(i) + " [" +
                                  text::format_double(d.z_bottom) + ", " + text::format_double(d.z_top) + "]: ";
        if (!(d.z_top > d.z_bottom))
            throw DataError(dname + "ztop must exceed zbottom");
        if (!(d.eps_r >= 1.0))
            throw DataError(dname + "epsr must be >= 1");
        if (i == 0) {
            if (std::abs(d.z_bottom) > kZTol)
                throw DataError(dname + "dielectric stack must start at z=0");
        } else {
            const auto& prev = tech.dielectrics[i - 1];
            if (d.z_bottom < prev.z_top - kZTol)
                throw DataError(dname + "dielectric overlap with slab " + std::to_string(i - 1));
            if (d.z_bottom > prev.z_top + kZTol)
                throw DataError(dname + "dielectric gap after slab " + std::to_string(i - 1));
        }
    }

    const double zmax = tech.z_max();
    for (const auto& l : tech.layers)
        if (l.z_top() > zmax + kZTol)
            throw DataError(who + "layer " + std::to_string(l.index) + " extends above the dielectric stack");
}

double window_width(const TechFile& tech, int master_layer)
{
    return kWindowWidthFactor * tech.layer(master_layer).w_min;
}

WindowCalibration calibrate_window(const TechFile& tech, int master_layer,
                                   const NeighbourRatioProbe& probe, double threshold,
                                   double resolution_wmin)
{
    const auto& layer = tech.layer(master_layer);
    WindowCalibration cal;
    auto ratio_at = [&](double offset) {
        ++cal.probes;
        return probe(offset);
    };

    // Closest legal placement: master half-width plus minimum spacing.
    double lo = 0.5 + layer.s_min / layer.w_min;
    if (ratio_at(lo) <= threshold) {
        cal.half_width_wmin = lo;
        cal.window_width = 2.0 * lo * layer.w_min;
        return cal;
    }
    double hi = 2.0 * lo;
    while (ratio_at(hi) > threshold) {
        lo = hi;
        hi *= 2.0;
        if (hi > 4096.0)
            throw NumericalError("calibrate_window: coupling ratio never drops below threshold");
    }
    while (hi - lo > resolution_wmin) {
        const double mid = 0.5 * (lo + hi);
        if (ratio_at(mid) > threshold)
            lo = mid;
        else
            hi = mid;
    }
    cal.half_width_wmin = hi;
    cal.window_width = 2.0 * hi * layer.w_min;
    return cal;
}

} // namespace cnncap
