#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <set>
#include <vector>

#include "cnncap/error.hpp"
#include "cnncap/patgen.hpp"
#include "cnncap/rng.hpp"

using namespace cnncap;

namespace {

const TechFile& tech()
{
    static const TechFile t = load_techfile(std::filesystem::path(CNNCAP_DATA_DIR) / "tech55.tech");
    return t;
}

constexpr LayerTriple kTriple{2, 3, 6};

bool has_rule(const std::vector<Violation>& v, const std::string& rule)
{
    return std::any_of(v.begin(), v.end(), [&](const Violation& x) { return x.rule == rule; });
}

// Geometry as an id-free set of (layer, x, w) boxes.
bool same_geometry(const Structure2D& a, const Structure2D& b, double tol)
{
    auto boxes = [](const Structure2D& s) {
        std::vector<Conductor> v = s.conductors;
        std::sort(v.begin(), v.end(), [](const Conductor& p, const Conductor& q) {
            return p.layer != q.layer ? p.layer < q.layer : p.x_left < q.x_left;
        });
        return v;
    };
    const auto va = boxes(a), vb = boxes(b);
    if (va.size() != vb.size())
        return false;
    for (std::size_t i = 0; i < va.size(); ++i)
        if (va[i].layer != vb[i].layer || std::abs(va[i].x_left - vb[i].x_left) > tol ||
            std::abs(va[i].width - vb[i].width) > tol)
            return false;
    return true;
}

} // namespace

TEST_CASE("rng streams are reproducible")
{
    Rng a(42), b(42), c(43);
    for (int i = 0; i < 100; ++i)
        CHECK(a.next_u64() == b.next_u64());
    CHECK(a.next_u64() != c.next_u64());
    Rng u(1);
    for (int i = 0; i < 1000; ++i) {
        const auto k = u.uniform_int(6, 8);
        CHECK(k >= 6);
        CHECK(k <= 8);
        const double x = u.uniform01();
        CHECK(x >= 0.0);
        CHECK(x < 1.0);
    }
    CHECK(derive_seed(7, 0) != derive_seed(7, 1));
    CHECK(derive_seed(7, 3) == derive_seed(7, 3));
}

TEST_CASE("Pattern-A is mirror symmetric with planes on the outer layers")
{
    for (std::uint64_t seed = 0; seed < 500; ++seed) {
        const auto s = generate_pattern_a(tech(), kTriple, seed);
        REQUIRE(s.conductor_count() == 5);
        CHECK_FALSE(s.has_substrate_ground);
        CHECK(validate_structure(tech(), s).empty());
        CHECK(same_geometry(s, mirror_structure(s), 1e-12));
        const auto m = mirror_structure(s);
        CHECK(m.conductor(1).x_left == doctest::Approx(s.conductor(2).x_left).epsilon(1e-12));
        CHECK(m.conductor(1).width == s.conductor(2).width);
        CHECK(s.conductor(1).width == s.conductor(2).width);
        const double sl = s.master().x_left - s.conductor(1).x_right();
        const double sr = s.conductor(2).x_left - s.master().x_right();
        CHECK(sl == doctest::Approx(sr).epsilon(1e-12));
        CHECK(s.conductor(3).layer == kTriple.bottom);
        CHECK(s.conductor(3).width == s.window_width);
        CHECK(s.conductor(4).layer == kTriple.top);
        CHECK(s.conductor(4).x_left == 0.0);
    }
}

TEST_CASE("same seed gives the same structure")
{
    for (auto p : {Pattern::A, Pattern::B, Pattern::C}) {
        const auto a = generate_pattern(p, tech(), kTriple, 1234);
        const auto b = generate_pattern(p, tech(), kTriple, 1234);
        CHECK(a == b);
        CHECK(format_structure(a) == format_structure(b));
        CHECK_FALSE(a == generate_pattern(p, tech(), kTriple, 1235));
    }
}

TEST_CASE("master width never exceeds 10 w_min and is right-skewed")
{
    const double w_min = tech().layer(kTriple.middle).w_min;
    std::vector<double> widths;
    for (std::uint64_t seed = 0; seed < 10000; ++seed) {
        const auto s = generate_pattern_a(tech(), kTriple, seed);
        CHECK(s.master().width <= 10.0 * w_min + 1e-12);
        CHECK(s.master().width >= w_min);
    }
    for (std::uint64_t seed = 0; seed < 10000; ++seed)
        widths.push_back(generate_pattern_c(tech(), kTriple, seed).master().width);
    const double mean = std::accumulate(widths.begin(), widths.end(), 0.0) / widths.size();
    std::nth_element(widths.begin(), widths.begin() + widths.size() / 2, widths.end());
    const double median = widths[widths.size() / 2];
    CHECK(median < mean);
}

TEST_CASE("Pattern-B has five conductors, a ground plane and clean spacings")
{
    for (std::uint64_t seed = 0; seed < 10000; ++seed) {
        const auto s = generate_pattern_b(tech(), kTriple, seed);
        REQUIRE(s.conductor_count() == 5);
        CHECK(s.has_substrate_ground);
        const auto v = validate_structure(tech(), s);
        CHECK(v.empty());
        if (!v.empty())
            FAIL(v.front().describe());
        CHECK(s.conductor(3).layer == kTriple.bottom);
        CHECK(s.conductor(4).layer == kTriple.top);
    }
}

TEST_CASE("Pattern-C outer conductor count is 6 to 8")
{
    std::set<int> seen;
    for (std::uint64_t seed = 0; seed < 10000; ++seed) {
        const auto s = generate_pattern_c(tech(), kTriple, seed);
        const int outer = s.conductor_count() - 3;
        CHECK(outer >= 6);
        CHECK(outer <= 8);
        seen.insert(outer);
        int top = 0, bottom = 0;
        for (const auto& c : s.conductors) {
            top += c.layer == kTriple.top;
            bottom += c.layer == kTriple.bottom;
        }
        CHECK(top >= 1);
        CHECK(bottom >= 1);
        CHECK(top + bottom == outer);
        CHECK(validate_structure(tech(), s).empty());
    }
    CHECK(seen == std::set<int>{6, 7, 8});
}

TEST_CASE("Pattern-C ids run bottom then top, left to right")
{
    const auto s = generate_pattern_c(tech(), kTriple, 99);
    for (int i = 0; i < s.conductor_count(); ++i)
        CHECK(s.conductors[i].id == i);
    for (int i = 4; i < s.conductor_count(); ++i) {
        const auto& a = s.conductors[i - 1];
        const auto& b = s.conductors[i];
        if (a.layer == b.layer)
            CHECK(a.x_left < b.x_left);
        else
            CHECK(a.layer < b.layer);
    }
}

TEST_CASE("validator reports rule violations")
{
    const double W = window_width(tech(), kTriple.middle);
    const double w = 0.09, smin = 0.09;
    Structure2D s;
    s.id = "hand";
    s.pattern = Pattern::B;
    s.layers = kTriple;
    s.window_width = W;
    const double xm = 0.5 * (W - w);
    s.conductors = {{0, 3, xm, w},
                    {1, 3, xm - 0.5 * smin - w, w},
                    {2, 3, xm + w + smin, w},
                    {3, 2, 1.0, 0.081},
                    {4, 6, 1.0, 0.09}};
    auto v = validate_structure(tech(), s);
    REQUIRE(v.size() == 1);
    CHECK(v[0].rule == "min-spacing");
    CHECK(v[0].conductor_ids == std::vector<int>{1, 0});
    CHECK(v[0].measured == doctest::Approx(0.045));
    CHECK(v[0].required == smin);

    s.conductors[1].x_left = xm - smin - w;
    CHECK(validate_structure(tech(), s).empty());

    auto off = s;
    off.conductors[0].x_left += 0.01;
    CHECK(has_rule(validate_structure(tech(), off), "master-centering"));

    auto thin = s;
    thin.conductors[4].width = 0.05;
    CHECK(has_rule(validate_structure(tech(), thin), "min-width"));

    auto out = s;
    out.conductors[3].x_left = W - 0.01;
    CHECK(has_rule(validate_structure(tech(), out), "window-bounds"));

    auto dup = s;
    dup.conductors[4].id = 3;
    CHECK(has_rule(validate_structure(tech(), dup), "duplicate-id"));

    auto stray = s;
    stray.conductors[4].layer = 5;
    CHECK(has_rule(validate_structure(tech(), stray), "layer-membership"));

    auto nomaster = s;
    nomaster.conductors[0].id = 7;
    CHECK(has_rule(validate_structure(tech(), nomaster), "master-count"));
}

TEST_CASE("structure records round-trip exactly")
{
    std::vector<Structure2D> all;
    for (auto p : {Pattern::A, Pattern::B, Pattern::C})
        for (std::uint64_t i = 0; i < 20; ++i)
            all.push_back(generate_pattern(p, tech(), kTriple, derive_seed(5, i), "s" + std::to_string(i)));
    for (const auto& s : all)
        CHECK(parse_structure(format_structure(s)) == s);

    const auto path = std::filesystem::temp_directory_path() / "cnncap_structs.txt";
    write_structures(path, all, "seed=5\ntech=n55");
    CHECK(read_structures(path) == all);
    std::filesystem::remove(path);

    const auto line = format_structure(all[0]);
    CHECK(line.rfind("s0 A layers=(2,3,6) W=", 0) == 0);
    CHECK_THROWS_AS(parse_structure("s0 A layers=(2,3,6) W=5.04"), DataError);
    CHECK_THROWS_AS(parse_structure("s0 Q layers=(2,3,6) W=5.04 ground=1 cond=(0,3,1,1)"), DataError);
}

TEST_CASE("bad layer triples are rejected")
{
    CHECK_THROWS_AS(generate_pattern_b(tech(), {3, 2, 6}, 1), DataError);
    CHECK_THROWS_AS(generate_pattern_b(tech(), {2, 3, 99}, 1), DataError);
    CHECK(parse_layer_triple("2,3,6") == kTriple);
    CHECK(parse_layer_triple("(2,3,6)") == kTriple);
    CHECK_THROWS_AS(parse_layer_triple("2,3"), DataError);
}
