#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cnncap/assembly25d.hpp"
#include "cnncap/error.hpp"
#include "cnncap/evalkit.hpp"
#include "cnncap/rng.hpp"

using namespace cnncap;

namespace {

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("relative error examples")
{
    CHECK(relative_errors(std::vector{2.5}, std::vector{2.5}) == std::vector{0.0});
    const auto e = relative_errors(std::vector{0.9, 1.2}, std::vector{1.0, 1.0});
    CHECK(e[0] == doctest::Approx(0.10));
    CHECK(e[1] == doctest::Approx(0.20));
    const auto r = summarize(e);
    CHECK(r.err_avg == doctest::Approx(0.15));
    CHECK(r.err_max == doctest::Approx(0.20));
    CHECK(r.ratio_over_10pct == 0.5);
    CHECK(r.ratio_over_5pct == 1.0);
    CHECK_THROWS_AS(relative_errors(std::vector{1.0}, std::vector{0.0}), DataError);
    CHECK_THROWS_AS(relative_errors(std::vector{1.0, 2.0}, std::vector{1.0}), DataError);
}

TEST_CASE("summarize edge cases")
{
    const auto z = summarize(std::vector{0.0, 0.0, 0.0});
    CHECK(z.err_avg == 0.0);
    CHECK(z.err_max == 0.0);
    CHECK(z.ratio_over_5pct == 0.0);
    CHECK(z.ratio_over_10pct == 0.0);
    const auto one = summarize(std::vector{0.5});
    CHECK(one.err_avg == 0.5);
    CHECK(one.err_max == 0.5);
    CHECK(one.ratio_over_5pct == 1.0);
    CHECK(one.ratio_over_10pct == 1.0);
    CHECK_THROWS_AS(summarize(std::vector<double>{}), DataError);
}

TEST_CASE("summary is permutation invariant")
{
    Rng rng(3);
    std::vector<double> p(101), l(101);
    for (std::size_t i = 0; i < p.size(); ++i) {
        l[i] = rng.uniform(0.1, 2);
        p[i] = l[i] * (1 + rng.uniform(-0.2, 0.2));
    }
    const auto a = summarize(relative_errors(p, l));
    std::vector<std::size_t> idx(p.size());
    for (std::size_t i = 0; i < idx.size(); ++i)
        idx[i] = i;
    rng.shuffle(idx);
    std::vector<double> p2, l2;
    for (auto i : idx) {
        p2.push_back(p[i]);
        l2.push_back(l[i]);
    }
    const auto b = summarize(relative_errors(p2, l2));
    CHECK(a.err_avg == doctest::Approx(b.err_avg).epsilon(1e-14));
    CHECK(a.err_max == b.err_max);
    CHECK(a.ratio_over_5pct == b.ratio_over_5pct);
    CHECK(a.ratio_over_10pct == b.ratio_over_10pct);
}

TEST_CASE("masked labels are skipped")
{
    const auto r = make_report("coupling", std::vector{1.0, 5.0, 2.2}, std::vector<double>{1.0, NAN, 2.0});
    CHECK(r.count == 2);
    CHECK(r.rows.size() == 2);
    CHECK(r.err_max == doctest::Approx(0.1));
}

TEST_CASE("scatter export")
{
    Rng rng(8);
    std::vector<double> p(57), l(57);
    for (std::size_t i = 0; i < p.size(); ++i) {
        l[i] = rng.uniform(0.01, 0.2);
        p[i] = l[i] * (1 + rng.uniform(-0.1, 0.1));
    }
    const auto r = make_report("coupling", p, l);
    const auto dir = std::filesystem::temp_directory_path() / "cnncap_test_eval";
    std::filesystem::create_directories(dir);
    scatter_export(r, dir / "a.csv");
    scatter_export(r, dir / "b.csv");
    const std::string a = slurp(dir / "a.csv");
    CHECK(a == slurp(dir / "b.csv"));

    std::istringstream in(a);
    std::string line;
    std::getline(in, line);
    std::size_t rows = 0;
    double max_err = 0;
    while (std::getline(in, line)) {
        const auto comma = line.find(',');
        const double cap = std::stod(line.substr(0, comma));
        const double err = std::stod(line.substr(comma + 1));
        CHECK(std::isfinite(cap));
        CHECK(err >= 0.0);
        max_err = std::max(max_err, err);
        ++rows;
    }
    CHECK(rows == p.size());
    CHECK(max_err == doctest::Approx(r.err_max).epsilon(1e-8));
}

TEST_CASE("ground residual check")
{
    CHECK(ground_residual_violations(std::vector{1.0, 1.0}, std::vector{0.9, 1.005}) == 0);
    CHECK(ground_residual_violations(std::vector{1.0, 1.0}, std::vector{1.02, 0.5}) == 1);
}

TEST_CASE("cross-section totals")
{
    CHECK(cross_section_total({0.1, 0.3, 0.1}) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(cross_section_total({0, 0, 0}) == 0.0);
    CHECK(cross_section_total({0.37, 0, 0.37}) == 2 * 0.37);
    CHECK_THROWS_AS(cross_section_total({-0.1, 0.2, 0.1}), DataError);
}

TEST_CASE("crossover assembly")
{
    // C_A = 1, C_B = 2 with overlap 0.5
    const CrossSectionCaps a{0.25, 0.5, 0.25}, b{0.75, 0.5, 0.75};
    CHECK(assemble_crossover(a, b, 2, 3) == 6.5);
    CHECK(assemble_crossover(a, CrossSectionCaps{0, 0.8, 0}, 2, 3) == 2.0);
    CHECK(assemble_crossover(a, b, 2, 1e-12) == doctest::Approx(2.0).epsilon(1e-10));
    CHECK_THROWS_AS(assemble_crossover(a, b, 2, 0), DataError);
    CHECK_THROWS_AS(assemble_crossover(a, b, -1, 1), DataError);
}

TEST_CASE("crossover assembly is linear in each width")
{
    Rng rng(4);
    for (int t = 0; t < 200; ++t) {
        const CrossSectionCaps a{rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1)};
        const CrossSectionCaps b{rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1)};
        const double w1 = rng.uniform(0.1, 5), w2 = rng.uniform(0.1, 5), k = rng.uniform(0.5, 3);
        const double ca = cross_section_total(a), cf = b.fringe_left + b.fringe_right;
        const double base = assemble_crossover(a, b, w1, w2);
        CHECK(std::abs(assemble_crossover(a, b, k * w1, w2) - base - (k - 1) * w1 * ca) <= 1e-14 * (1 + base * k));
        CHECK(std::abs(assemble_crossover(a, b, w1, k * w2) - base - (k - 1) * w2 * cf) <= 1e-14 * (1 + base * k));
    }
}

TEST_CASE("crossover assembly is not symmetric in its roles")
{
    const CrossSectionCaps a{0.1, 0.4, 0.2}, b{0.3, 0.6, 0.15};
    CHECK(assemble_crossover(a, b, 1.3, 0.7) != assemble_crossover(b, a, 0.7, 1.3));
}
