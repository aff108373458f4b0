#include <doctest.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "cnncap/error.hpp"
#include "cnncap/fieldsolver.hpp"

using namespace cnncap;

namespace {

const TechFile& tech55()
{
    static const TechFile t = load_techfile(std::filesystem::path(CNNCAP_DATA_DIR) / "tech55.tech");
    return t;
}

constexpr LayerTriple kTriple{2, 3, 6};

// One 0.1 um thick layer sitting at z = 0.1 with a 0.2 um cap above it.
TechFile plate_tech(double eps_lower, double eps_upper)
{
    return parse_techfile("tech plate\n"
                          "layer 1 zbottom=0.1 thickness=0.1 wmin=0.05 smin=0.05\n"
                          "dielectric zbottom=0 ztop=0.05 epsr=" +
                              std::to_string(eps_lower) +
                              "\n"
                              "dielectric zbottom=0.05 ztop=0.1 epsr=" +
                              std::to_string(eps_upper) +
                              "\n"
                              "dielectric zbottom=0.1 ztop=0.4 epsr=3.9\n",
                          "plate");
}

Structure2D plate_structure()
{
    Structure2D s;
    s.id = "plate";
    s.pattern = Pattern::B;
    s.layers = {1, 1, 1};
    s.window_width = 1.0;
    s.conductors = {{0, 1, 0.0, 1.0}};
    return s;
}

} // namespace

TEST_CASE("parallel plate over ground matches eps0 eps_r W / h")
{
    const auto r = extract_capacitances(plate_tech(3.9, 3.9), plate_structure());
    const double expect = kEps0 * 3.9 * 1.0 / 0.1 * kFaradPerMeterToFfPerUm;
    CHECK(expect == doctest::Approx(0.34531).epsilon(1e-4));
    CHECK(r.total == doctest::Approx(expect).epsilon(0.01));
    CHECK(r.ground_coupling == doctest::Approx(r.total).epsilon(1e-9));
}

TEST_CASE("series dielectric slabs under a plate")
{
    const auto r = extract_capacitances(plate_tech(3.9, 7.8), plate_structure());
    const double expect = kEps0 * 1.0 / (0.05 / 3.9 + 0.05 / 7.8) * kFaradPerMeterToFfPerUm;
    CHECK(r.total == doctest::Approx(expect).epsilon(0.01));
}

TEST_CASE("potential between plate and ground is linear")
{
    const auto tech = plate_tech(3.9, 3.9);
    const auto g = build_grid(tech, plate_structure(), 4);
    const auto f = solve_potential(g, 0);
    double worst = 0.0;
    for (int k = 0; k < g.nz(); ++k) {
        if (g.z[k] > 0.1)
            break;
        for (int i = 0; i < g.nx(); ++i)
            worst = std::max(worst, std::abs(f.phi[g.node(i, k)] - g.z[k] / 0.1));
    }
    CHECK(worst < 1e-8);

    const auto zero = solve_potential(g, -1);
    for (double v : zero.phi)
        CHECK(v == 0.0);
    CHECK_THROWS_AS(solve_potential(g, 42), DataError);
}

TEST_CASE("grid lines hit every conductor edge and slab interface")
{
    const auto s = generate_pattern_c(tech55(), kTriple, 11);
    const auto g = build_grid(tech55(), s, 4);
    auto has = [](const std::vector<double>& v, double p) {
        return std::any_of(v.begin(), v.end(), [p](double q) { return q == p; });
    };
    for (const auto& c : s.conductors) {
        CHECK(has(g.x, c.x_left));
        CHECK(has(g.x, std::min(c.x_right(), s.window_width)));
        CHECK(has(g.z, tech55().layer(c.layer).z_bottom));
    }
    for (const auto& d : tech55().dielectrics)
        CHECK(has(g.z, d.z_top));
    for (std::size_t i = 1; i < g.x.size(); ++i)
        CHECK(g.x[i] > g.x[i - 1]);

    const auto g2 = build_grid(tech55(), s, 8);
    CHECK(g2.nx() - 1 >= 2 * (g.nx() - 1));
    CHECK_THROWS_AS(build_grid(tech55(), s, 1), UsageError);
}

TEST_CASE("single centred wire gives a mirror-symmetric grid")
{
    Structure2D s;
    s.id = "wire";
    s.layers = kTriple;
    s.window_width = window_width(tech55(), 3);
    s.conductors = {{0, 3, 0.5 * (s.window_width - 0.2), 0.2}};
    const auto g = build_grid(tech55(), s, 4);
    const int n = g.nx();
    for (int i = 0; i < n; ++i)
        CHECK(g.x[i] + g.x[n - 1 - i] == doctest::Approx(s.window_width).epsilon(1e-12));
}

TEST_CASE("Maxwell matrix properties on random structures")
{
    for (auto p : {Pattern::A, Pattern::B, Pattern::C}) {
        const auto s = generate_pattern(p, tech55(), kTriple, 3);
        const auto r = extract_capacitances(tech55(), s);
        CHECK(r.residual <= 1e-8);
        CHECK(r.reciprocity_error() < 0.01);
        const auto n = r.conductor_ids.size();
        double diag = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(r.maxwell[i * n + i] > 0.0);
            diag = std::max(diag, r.maxwell[i * n + i]);
            for (std::size_t j = 0; j < n; ++j)
                if (i != j)
                    CHECK(r.maxwell[i * n + j] <= 1e-12);
        }
        // charge neutrality per drive
        for (std::size_t d = 0; d < n; ++d) {
            double q = r.ground_charge[d];
            for (std::size_t c = 0; c < n; ++c)
                q += r.maxwell[c * n + d];
            CHECK(std::abs(q) < 1e-8 * diag);
        }
        double sum = r.ground_coupling;
        for (const auto& [id, v] : r.couplings) {
            CHECK(v >= 0.0);
            sum += v;
        }
        CHECK(r.total == doctest::Approx(sum).epsilon(1e-8));
        if (p == Pattern::A) {
            CHECK(r.ground_coupling == 0.0);
            CHECK(r.couplings.at(1) == doctest::Approx(r.couplings.at(2)).epsilon(0.005));
        }
    }
}

TEST_CASE("iterative and direct solvers agree")
{
    const auto s = generate_pattern_c(tech55(), kTriple, 8);
    SolverOptions it;
    it.solver = LinearSolver::pcg;
    it.drive_all = false;
    SolverOptions dir;
    dir.drive_all = false;
    const auto a = extract_capacitances(tech55(), s, dir);
    const auto b = extract_capacitances(tech55(), s, it);
    CHECK(b.iterations > 0);
    CHECK(b.residual <= 1e-8);
    CHECK(a.total == doctest::Approx(b.total).epsilon(1e-6));
    for (const auto& [id, v] : a.couplings)
        CHECK(v == doctest::Approx(b.couplings.at(id)).epsilon(1e-5).scale(a.total));
}

TEST_CASE("doubling resolution moves the total by under 2%")
{
    const auto s = generate_pattern_b(tech55(), kTriple, 21);
    SolverOptions o;
    o.drive_all = false;
    double prev = 0.0, prev_delta = 0.0;
    for (int res : {4, 8, 16}) {
        o.resolution = res;
        const auto t0 = std::chrono::steady_clock::now();
        const auto r = extract_capacitances(tech55(), s, o);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("resolution %2d: grid %dx%d total %.6f fF/um (%.2f s)\n", res, r.nx, r.nz, r.total, secs);
        if (prev > 0.0) {
            const double delta = r.total - prev;
            CHECK(std::abs(delta) / r.total < 0.02);
            if (prev_delta != 0.0) {
                CHECK(delta * prev_delta > 0.0);        // monotone
                CHECK(std::abs(delta) < std::abs(prev_delta)); // contracting
            }
            prev_delta = delta;
        }
        prev = r.total;
    }
}

TEST_CASE("batch results do not depend on the worker count")
{
    std::vector<Structure2D> ss;
    for (std::uint64_t i = 0; i < 4; ++i)
        ss.push_back(generate_pattern_b(tech55(), kTriple, derive_seed(2, i), "b" + std::to_string(i)));
    SolverOptions o;
    o.drive_all = false;
    const auto one = extract_batch(tech55(), ss, o, 1);
    const auto three = extract_batch(tech55(), ss, o, 3);
    for (std::size_t i = 0; i < ss.size(); ++i) {
        CHECK(one[i].total == three[i].total);
        CHECK(one[i].couplings == three[i].couplings);
    }
}

TEST_CASE("label CSV round-trip")
{
    const auto s = generate_pattern_b(tech55(), kTriple, 5, "b5");
    const auto r = extract_capacitances(tech55(), s);
    const auto rows = label_rows(r, true);
    REQUIRE(rows.size() == 6);
    CHECK(rows[0].kind == LabelKind::total);
    CHECK(rows[1].env_id == 1);
    CHECK(rows.back().kind == LabelKind::ground);
    const auto path = std::filesystem::temp_directory_path() / "cnncap_labels.csv";
    write_labels(path, rows);
    CHECK(read_labels(path) == rows);
    std::filesystem::remove(path);
}

TEST_CASE("window probe ratio falls with distance")
{
    SolverOptions o;
    const auto probe = make_window_probe(tech55(), 3, o);
    const double near = probe(1.5);
    const double far = probe(6.0);
    CHECK(near > 0.01);
    CHECK(far < near);
}
