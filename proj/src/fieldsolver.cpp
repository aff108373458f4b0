#include "cnncap/fieldsolver.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <sstream>
#include <thread>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>

#include "cnncap/error.hpp"
#include "cnncap/kernels/kernels.hpp"
#include "cnncap/textio.hpp"

namespace cnncap {

namespace {

constexpr double kSnapTol = 1e-9;

using SpMat = Eigen::SparseMatrix<double>;

std::vector<double> merged_points(std::vector<double> pts)
{
    std::sort(pts.begin(), pts.end());
    std::vector<double> out;
    for (double p : pts)
        if (out.empty() || p - out.back() > kSnapTol)
            out.push_back(p);
    return out;
}

int uniform_cells(double len, double ref, int resolution)
{
    return std::max(1, static_cast<int>(std::ceil(len / ref - 1e-9))) * resolution;
}

void append_uniform(std::vector<double>& lines, double a, double b, int n)
{
    for (int j = 1; j < n; ++j)
        lines.push_back(a + (b - a) * j / n);
    lines.push_back(b);
}

// Cells grow linearly with distance from `anchor`, starting at h.
void append_graded(std::vector<double>& lines, double a, double b, double anchor, double h, double growth)
{
    const double len = b - a;
    const bool from_top = anchor >= b; // interval lies below the band
    std::vector<double> steps;
    double covered = 0.0;
    while (covered < len * (1.0 - 1e-12)) {
        const double d = (from_top ? anchor - b : a - anchor) + covered;
        const double step = h + growth * d;
        steps.push_back(step);
        covered += step;
    }
    // Fold a small trailing remainder into its neighbour.
    if (steps.size() > 1 && covered - len > 0.5 * steps.back()) {
        covered -= steps.back();
        steps.pop_back();
    }
    const double scale = len / covered;
    if (from_top)
        std::reverse(steps.begin(), steps.end());
    double pos = a;
    for (std::size_t j = 0; j + 1 < steps.size(); ++j) {
        pos += steps[j] * scale;
        lines.push_back(pos);
    }
    lines.push_back(b);
}

struct ConductorBox {
    double x0, x1, z0, z1;
};

// Discrete system over free nodes. Links carry area-weighted conductances,
// which are exact for layered media because interfaces lie on grid lines.
struct LaplaceSystem {
    const SolverGrid& g;
    std::vector<double> gx; // link (i,k)-(i+1,k), (nx-1)*nz
    std::vector<double> gz; // link (i,k)-(i,k+1), nx*(nz-1)
    std::vector<int> unknown;
    std::vector<int> node_of;
    SpMat a;

    explicit LaplaceSystem(const SolverGrid& grid) : g(grid)
    {
        const int nx = g.nx(), nz = g.nz();
        gx.assign(static_cast<std::size_t>(nx - 1) * nz, 0.0);
        gz.assign(static_cast<std::size_t>(nx) * (nz - 1), 0.0);
        for (int k = 0; k < nz; ++k)
            for (int i = 0; i + 1 < nx; ++i) {
                double s = 0.0;
                if (k > 0)
                    s += g.cell_eps(i, k - 1) * 0.5 * (g.z[k] - g.z[k - 1]);
                if (k + 1 < nz)
                    s += g.cell_eps(i, k) * 0.5 * (g.z[k + 1] - g.z[k]);
                gx[static_cast<std::size_t>(k) * (nx - 1) + i] = s / (g.x[i + 1] - g.x[i]);
            }
        for (int k = 0; k + 1 < nz; ++k)
            for (int i = 0; i < nx; ++i) {
                double s = 0.0;
                if (i > 0)
                    s += g.cell_eps(i - 1, k) * 0.5 * (g.x[i] - g.x[i - 1]);
                if (i + 1 < nx)
                    s += g.cell_eps(i, k) * 0.5 * (g.x[i + 1] - g.x[i]);
                gz[static_cast<std::size_t>(k) * nx + i] = s / (g.z[k + 1] - g.z[k]);
            }

        unknown.assign(g.node_count(), -1);
        for (int n = 0; n < g.node_count(); ++n)
            if (g.owner[n] == SolverGrid::kFree) {
                unknown[n] = static_cast<int>(node_of.size());
                node_of.push_back(n);
            }

        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(node_of.size() * 5);
        std::vector<double> diag(node_of.size(), 0.0);
        for_each_link([&](int p, int q, double c) {
            const int up = unknown[p], uq = unknown[q];
            if (up >= 0)
                diag[up] += c;
            if (uq >= 0)
                diag[uq] += c;
            if (up >= 0 && uq >= 0) {
                trip.emplace_back(up, uq, -c);
                trip.emplace_back(uq, up, -c);
            }
        });
        for (std::size_t u = 0; u < diag.size(); ++u)
            trip.emplace_back(static_cast<int>(u), static_cast<int>(u), diag[u]);
        a.resize(static_cast<int>(node_of.size()), static_cast<int>(node_of.size()));
        a.setFromTriplets(trip.begin(), trip.end());
    }

    template <class F>
    void for_each_link(F&& f) const
    {
        const int nx = g.nx(), nz = g.nz();
        for (int k = 0; k < nz; ++k)
            for (int i = 0; i + 1 < nx; ++i)
                f(g.node(i, k), g.node(i + 1, k), gx[static_cast<std::size_t>(k) * (nx - 1) + i]);
        for (int k = 0; k + 1 < nz; ++k)
            for (int i = 0; i < nx; ++i)
                f(g.node(i, k), g.node(i, k + 1), gz[static_cast<std::size_t>(k) * nx + i]);
    }

    Eigen::VectorXd rhs(int driven_owner) const
    {
        Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<int>(node_of.size()));
        if (driven_owner < 0)
            return b;
        for_each_link([&](int p, int q, double c) {
            if (g.owner[q] == driven_owner && unknown[p] >= 0)
                b[unknown[p]] += c;
            else if (g.owner[p] == driven_owner && unknown[q] >= 0)
                b[unknown[q]] += c;
        });
        return b;
    }

    std::vector<double> scatter(const Eigen::VectorXd& u, int driven_owner) const
    {
        std::vector<double> phi(g.node_count(), 0.0);
        for (int n = 0; n < g.node_count(); ++n) {
            if (unknown[n] >= 0)
                phi[n] = u[unknown[n]];
            else if (driven_owner >= 0 && g.owner[n] == driven_owner)
                phi[n] = 1.0;
        }
        return phi;
    }

    double residual(const Eigen::VectorXd& u, const Eigen::VectorXd& b) const
    {
        const Eigen::VectorXd r = b - a * u;
        const double bb = kernels::ddot({b.data(), static_cast<std::size_t>(b.size())},
                               {b.data(), static_cast<std::size_t>(b.size())});
        if (bb == 0.0)
            return std::sqrt(r.squaredNorm());
        const double rr = kernels::ddot({r.data(), static_cast<std::size_t>(r.size())},
                               {r.data(), static_cast<std::size_t>(r.size())});
        return std::sqrt(rr / bb);
    }

    // Charge per owner (conductors, then ground last) in units of eps0 * V.
    std::vector<double> charges(const std::vector<double>& phi) const
    {
        const int nc = static_cast<int>(g.conductor_ids.size());
        std::vector<double> q(nc + 1, 0.0);
        auto slot = [nc](int owner) { return owner == SolverGrid::kGround ? nc : owner; };
        for_each_link([&](int p, int qn, double c) {
            const int op = g.owner[p], oq = g.owner[qn];
            if (op == oq)
                return;
            const double flux = c * (phi[p] - phi[qn]);
            if (op != SolverGrid::kFree)
                q[slot(op)] += flux;
            if (oq != SolverGrid::kFree)
                q[slot(oq)] -= flux;
        });
        return q;
    }
};

class LinearBackend {
public:
    LinearBackend(const LaplaceSystem& sys, const SolverOptions& opt) : sys_(sys), opt_(opt)
    {
        if (sys.node_of.empty())
            return;
        if (opt.solver == LinearSolver::direct) {
            ldlt_.compute(sys.a);
            if (ldlt_.info() != Eigen::Success)
                throw NumericalError("sparse LDL^T factorization failed");
        } else {
            pcg_.setTolerance(opt.tol);
            pcg_.setMaxIterations(opt.max_iterations);
            pcg_.compute(sys.a);
            if (pcg_.info() != Eigen::Success)
                throw NumericalError("incomplete Cholesky preconditioner failed");
        }
    }

    PotentialField solve(int driven_owner)
    {
        PotentialField f;
        const Eigen::VectorXd b = sys_.rhs(driven_owner);
        Eigen::VectorXd u;
        if (sys_.node_of.empty()) {
            u.resize(0);
        } else if (opt_.solver == LinearSolver::direct) {
            u = ldlt_.solve(b);
        } else {
            u = pcg_.solve(b);
            f.iterations = static_cast<int>(pcg_.iterations());
        }
        f.residual = sys_.node_of.empty() ? 0.0 : sys_.residual(u, b);
        if (!(f.residual <= opt_.tol)) {
            std::ostringstream os;
            os << "linear solve did not converge: relative residual " << f.residual << " > tol " << opt_.tol;
            if (opt_.solver == LinearSolver::pcg)
                os << " after " << f.iterations << " iterations";
            throw NumericalError(os.str());
        }
        f.phi = sys_.scatter(u, driven_owner);
        return f;
    }

private:
    const LaplaceSystem& sys_;
    SolverOptions opt_;
    Eigen::SimplicialLDLT<SpMat> ldlt_;
    Eigen::ConjugateGradient<SpMat, Eigen::Lower | Eigen::Upper, Eigen::IncompleteCholesky<double>> pcg_;
};

int owner_of(const SolverGrid& g, int driven_id)
{
    if (driven_id < 0)
        return -1;
    for (std::size_t c = 0; c < g.conductor_ids.size(); ++c)
        if (g.conductor_ids[c] == driven_id)
            return static_cast<int>(c);
    throw DataError("no conductor with id " + std::to_string(driven_id) + " in the grid");
}

} // namespace

int SolverGrid::free_count() const
{
    return static_cast<int>(std::count(owner.begin(), owner.end(), kFree));
}

SolverGrid build_grid(const TechFile& tech, const Structure2D& s, int resolution, double far_growth)
{
    if (resolution < 2)
        throw UsageError("solver resolution must be >= 2 (got " + std::to_string(resolution) + ")");
    if (s.conductors.empty())
        throw DataError("structure '" + s.id + "' has no conductors");
    if (!(s.window_width > 0.0))
        throw DataError("structure '" + s.id + "' has a non-positive window width");

    double ref = 1e300;
    double band_lo = 1e300, band_hi = -1e300;
    std::vector<ConductorBox> boxes;
    for (const auto& c : s.conductors) {
        const auto& l = tech.layer(c.layer);
        ref = std::min({ref, l.w_min, l.s_min, l.thickness});
        band_lo = std::min(band_lo, l.z_bottom);
        band_hi = std::max(band_hi, l.z_top());
        boxes.push_back({c.x_left, c.x_right(), l.z_bottom, l.z_top()});
    }
    const double h = ref / resolution;
    const double W = s.window_width;

    SolverGrid g;
    g.ground_plane = s.has_substrate_ground;

    std::vector<double> xs{0.0, W};
    for (const auto& b : boxes) {
        xs.push_back(std::clamp(b.x0, 0.0, W));
        xs.push_back(std::clamp(b.x1, 0.0, W));
    }
    xs = merged_points(std::move(xs));
    g.x.push_back(xs.front());
    for (std::size_t j = 1; j < xs.size(); ++j)
        append_uniform(g.x, xs[j - 1], xs[j], uniform_cells(xs[j] - xs[j - 1], ref, resolution));

    const double zmax = tech.z_max();
    std::vector<double> zs{0.0, zmax};
    for (const auto& d : tech.dielectrics) {
        zs.push_back(d.z_bottom);
        zs.push_back(d.z_top);
    }
    for (const auto& b : boxes) {
        zs.push_back(b.z0);
        zs.push_back(b.z1);
    }
    zs = merged_points(std::move(zs));
    g.z.push_back(zs.front());
    for (std::size_t j = 1; j < zs.size(); ++j) {
        const double a = zs[j - 1], b = zs[j];
        if (b <= band_lo + kSnapTol)
            append_graded(g.z, a, b, band_lo, h, far_growth);
        else if (a >= band_hi - kSnapTol)
            append_graded(g.z, a, b, band_hi, h, far_growth);
        else
            append_uniform(g.z, a, b, uniform_cells(b - a, ref, resolution));
    }

    const int nx = g.nx(), nz = g.nz();
    g.eps.resize(static_cast<std::size_t>(nx - 1) * (nz - 1));
    for (int k = 0; k + 1 < nz; ++k) {
        const double e = tech.eps_at(0.5 * (g.z[k] + g.z[k + 1]));
        for (int i = 0; i + 1 < nx; ++i)
            g.eps[static_cast<std::size_t>(k) * (nx - 1) + i] = e;
    }

    g.owner.assign(g.node_count(), SolverGrid::kFree);
    auto range = [](const std::vector<double>& v, double lo, double hi) {
        const auto b = std::lower_bound(v.begin(), v.end(), lo - kSnapTol) - v.begin();
        const auto e = std::upper_bound(v.begin(), v.end(), hi + kSnapTol) - v.begin();
        return std::pair<int, int>(static_cast<int>(b), static_cast<int>(e));
    };
    for (std::size_t c = 0; c < boxes.size(); ++c) {
        g.conductor_ids.push_back(s.conductors[c].id);
        const auto [i0, i1] = range(g.x, boxes[c].x0, boxes[c].x1);
        const auto [k0, k1] = range(g.z, boxes[c].z0, boxes[c].z1);
        if (i1 - i0 < 2 || k1 - k0 < 2)
            throw DataError("conductor " + std::to_string(s.conductors[c].id) + " of '" + s.id +
                            "' covers fewer than 2x2 grid nodes");
        for (int k = k0; k < k1; ++k)
            for (int i = i0; i < i1; ++i) {
                int& o = g.owner[g.node(i, k)];
                if (o != SolverGrid::kFree)
                    throw DataError("conductors " + std::to_string(g.conductor_ids[o]) + " and " +
                                    std::to_string(s.conductors[c].id) + " of '" + s.id + "' touch");
                o = static_cast<int>(c);
            }
    }
    if (g.ground_plane)
        for (int i = 0; i < nx; ++i)
            if (g.owner[g.node(i, 0)] == SolverGrid::kFree)
                g.owner[g.node(i, 0)] = SolverGrid::kGround;
    return g;
}

PotentialField solve_potential(const SolverGrid& grid, int driven_id, const SolverOptions& opt)
{
    const int owner = owner_of(grid, driven_id);
    LaplaceSystem sys(grid);
    LinearBackend backend(sys, opt);
    return backend.solve(owner);
}

double CapacitanceResult::maxwell_at(int row_id, int col_id) const
{
    const auto n = conductor_ids.size();
    const auto r = std::find(conductor_ids.begin(), conductor_ids.end(), row_id) - conductor_ids.begin();
    const auto c = std::find(conductor_ids.begin(), conductor_ids.end(), col_id) - conductor_ids.begin();
    if (static_cast<std::size_t>(r) >= n || static_cast<std::size_t>(c) >= n)
        throw DataError("maxwell_at: unknown conductor id");
    return maxwell[r * n + c];
}

double CapacitanceResult::reciprocity_error() const
{
    if (!full_matrix)
        throw UsageError("reciprocity needs every conductor driven");
    const auto n = conductor_ids.size();
    double diag = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        diag = std::max(diag, std::abs(maxwell[i * n + i]));
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double a = maxwell[i * n + j], b = maxwell[j * n + i];
            const double m = std::max(std::abs(a), std::abs(b));
            if (m > 1e-12 * diag)
                worst = std::max(worst, std::abs(a - b) / m);
        }
    return worst;
}

CapacitanceResult extract_capacitances(const TechFile& tech, const Structure2D& s, const SolverOptions& opt)
{
    const SolverGrid grid = build_grid(tech, s, opt.resolution, opt.far_growth);
    const LaplaceSystem sys(grid);
    LinearBackend backend(sys, opt);

    const int n = static_cast<int>(grid.conductor_ids.size());
    const int master = owner_of(grid, 0);
    constexpr double unit = kEps0 * kFaradPerMeterToFfPerUm;

    CapacitanceResult r;
    r.structure_id = s.id;
    r.conductor_ids = grid.conductor_ids;
    r.maxwell.assign(static_cast<std::size_t>(n) * n, 0.0);
    r.ground_charge.assign(n, 0.0);
    r.full_matrix = opt.drive_all;
    r.nx = grid.nx();
    r.nz = grid.nz();

    for (int d = 0; d < n; ++d) {
        if (!opt.drive_all && d != master)
            continue;
        const PotentialField f = backend.solve(d);
        r.residual = std::max(r.residual, f.residual);
        r.iterations += f.iterations;
        const auto q = sys.charges(f.phi);
        for (int c = 0; c < n; ++c)
            r.maxwell[static_cast<std::size_t>(c) * n + d] = q[c] * unit;
        r.ground_charge[d] = q[n] * unit;
    }

    r.total = r.maxwell[static_cast<std::size_t>(master) * n + master];
    for (int c = 0; c < n; ++c)
        if (c != master)
            r.couplings[grid.conductor_ids[c]] = -r.maxwell[static_cast<std::size_t>(c) * n + master];
    r.ground_coupling = grid.ground_plane ? -r.ground_charge[master] : 0.0;
    if (!(r.total > 0.0))
        throw NumericalError("structure '" + s.id + "': non-positive total capacitance");
    return r;
}

std::vector<CapacitanceResult> extract_batch(const TechFile& tech, std::span<const Structure2D> structures,
                                             const SolverOptions& opt, int workers)
{
    std::vector<CapacitanceResult> out(structures.size());
    std::vector<std::exception_ptr> errors(structures.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < structures.size(); i = next++) {
            try {
                out[i] = extract_capacitances(tech, structures[i], opt);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const int nthreads = std::clamp(workers, 1, static_cast<int>(std::max<std::size_t>(1, structures.size())));
    if (nthreads == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < nthreads; ++t)
            pool.emplace_back(work);
        for (auto& t : pool)
            t.join();
    }
    for (const auto& e : errors)
        if (e)
            std::rethrow_exception(e);
    return out;
}

NeighbourRatioProbe make_window_probe(const TechFile& tech, int layer, const SolverOptions& opt)
{
    const double w = tech.layer(layer).w_min;
    return [tech, layer, w, opt](double offset_wmin) {
        const double reach = offset_wmin * w + w; // master centre to neighbour far edge
        Structure2D s;
        s.id = "probe";
        s.pattern = Pattern::B;
        s.layers = {layer, layer, layer};
        s.window_width = 4.0 * reach;
        s.has_substrate_ground = true;
        const double c = 0.5 * s.window_width;
        s.conductors = {{0, layer, c - 0.5 * w, w}, {1, layer, c + offset_wmin * w, w}};
        SolverOptions o = opt;
        o.drive_all = false;
        const auto r = extract_capacitances(tech, s, o);
        return r.couplings.at(1) / r.total;
    };
}

const char* label_kind_name(LabelKind k)
{
    switch (k) {
    case LabelKind::total:
        return "total";
    case LabelKind::coupling:
        return "coupling";
    case LabelKind::ground:
        return "ground";
    }
    return "?";
}

std::vector<LabelRow> label_rows(const CapacitanceResult& r, bool with_ground)
{
    std::vector<LabelRow> rows;
    rows.push_back({r.structure_id, LabelKind::total, -1, r.total});
    for (const auto& [id, v] : r.couplings)
        rows.push_back({r.structure_id, LabelKind::coupling, id, v});
    if (with_ground)
        rows.push_back({r.structure_id, LabelKind::ground, -1, r.ground_coupling});
    return rows;
}

void write_labels(const std::filesystem::path& path, std::span<const LabelRow> rows, std::string_view comment)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw DataError("cannot write labels: " + path.string());
    for (auto line : text::split(comment, '\n'))
        if (!line.empty())
            out << "# " << line << '\n';
    out << "structure_id,kind,env_id,value_fF_per_um\n";
    for (const auto& r : rows) {
        out << r.structure_id << ',' << label_kind_name(r.kind) << ',';
        if (r.kind == LabelKind::coupling)
            out << r.env_id;
        out << ',' << text::format_double(r.value) << '\n';
    }
    if (!out)
        throw DataError("write failed: " + path.string());
}

std::vector<LabelRow> read_labels(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DataError("cannot open labels: " + path.string());
    std::vector<LabelRow> rows;
    std::string line;
    int line_no = 0;
    auto fail = [&](const std::string& why) {
        return DataError(path.string() + ":" + std::to_string(line_no) + ": " + why);
    };
    bool header = false;
    while (std::getline(in, line)) {
        ++line_no;
        const auto t = text::trim(line);
        if (t.starts_with('#'))
            continue;
        if (!header) {
            if (t != "structure_id,kind,env_id,value_fF_per_um")
                throw fail("unexpected label header");
            header = true;
            continue;
        }
        if (t.empty())
            continue;
        const auto f = text::split(t, ',');
        if (f.size() != 4)
            throw fail("expected 4 fields");
        LabelRow r;
        r.structure_id = std::string(f[0]);
        if (f[1] == "total")
            r.kind = LabelKind::total;
        else if (f[1] == "coupling")
            r.kind = LabelKind::coupling;
        else if (f[1] == "ground")
            r.kind = LabelKind::ground;
        else
            throw fail("unknown kind '" + std::string(f[1]) + "'");
        if (r.kind == LabelKind::coupling) {
            const auto id = text::parse_int(f[2]);
            if (!id)
                throw fail("coupling row needs env_id");
            r.env_id = static_cast<int>(*id);
        } else if (!f[2].empty()) {
            throw fail("env_id must be empty for " + std::string(f[1]));
        }
        const auto v = text::parse_double(f[3]);
        if (!v)
            throw fail("bad value");
        r.value = *v;
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<CapacitanceResult> results_from_labels(std::span<const LabelRow> rows)
{
    std::vector<CapacitanceResult> out;
    std::map<std::string, std::size_t> index;
    std::vector<bool> has_total;
    for (const auto& r : rows) {
        auto [it, fresh] = index.try_emplace(r.structure_id, out.size());
        if (fresh) {
            out.emplace_back().structure_id = r.structure_id;
            has_total.push_back(false);
        }
        CapacitanceResult& c = out[it->second];
        switch (r.kind) {
        case LabelKind::total:
            c.total = r.value;
            has_total[it->second] = true;
            break;
        case LabelKind::coupling:
            c.couplings[r.env_id] = r.value;
            break;
        case LabelKind::ground:
            c.ground_coupling = r.value;
            break;
        }
    }
    for (std::size_t i = 0; i < out.size(); ++i)
        if (!has_total[i])
            throw DataError("labels: structure '" + out[i].structure_id + "' has no total row");
    return out;
}

} // namespace cnncap
