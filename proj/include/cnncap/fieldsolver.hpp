#pragma once

// 2-D finite-volume Laplace solver for per-unit-length capacitance extraction.

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cnncap/patgen.hpp"
#include "cnncap/tech.hpp"

namespace cnncap {

/// Vacuum permittivity, F/m.
inline constexpr double kEps0 = 8.8541878128e-12;
/// 1 F/m expressed in fF/um.
inline constexpr double kFaradPerMeterToFfPerUm = 1e9;

enum class LinearSolver { direct, pcg };

struct SolverOptions {
    int resolution = 4;         // cells across the smallest width/spacing/thickness
    double tol = 1e-8;          // relative residual
    LinearSolver solver = LinearSolver::direct;
    int max_iterations = 20000; // pcg only
    double far_growth = 0.3;    // cell growth per unit distance outside the conductor band
    bool drive_all = true;      // false: drive the master only (no reciprocity data)
};

/// Rectilinear node grid. Cell (i,k) spans [x_i, x_{i+1}] x [z_k, z_{k+1}].
struct SolverGrid {
    static constexpr int kFree = -1;
    static constexpr int kGround = -2;

    std::vector<double> x, z;
    std::vector<double> eps;       // per cell, (nx-1)*(nz-1), row k major
    std::vector<int> owner;        // per node: conductor index, kFree or kGround
    std::vector<int> conductor_ids; // owner index -> structure conductor id
    bool ground_plane = true;

    int nx() const { return static_cast<int>(x.size()); }
    int nz() const { return static_cast<int>(z.size()); }
    int node(int i, int k) const { return k * nx() + i; }
    double cell_eps(int i, int k) const { return eps[static_cast<std::size_t>(k) * (nx() - 1) + i]; }
    int node_count() const { return nx() * nz(); }
    int free_count() const;
};

/// Lines are snapped to every conductor edge and dielectric interface.
/// Throws UsageError for resolution < 2.
SolverGrid build_grid(const TechFile& tech, const Structure2D& s, int resolution, double far_growth = 0.3);

struct PotentialField {
    std::vector<double> phi; // per node, volts
    double residual = 0.0;   // ||b - A phi|| / ||b|| over free nodes
    int iterations = 0;      // 0 for the direct solver
};

/// Potential with `driven_id` at 1 V and every other conductor (and the ground
/// plane) at 0 V. A negative `driven_id` drives nothing.
PotentialField solve_potential(const SolverGrid& grid, int driven_id, const SolverOptions& opt = {});

struct CapacitanceResult {
    std::string structure_id;
    double total = 0.0;              // fF/um
    std::map<int, double> couplings; // env id -> fF/um
    double ground_coupling = 0.0;    // fF/um, 0 without a ground plane

    // Maxwell matrix over conductor_ids (row-major); only the master column is
    // filled when drive_all is false.
    std::vector<int> conductor_ids;
    std::vector<double> maxwell;
    std::vector<double> ground_charge; // per drive, fF/um
    bool full_matrix = false;

    int nx = 0, nz = 0;
    double residual = 0.0;
    int iterations = 0;

    double maxwell_at(int row_id, int col_id) const;
    /// Largest |C_ab - C_ba| / max(|C_ab|, |C_ba|); requires full_matrix.
    double reciprocity_error() const;
};

CapacitanceResult extract_capacitances(const TechFile& tech, const Structure2D& s, const SolverOptions& opt = {});

/// Solves structures on `workers` threads; output order and bytes do not
/// depend on the worker count.
std::vector<CapacitanceResult> extract_batch(const TechFile& tech, std::span<const Structure2D> structures,
                                             const SolverOptions& opt = {}, int workers = 1);

/// Coupling-to-total ratio of a lone same-layer neighbour (width w_min) whose
/// near edge sits `offset_wmin` w_min from the master centre.
NeighbourRatioProbe make_window_probe(const TechFile& tech, int layer, const SolverOptions& opt = {});

enum class LabelKind { total, coupling, ground };

struct LabelRow {
    std::string structure_id;
    LabelKind kind = LabelKind::total;
    int env_id = -1; // coupling rows only
    double value = 0.0; // fF/um

    bool operator==(const LabelRow&) const = default;
};

const char* label_kind_name(LabelKind k);
std::vector<LabelRow> label_rows(const CapacitanceResult& r, bool with_ground);

/// CSV with header `structure_id,kind,env_id,value_fF_per_um`, optionally
/// preceded by `# ` provenance lines (one per line of `comment`).
void write_labels(const std::filesystem::path& path, std::span<const LabelRow> rows, std::string_view comment = {});
std::vector<LabelRow> read_labels(const std::filesystem::path& path);

/// Rebuilds per-structure totals and couplings from label rows, in first-seen
/// order. Throws DataError when a structure has no total row.
std::vector<CapacitanceResult> results_from_labels(std::span<const LabelRow> rows);

} // namespace cnncap
