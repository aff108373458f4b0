#pragma once

// Accuracy metrics, scatter export and inference benchmarking.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cnncap/fieldsolver.hpp"
#include "cnncap/nn/model.hpp"
#include "cnncap/patgen.hpp"
#include "cnncap/tech.hpp"

namespace cnncap {

/// |pred - label| / |label|; throws DataError on length mismatch or a zero label.
std::vector<double> relative_errors(std::span<const double> preds, std::span<const double> labels);

struct ErrorRow {
    double pred = 0.0, label = 0.0, err = 0.0;
};

struct ErrorReport {
    std::string task;
    std::size_t count = 0;
    double err_avg = 0.0;
    double err_max = 0.0;
    double ratio_over_5pct = 0.0;
    double ratio_over_10pct = 0.0;
    std::vector<ErrorRow> rows;
};

/// Aggregates; throws DataError on empty input.
ErrorReport summarize(std::span<const double> errors, std::string task = {});
/// Rows with a NaN label are skipped (filtered targets).
ErrorReport make_report(std::string task, std::span<const double> preds, std::span<const double> labels);

std::string report_text(const ErrorReport& r);
/// Two columns per sample: label capacitance (fF/um) and relative error.
void scatter_export(const ErrorReport& r, const std::filesystem::path& path);

/// Structures whose predicted total undercuts the predicted coupling sum by
/// more than `tolerance` of the total.
std::size_t ground_residual_violations(std::span<const double> totals, std::span<const double> coupling_sums,
                                       double tolerance = 0.01);

struct TrainedModel {
    nn::Model* model = nullptr;
    std::vector<double> scale{1.0};
};

struct BenchResult {
    std::size_t structures = 0;
    std::size_t evaluations = 0; // per pass, 1 total + (n_c - 1) couplings each
    int repeats = 0;
    int threads = 1;
    double mean_ms = 0.0;   // per structure
    double median_ms = 0.0; // per structure
    double solver_ms = 0.0; // per structure, median
    double speedup() const { return solver_ms / median_ms; }
};

/// Times encoding plus inference of every structure (its coupling rows in one
/// batch). Runs one untimed warm-up pass, then `repeats` timed passes.
BenchResult bench_inference(const TechFile& tech, std::span<const Structure2D> structures, int L,
                            const TrainedModel& total, const TrainedModel& coupling, int repeats);

/// Median wall time per structure of a label solve at the given options.
double bench_solver_ms(const TechFile& tech, std::span<const Structure2D> structures, const SolverOptions& opt);

std::string bench_text(const BenchResult& b);

} // namespace cnncap
