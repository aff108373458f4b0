#include "cnncap/evalkit.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "cnncap/error.hpp"
#include "cnncap/gridrep.hpp"

namespace cnncap {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0)
{
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

double median(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string fmt(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

} // namespace

std::vector<double> relative_errors(std::span<const double> preds, std::span<const double> labels)
{
    if (preds.size() != labels.size())
        throw DataError("relative_errors: " + std::to_string(preds.size()) + " predictions for " +
                        std::to_string(labels.size()) + " labels");
    std::vector<double> e(preds.size());
    for (std::size_t i = 0; i < e.size(); ++i) {
        if (labels[i] == 0.0)
            throw DataError("relative_errors: zero label at index " + std::to_string(i));
        e[i] = std::abs(preds[i] - labels[i]) / std::abs(labels[i]);
    }
    return e;
}

ErrorReport summarize(std::span<const double> errors, std::string task)
{
    if (errors.empty())
        throw DataError("summarize: no errors to aggregate");
    ErrorReport r;
    r.task = std::move(task);
    r.count = errors.size();
    double s = 0.0;
    std::size_t over5 = 0, over10 = 0;
    for (double e : errors) {
        s += e;
        r.err_max = std::max(r.err_max, e);
        over5 += e > 0.05;
        over10 += e > 0.10;
    }
    const double n = static_cast<double>(r.count);
    r.err_avg = s / n;
    r.ratio_over_5pct = over5 / n;
    r.ratio_over_10pct = over10 / n;
    return r;
}

ErrorReport make_report(std::string task, std::span<const double> preds, std::span<const double> labels)
{
    if (preds.size() != labels.size())
        throw DataError("make_report: length mismatch");
    std::vector<double> p, l;
    for (std::size_t i = 0; i < preds.size(); ++i)
        if (!std::isnan(labels[i])) {
            p.push_back(preds[i]);
            l.push_back(labels[i]);
        }
    const auto e = relative_errors(p, l);
    ErrorReport r = summarize(e, std::move(task));
    r.rows.reserve(e.size());
    for (std::size_t i = 0; i < e.size(); ++i)
        r.rows.push_back({p[i], l[i], e[i]});
    return r;
}

std::string report_text(const ErrorReport& r)
{
    std::string s;
    s += "task " + r.task + '\n';
    s += "count " + std::to_string(r.count) + '\n';
    s += "err_avg " + fmt(r.err_avg) + '\n';
    s += "err_max " + fmt(r.err_max) + '\n';
    s += "ratio_over_5pct " + fmt(r.ratio_over_5pct) + '\n';
    s += "ratio_over_10pct " + fmt(r.ratio_over_10pct) + '\n';
    return s;
}

void scatter_export(const ErrorReport& r, const std::filesystem::path& path)
{
    if (r.rows.empty())
        throw DataError("scatter_export: report has no per-sample rows");
    std::ofstream out(path);
    if (!out)
        throw DataError("cannot write " + path.string());
    out << "capacitance_fF_per_um,relative_error\n";
    for (const auto& row : r.rows)
        out << fmt(row.label) << ',' << fmt(row.err) << '\n';
    if (!out)
        throw DataError("write failed: " + path.string());
}

std::size_t ground_residual_violations(std::span<const double> totals, std::span<const double> coupling_sums,
                                       double tolerance)
{
    if (totals.size() != coupling_sums.size())
        throw DataError("ground residual check: length mismatch");
    std::size_t bad = 0;
    for (std::size_t i = 0; i < totals.size(); ++i)
        bad += totals[i] - coupling_sums[i] < -tolerance * std::abs(totals[i]);
    return bad;
}

BenchResult bench_inference(const TechFile& tech, std::span<const Structure2D> structures, int L,
                            const TrainedModel& total, const TrainedModel& coupling, int repeats)
{
    if (!total.model || !coupling.model)
        throw UsageError("bench: both models are required");
    if (structures.empty() || repeats < 1)
        throw UsageError("bench: need structures and at least one repeat");
    BenchResult br;
    br.structures = structures.size();
    br.repeats = repeats;
    for (const auto& s : structures)
        br.evaluations += s.conductors.size();

    std::vector<float> buf;
    std::vector<std::size_t> rows;
    nn::Act<float> xb;
    volatile double sink = 0.0;
    auto pass = [&] {
        for (const auto& s : structures) {
            const DensityMap d = density_map(tech, s, L);
            const FeatureVector t = total_feature(d, s);
            rows.assign(1, 0);
            nn::pack_batch(*total.model, t.values.data(), rows.data(), 1, xb);
            sink = sink + total.model->forward(xb, false).v[0] * total.scale[0];

            buf.clear();
            int n = 0;
            for (const auto& c : s.conductors) {
                if (c.id == s.master().id)
                    continue;
                const FeatureVector f = coupling_feature(d, s, c.id);
                buf.insert(buf.end(), f.values.begin(), f.values.end());
                ++n;
            }
            if (n == 0)
                continue;
            rows.resize(n);
            std::iota(rows.begin(), rows.end(), 0);
            nn::pack_batch(*coupling.model, buf.data(), rows.data(), n, xb);
            const auto& y = coupling.model->forward(xb, false);
            for (int i = 0; i < n; ++i)
                sink = sink + y.v[i] * coupling.scale[0];
        }
    };

    pass(); // warm-up
    std::vector<double> per_structure;
    for (int r = 0; r < repeats; ++r) {
        const auto t0 = Clock::now();
        pass();
        per_structure.push_back(ms_since(t0) / static_cast<double>(structures.size()));
    }
    br.mean_ms = std::accumulate(per_structure.begin(), per_structure.end(), 0.0) / repeats;
    br.median_ms = median(per_structure);
    return br;
}

double bench_solver_ms(const TechFile& tech, std::span<const Structure2D> structures, const SolverOptions& opt)
{
    if (structures.empty())
        throw UsageError("bench: need structures");
    std::vector<double> t;
    for (const auto& s : structures) {
        const auto t0 = Clock::now();
        (void)extract_capacitances(tech, s, opt);
        t.push_back(ms_since(t0));
    }
    return median(t);
}

std::string bench_text(const BenchResult& b)
{
    std::string s;
    s += "structures " + std::to_string(b.structures) + '\n';
    s += "evaluations_per_pass " + std::to_string(b.evaluations) + '\n';
    s += "repeats " + std::to_string(b.repeats) + '\n';
    s += "threads " + std::to_string(b.threads) + '\n';
    s += "cnn_mean_ms_per_structure " + fmt(b.mean_ms) + '\n';
    s += "cnn_median_ms_per_structure " + fmt(b.median_ms) + '\n';
    s += "solver_median_ms_per_structure " + fmt(b.solver_ms) + '\n';
    s += "speedup " + fmt(b.speedup()) + '\n';
    return s;
}

} // namespace cnncap
