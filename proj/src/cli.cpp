#include "cnncap/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "cnncap/assembly25d.hpp"
#include "cnncap/dataset_io.hpp"
#include "cnncap/error.hpp"
#include "cnncap/evalkit.hpp"
#include "cnncap/fieldsolver.hpp"
#include "cnncap/gridrep.hpp"
#include "cnncap/patgen.hpp"
#include "cnncap/tech.hpp"
#include "cnncap/textio.hpp"
#include "cnncap/trainer.hpp"

namespace cnncap::cli {

namespace {

using Clock = std::chrono::steady_clock;

std::string join_args(int argc, const char* const* argv)
{
    std::string s;
    for (int i = 1; i < argc; ++i)
        s += (i > 1 ? " " : "") + std::string(argv[i]);
    return s;
}

void log_config(const std::string& command, const std::string& resolved)
{
    std::cerr << "[" << command << "] config: " << resolved << '\n';
}

void log_time(const std::string& command, Clock::time_point t0)
{
    std::cerr << "[" << command << "] done in "
              << std::chrono::duration<double>(Clock::now() - t0).count() << " s\n";
}

std::string hex64(std::uint64_t v)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string join_doubles(const std::vector<double>& v)
{
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i)
        s += (i ? "," : "") + text::format_double(v[i]);
    return s;
}

std::vector<double> parse_doubles(std::string_view s, std::string_view what)
{
    std::vector<double> out;
    for (auto f : text::split(s, ',')) {
        const auto v = text::parse_double(text::trim(f));
        if (!v)
            throw DataError("bad number list for " + std::string(what) + ": '" + std::string(s) + "'");
        out.push_back(*v);
    }
    return out;
}

TaskKind parse_task(const std::string& s)
{
    if (s == "total")
        return TaskKind::total;
    if (s == "coupling")
        return TaskKind::coupling;
    throw UsageError("unknown task '" + s + "' (expected total or coupling)");
}

const char* task_name(TaskKind t)
{
    return t == TaskKind::total ? "total" : "coupling";
}

LinearSolver parse_solver(const std::string& s)
{
    if (s == "direct")
        return LinearSolver::direct;
    if (s == "pcg")
        return LinearSolver::pcg;
    throw UsageError("unknown solver '" + s + "' (expected direct or pcg)");
}

const std::string& meta_at(const nn::ModelBundle& b, const std::string& key)
{
    const auto it = b.meta.find(key);
    if (it == b.meta.end())
        throw DataError("model metadata has no '" + key + "' entry");
    return it->second;
}

TrainedModel as_trained(nn::ModelBundle& b)
{
    TrainedModel t;
    t.model = b.model.get();
    const auto it = b.meta.find("target_scale");
    t.scale = it == b.meta.end() ? std::vector<double>(b.model->outputs(), 1.0)
                                 : parse_doubles(it->second, "target_scale");
    if (static_cast<int>(t.scale.size()) != b.model->outputs())
        throw DataError("target_scale does not match the model output count");
    return t;
}

// Samples the model consumes, built from either an encoded dataset or
// structures + labels (MLP-Cap).
struct TrainingInput {
    SampleSet samples;
    std::string fingerprint;
    int L = 0;
};

TrainingInput load_training_input(nn::ModelKind kind, TaskKind task, const std::string& dataset,
                                  const std::string& tech_path, const std::string& structures,
                                  const std::string& labels)
{
    TrainingInput in;
    if (kind == nn::ModelKind::mlpcap) {
        if (tech_path.empty() || structures.empty() || labels.empty())
            throw UsageError("mlpcap needs --tech, --structures and --labels");
        const auto ss = read_structures(structures);
        const auto res = results_from_labels(read_labels(labels));
        in.samples = mlpcap_samples(ss, res);
        in.fingerprint = hex64(in.samples.fingerprint());
        return in;
    }
    if (dataset.empty())
        throw UsageError(std::string(nn::model_kind_name(kind)) + " needs --dataset");
    const GridDataset ds = read_dataset(dataset);
    in.L = ds.L;
    in.samples = grid_samples(ds, task);
    if (in.samples.size() == 0)
        throw DataError("dataset has no " + std::string(task_name(task)) + " samples");
    if (kind == nn::ModelKind::gridmlp)
        in.samples = flatten_for_mlp(std::move(in.samples));
    in.fingerprint = hex64(ds.fingerprint());
    return in;
}

void write_text(const std::string& path, const std::string& body)
{
    std::ofstream out(path, std::ios::binary);
    out << body;
    if (!out)
        throw DataError("cannot write " + path);
}

} // namespace

int run(int argc, const char* const* argv)
{
    CLI::App app{"Grid-encoded capacitance extraction pipeline"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Expand all help");
    const std::string command_line = join_args(argc, argv);

    // ---- tech validate
    auto* tech_cmd = app.add_subcommand("tech", "Technology file utilities");
    tech_cmd->require_subcommand(1);
    auto* tech_validate = tech_cmd->add_subcommand("validate", "Check a tech file and print derived windows");
    std::string tv_tech;
    bool tv_calibrate = false;
    int tv_layer = 0;
    int tv_resolution = 4;
    tech_validate->add_option("--tech", tv_tech, "Tech file")->required();
    tech_validate->add_flag("--calibrate", tv_calibrate, "Also calibrate the window with the field solver");
    tech_validate->add_option("--layer", tv_layer, "Layer to calibrate (0 = every layer)");
    tech_validate->add_option("--resolution", tv_resolution, "Solver cells per minimum feature");

    // ---- patgen
    auto* patgen = app.add_subcommand("patgen", "Generate random cross-section structures");
    std::string pg_tech, pg_pattern = "B", pg_layers, pg_out;
    int pg_count = 0;
    std::uint64_t pg_seed = 0;
    patgen->add_option("--tech", pg_tech, "Tech file")->required();
    patgen->add_option("--pattern", pg_pattern, "Pattern A, B or C");
    patgen->add_option("--layers", pg_layers, "Layer triple bottom,middle,top")->required();
    patgen->add_option("--count", pg_count, "Number of structures")->required()->check(CLI::PositiveNumber);
    patgen->add_option("--seed", pg_seed, "Base seed")->required();
    patgen->add_option("--out", pg_out, "Structure file to write")->required();

    // ---- solve
    auto* solve = app.add_subcommand("solve", "Field-solver labels for a structure file");
    std::string sv_tech, sv_in, sv_out, sv_solver = "direct";
    int sv_workers = 1, sv_resolution = 4;
    double sv_tol = 1e-8;
    bool sv_master_only = false;
    solve->add_option("--tech", sv_tech, "Tech file")->required();
    solve->add_option("--in", sv_in, "Structure file")->required();
    solve->add_option("--out", sv_out, "Label CSV to write")->required();
    solve->add_option("--workers", sv_workers, "Parallel structure solves")->check(CLI::PositiveNumber);
    solve->add_option("--resolution", sv_resolution, "Cells per minimum feature")->check(CLI::Range(2, 64));
    solve->add_option("--solver", sv_solver, "Linear solver: direct or pcg");
    solve->add_option("--tol", sv_tol, "Relative residual tolerance");
    solve->add_flag("--master-only", sv_master_only, "Drive only the master (skips the full Maxwell matrix)");

    // ---- encode
    auto* encode = app.add_subcommand("encode", "Grid-encode structures and labels into a dataset");
    std::string en_tech, en_in, en_labels, en_out;
    int en_L = 1024;
    double en_filter = 0.01;
    encode->add_option("--tech", en_tech, "Tech file")->required();
    encode->add_option("--in", en_in, "Structure file")->required();
    encode->add_option("--labels", en_labels, "Label CSV")->required();
    encode->add_option("--L", en_L, "Cells per channel")->check(CLI::PositiveNumber);
    encode->add_option("--filter", en_filter, "Drop couplings below this fraction of the total");
    encode->add_option("--out", en_out, "Dataset file to write")->required();

    // ---- train
    auto* train_cmd = app.add_subcommand("train", "Train a capacitance model");
    std::string tr_dataset, tr_model = "cnncap", tr_task = "total", tr_loss, tr_out, tr_history, tr_cnn_config;
    std::string tr_tech, tr_structures, tr_labels, tr_lr_grid, tr_batch_grid;
    int tr_batch = 0, tr_epochs = 100, tr_patience = 15, tr_search_epochs = 5;
    double tr_lr = 0.0, tr_train_fraction = 0.9, tr_val_fraction = 0.1;
    std::uint64_t tr_seed = 0, tr_split_seed = 0;
    bool tr_search = false;
    std::string tr_norm;
    train_cmd->add_option("--dataset", tr_dataset, "Encoded dataset (cnncap, gridmlp)");
    train_cmd->add_option("--tech", tr_tech, "Tech file (mlpcap)");
    train_cmd->add_option("--structures", tr_structures, "Structure file (mlpcap)");
    train_cmd->add_option("--labels", tr_labels, "Label CSV (mlpcap)");
    train_cmd->add_option("--model", tr_model, "cnncap, gridmlp or mlpcap");
    train_cmd->add_option("--task", tr_task, "total or coupling (ignored for mlpcap)");
    train_cmd->add_option("--loss", tr_loss, "mse or msre (default: per model and task)");
    train_cmd->add_option("--batch", tr_batch, "Batch size (default: per model)");
    train_cmd->add_option("--lr", tr_lr, "Learning rate (default: per model and task)");
    train_cmd->add_option("--epochs", tr_epochs, "Epoch budget")->check(CLI::PositiveNumber);
    train_cmd->add_option("--patience", tr_patience, "Early-stop patience")->check(CLI::PositiveNumber);
    train_cmd->add_option("--norm", tr_norm, "Target normalisation: mean or none (default: per model and task)");
    train_cmd->add_option("--seed", tr_seed, "Training seed")->required();
    train_cmd->add_option("--split-seed", tr_split_seed, "Seed of the train/test split")->required();
    train_cmd->add_option("--train-fraction", tr_train_fraction, "Structures in the training subset");
    train_cmd->add_option("--val-fraction", tr_val_fraction, "Validation share of the training subset");
    train_cmd->add_option("--cnn-config", tr_cnn_config, "CNN config override, e.g. 'blocks=1,1,1,1 channels=4,8,16,32'");
    train_cmd->add_flag("--grid-search", tr_search, "Pick lr and batch by grid search first");
    train_cmd->add_option("--lr-grid", tr_lr_grid, "Comma list (default 1e-5,1e-4,1e-3,1e-2)");
    train_cmd->add_option("--batch-grid", tr_batch_grid, "Comma list (default 16,32,64,128)");
    train_cmd->add_option("--search-epochs", tr_search_epochs, "Epochs per grid-search cell");
    train_cmd->add_option("--out", tr_out, "Model manifest to write")->required();
    train_cmd->add_option("--history", tr_history, "Training history to write");

    // ---- predict
    auto* predict_cmd = app.add_subcommand("predict", "Predict capacitances of structures");
    std::string pr_tech, pr_in, pr_out, pr_total, pr_coupling, pr_mlpcap;
    predict_cmd->add_option("--tech", pr_tech, "Tech file")->required();
    predict_cmd->add_option("--in", pr_in, "Structure file")->required();
    predict_cmd->add_option("--total-model", pr_total, "Total-capacitance model");
    predict_cmd->add_option("--coupling-model", pr_coupling, "Coupling-capacitance model");
    predict_cmd->add_option("--mlpcap-model", pr_mlpcap, "MLP-Cap model (all outputs)");
    predict_cmd->add_option("--out", pr_out, "Prediction CSV (label format)")->required();

    // ---- eval
    auto* eval_cmd = app.add_subcommand("eval", "Accuracy of a trained model on its held-out subset");
    std::string ev_model, ev_dataset, ev_tech, ev_structures, ev_labels, ev_report, ev_scatter, ev_subset = "test";
    eval_cmd->add_option("--model", ev_model, "Model manifest")->required();
    eval_cmd->add_option("--dataset", ev_dataset, "Encoded dataset (cnncap, gridmlp)");
    eval_cmd->add_option("--tech", ev_tech, "Tech file (mlpcap)");
    eval_cmd->add_option("--structures", ev_structures, "Structure file (mlpcap)");
    eval_cmd->add_option("--labels", ev_labels, "Label CSV (mlpcap)");
    eval_cmd->add_option("--subset", ev_subset, "test, train or all");
    eval_cmd->add_option("--report", ev_report, "Report file to write");
    eval_cmd->add_option("--scatter", ev_scatter, "Scatter CSV to write");

    // ---- assemble25d
    auto* asm_cmd = app.add_subcommand("assemble25d", "Crossover capacitance from two cross-sections");
    std::string as_a, as_b;
    double as_w1 = 0, as_w2 = 0;
    asm_cmd->add_option("--a", as_a, "Cross-section A: fringe_left,overlap,fringe_right (fF/um)")->required();
    asm_cmd->add_option("--b", as_b, "Cross-section B: fringe_left,overlap,fringe_right (fF/um)")->required();
    asm_cmd->add_option("--w1", as_w1, "Width of wire 1 (um)")->required();
    asm_cmd->add_option("--w2", as_w2, "Width of wire 2 (um)")->required();

    // ---- bench
    auto* bench = app.add_subcommand("bench", "Inference latency against the field solver");
    std::string bn_tech, bn_in, bn_total, bn_coupling, bn_out;
    int bn_repeats = 5, bn_count = 0, bn_solver_count = 20, bn_resolution = 4;
    bench->add_option("--tech", bn_tech, "Tech file")->required();
    bench->add_option("--in", bn_in, "Structure file")->required();
    bench->add_option("--total-model", bn_total, "Total-capacitance model")->required();
    bench->add_option("--coupling-model", bn_coupling, "Coupling-capacitance model")->required();
    bench->add_option("--repeats", bn_repeats, "Timed passes")->check(CLI::Range(5, 1000));
    bench->add_option("--count", bn_count, "Structures to use (0 = all)");
    bench->add_option("--solver-count", bn_solver_count, "Structures timed with the field solver");
    bench->add_option("--resolution", bn_resolution, "Solver resolution for the baseline");
    bench->add_option("--out", bn_out, "Report file to write");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    const auto t0 = Clock::now();
    try {
        if (*tech_validate) {
            log_config("tech validate", "tech=" + tv_tech + " calibrate=" + std::to_string(tv_calibrate) +
                                            " layer=" + std::to_string(tv_layer));
            const TechFile tech = load_techfile(tv_tech);
            validate_techfile(tech);
            std::cout << "tech " << tech.name << ": " << tech.layers.size() << " metal layers, "
                      << tech.dielectrics.size() << " dielectric slabs, ok\n";
            for (const auto& l : tech.layers) {
                std::cout << "  layer " << l.index << " window " << text::format_double(window_width(tech, l.index))
                          << " um";
                if (tv_calibrate && (tv_layer == 0 || tv_layer == l.index)) {
                    SolverOptions opt;
                    opt.resolution = tv_resolution;
                    const auto c = calibrate_window(tech, l.index, make_window_probe(tech, l.index, opt));
                    std::cout << ", calibrated " << text::format_double(c.window_width) << " um ("
                              << text::format_double(c.half_width_wmin) << " w_min half width, " << c.probes
                              << " probes)";
                }
                std::cout << '\n';
            }
        } else if (*patgen) {
            const std::string cfg = "tech=" + pg_tech + " pattern=" + pg_pattern + " layers=" + pg_layers +
                                    " count=" + std::to_string(pg_count) + " seed=" + std::to_string(pg_seed);
            log_config("patgen", cfg);
            const TechFile tech = load_techfile(pg_tech);
            const Pattern p = parse_pattern(pg_pattern);
            const LayerTriple layers = parse_layer_triple(pg_layers);
            std::vector<Structure2D> out;
            out.reserve(pg_count);
            for (int i = 0; i < pg_count; ++i)
                out.push_back(generate_pattern(p, tech, layers, derive_seed(pg_seed, static_cast<std::uint64_t>(i)),
                                               std::string(1, pattern_letter(p)) + std::to_string(i)));
            write_structures(pg_out, out, "patgen " + cfg + "\ntech_name=" + tech.name);
            std::cerr << "[patgen] wrote " << out.size() << " structures to " << pg_out << '\n';
        } else if (*solve) {
            SolverOptions opt;
            opt.resolution = sv_resolution;
            opt.tol = sv_tol;
            opt.solver = parse_solver(sv_solver);
            opt.drive_all = !sv_master_only;
            const std::string cfg = "tech=" + sv_tech + " in=" + sv_in + " resolution=" + std::to_string(sv_resolution) +
                                    " solver=" + sv_solver + " tol=" + text::format_double(sv_tol) +
                                    " drive_all=" + std::to_string(opt.drive_all) +
                                    " far_growth=" + text::format_double(opt.far_growth);
            log_config("solve", cfg + " workers=" + std::to_string(sv_workers));
            const TechFile tech = load_techfile(sv_tech);
            const auto ss = read_structures(sv_in);
            const auto res = extract_batch(tech, ss, opt, sv_workers);
            std::vector<LabelRow> rows;
            for (const auto& r : res) {
                const auto lr = label_rows(r, true);
                rows.insert(rows.end(), lr.begin(), lr.end());
            }
            write_labels(sv_out, rows, "solve " + cfg);
            std::cerr << "[solve] " << res.size() << " structures, " << rows.size() << " label rows\n";
        } else if (*encode) {
            const std::string cfg = "tech=" + en_tech + " in=" + en_in + " labels=" + en_labels +
                                    " L=" + std::to_string(en_L) + " filter=" + text::format_double(en_filter);
            log_config("encode", cfg);
            const TechFile tech = load_techfile(en_tech);
            const auto ss = read_structures(en_in);
            const auto res = results_from_labels(read_labels(en_labels));
            std::map<std::string, const CapacitanceResult*> by_id;
            for (const auto& r : res)
                by_id[r.structure_id] = &r;
            GridDataset ds;
            ds.L = en_L;
            for (const auto& s : ss) {
                const auto it = by_id.find(s.id);
                if (it == by_id.end())
                    throw DataError("no labels for structure '" + s.id + "'");
                auto g = expand_sample(tech, s, *it->second, en_L, en_filter);
                ds.samples.insert(ds.samples.end(), std::make_move_iterator(g.begin()),
                                  std::make_move_iterator(g.end()));
            }
            ds.meta.push_back("command=encode " + cfg);
            ds.meta.push_back("tech_name=" + tech.name);
            write_dataset(en_out, ds);
            std::cerr << "[encode] " << ss.size() << " structures -> " << ds.samples.size() << " samples\n";
        } else if (*train_cmd) {
            const nn::ModelKind kind = nn::parse_model_kind(tr_model);
            const TaskKind task = kind == nn::ModelKind::mlpcap ? TaskKind::total : parse_task(tr_task);
            TrainConfig cfg = default_train_config(kind, task);
            cfg.seed = tr_seed;
            cfg.epochs = tr_epochs;
            cfg.patience = tr_patience;
            cfg.val_fraction = tr_val_fraction;
            if (!tr_loss.empty())
                cfg.loss = parse_loss(tr_loss);
            if (tr_batch > 0)
                cfg.batch = tr_batch;
            if (tr_lr > 0)
                cfg.lr = tr_lr;
            if (!tr_norm.empty()) {
                if (tr_norm != "mean" && tr_norm != "none")
                    throw UsageError("--norm must be mean or none");
                cfg.norm = tr_norm == "mean" ? NormMode::mean : NormMode::none;
            }

            TrainingInput in = load_training_input(kind, task, tr_dataset, tr_tech, tr_structures, tr_labels);
            const Split split = split_dataset(in.samples, tr_train_fraction, tr_split_seed);

            std::function<std::unique_ptr<nn::Model>()> make;
            if (kind == nn::ModelKind::cnncap) {
                nn::CnnCapConfig cc;
                if (!tr_cnn_config.empty())
                    cc = nn::CnnCapConfig::parse(tr_cnn_config);
                cc.length = in.L;
                cc.validate();
                make = [cc] { return nn::make_cnn(cc); };
            } else if (kind == nn::ModelKind::gridmlp) {
                const int L = in.L;
                make = [L] { return nn::make_mlp(nn::ModelKind::gridmlp, nn::gridmlp_config(L)); };
            } else {
                make = [] { return nn::make_mlp(nn::ModelKind::mlpcap, nn::mlpcap_config()); };
            }

            std::string search_log;
            if (tr_search) {
                const auto lrs = tr_lr_grid.empty() ? default_lr_grid() : parse_doubles(tr_lr_grid, "--lr-grid");
                std::vector<int> bs;
                if (tr_batch_grid.empty())
                    bs = default_batch_grid();
                else
                    for (double b : parse_doubles(tr_batch_grid, "--batch-grid"))
                        bs.push_back(static_cast<int>(b));
                const auto gs = grid_search(make, split.train, cfg, lrs, bs, tr_search_epochs);
                cfg = gs.best;
                for (const auto& c : gs.log)
                    search_log += "batch=" + std::to_string(c.batch) + " lr=" + text::format_double(c.lr) +
                                  " val_err_avg=" + text::format_double(c.val_err_avg) + "; ";
                std::cerr << "[train] grid search picked batch=" << cfg.batch << " lr=" << cfg.lr << '\n';
            }

            log_config("train", cfg.to_string() + " train_fraction=" + text::format_double(tr_train_fraction) +
                                    " split_seed=" + std::to_string(tr_split_seed) +
                                    " dataset=" + in.fingerprint);
            auto model = make();
            const TrainResult r = train(*model, split.train, cfg, [](const EpochRecord& e) {
                std::cerr << "[train] epoch " << e.epoch << " loss " << e.train_loss << " val_err_avg "
                          << e.val_err_avg << " val_err_max " << e.val_err_max << '\n';
            });

            nn::ModelBundle b;
            b.model = std::move(model);
            b.meta["command"] = command_line;
            b.meta["train_config"] = cfg.to_string();
            b.meta["task"] = task_name(task);
            b.meta["loss"] = loss_name(cfg.loss);
            b.meta["seed"] = std::to_string(cfg.seed);
            b.meta["split_seed"] = std::to_string(tr_split_seed);
            b.meta["train_fraction"] = text::format_double(tr_train_fraction);
            b.meta["dataset_fingerprint"] = in.fingerprint;
            b.meta["target_scale"] = join_doubles(r.target_scale);
            b.meta["best_epoch"] = std::to_string(r.best_epoch);
            b.meta["epochs_run"] = std::to_string(r.history.size());
            if (!search_log.empty())
                b.meta["grid_search"] = search_log;
            save_bundle(b, tr_out);
            if (!tr_history.empty())
                write_text(tr_history, "# train " + cfg.to_string() + "\n" + history_text(r.history));
            std::cerr << "[train] best epoch " << r.best_epoch << " val_err_avg " << r.best_val_err_avg << '\n';
        } else if (*predict_cmd) {
            log_config("predict", "tech=" + pr_tech + " in=" + pr_in + " total_model=" + pr_total +
                                      " coupling_model=" + pr_coupling + " mlpcap_model=" + pr_mlpcap);
            if (pr_total.empty() && pr_coupling.empty() && pr_mlpcap.empty())
                throw UsageError("predict needs --total-model, --coupling-model or --mlpcap-model");
            const TechFile tech = load_techfile(pr_tech);
            const auto ss = read_structures(pr_in);
            std::vector<LabelRow> rows;
            auto run_grid = [&](const std::string& path, TaskKind want) {
                if (path.empty())
                    return;
                nn::ModelBundle b = nn::load_bundle(path);
                if (meta_at(b, "task") != task_name(want))
                    throw DataError(path + " is a " + meta_at(b, "task") + " model");
                const TrainedModel tm = as_trained(b);
                const int L = b.model->kind() == nn::ModelKind::cnncap ? b.model->in_length()
                                                                       : b.model->in_channels() / kChannels;
                for (const auto& s : ss) {
                    const DensityMap d = density_map(tech, s, L);
                    SampleSet one;
                    one.channels = b.model->in_channels();
                    one.length = b.model->in_length();
                    std::vector<int> ids;
                    auto add = [&](const FeatureVector& f, int id) {
                        one.x.insert(one.x.end(), f.values.begin(), f.values.end());
                        one.y.push_back(1.0);
                        one.group.push_back(0);
                        ids.push_back(id);
                    };
                    one.group_ids = {s.id};
                    if (want == TaskKind::total)
                        add(total_feature(d, s), -1);
                    else
                        for (const auto& c : s.conductors)
                            if (c.id != s.master().id)
                                add(coupling_feature(d, s, c.id), c.id);
                    const auto p = predict(*b.model, one, tm.scale);
                    for (std::size_t i = 0; i < p.size(); ++i)
                        rows.push_back({s.id, want == TaskKind::total ? LabelKind::total : LabelKind::coupling,
                                        ids[i], p[i]});
                }
            };
            run_grid(pr_total, TaskKind::total);
            run_grid(pr_coupling, TaskKind::coupling);
            if (!pr_mlpcap.empty()) {
                nn::ModelBundle b = nn::load_bundle(pr_mlpcap);
                const TrainedModel tm = as_trained(b);
                for (const auto& s : ss) {
                    SampleSet one;
                    one.channels = kPatternBFeatures;
                    one.length = 1;
                    one.outputs = 5;
                    for (double f : mlp_feature_pattern_b(s))
                        one.x.push_back(static_cast<float>(f));
                    one.y.assign(5, 1.0);
                    one.group = {0};
                    one.group_ids = {s.id};
                    const auto p = predict(*b.model, one, tm.scale);
                    rows.push_back({s.id, LabelKind::total, -1, p[0]});
                    for (int id = 1; id <= 4; ++id)
                        rows.push_back({s.id, LabelKind::coupling, id, p[id]});
                }
            }
            write_labels(pr_out, rows, command_line);
            std::cerr << "[predict] " << rows.size() << " predictions\n";
        } else if (*eval_cmd) {
            nn::ModelBundle b = nn::load_bundle(ev_model);
            const TrainedModel tm = as_trained(b);
            const nn::ModelKind kind = b.model->kind();
            const TaskKind task = parse_task(meta_at(b, "task"));
            log_config("eval", "model=" + ev_model + " subset=" + ev_subset);
            TrainingInput in = load_training_input(kind, task, ev_dataset, ev_tech, ev_structures, ev_labels);
            if (in.fingerprint != meta_at(b, "dataset_fingerprint"))
                std::cerr << "[eval] warning: dataset fingerprint differs from the training dataset\n";
            SampleSet eval_set;
            if (ev_subset == "all") {
                eval_set = std::move(in.samples);
            } else {
                const auto frac = text::parse_double(meta_at(b, "train_fraction"));
                const auto seed = text::parse_int(meta_at(b, "split_seed"));
                if (!frac || !seed)
                    throw DataError("model metadata has a malformed split description");
                Split sp = split_dataset(in.samples, *frac, static_cast<std::uint64_t>(*seed));
                if (ev_subset == "test")
                    eval_set = std::move(sp.test);
                else if (ev_subset == "train")
                    eval_set = std::move(sp.train);
                else
                    throw UsageError("--subset must be test, train or all");
            }
            const auto preds = predict(*b.model, eval_set, tm.scale);
            std::string out;
            if (kind == nn::ModelKind::mlpcap) {
                std::vector<double> tp, tl, cp, cl;
                for (std::size_t r = 0; r < eval_set.size(); ++r) {
                    tp.push_back(preds[r * 5]);
                    tl.push_back(eval_set.y[r * 5]);
                    for (int o = 1; o < 5; ++o) {
                        cp.push_back(preds[r * 5 + o]);
                        cl.push_back(eval_set.y[r * 5 + o]);
                    }
                }
                const auto rt = make_report("total", tp, tl);
                const auto rc = make_report("coupling", cp, cl);
                out = report_text(rt) + report_text(rc);
                if (!ev_scatter.empty())
                    scatter_export(rc, ev_scatter);
            } else {
                const auto r = make_report(task_name(task), preds, eval_set.y);
                out = report_text(r);
                if (!ev_scatter.empty())
                    scatter_export(r, ev_scatter);
            }
            out = "model " + std::string(nn::model_kind_name(kind)) + "\nsubset " + ev_subset + '\n' + out;
            std::cout << out;
            if (!ev_report.empty())
                write_text(ev_report, "# " + command_line + '\n' + out);
        } else if (*asm_cmd) {
            log_config("assemble25d", "a=" + as_a + " b=" + as_b + " w1=" + text::format_double(as_w1) +
                                          " w2=" + text::format_double(as_w2));
            auto triple = [](const std::string& s) {
                const auto v = parse_doubles(s, "cross-section");
                if (v.size() != 3)
                    throw UsageError("cross-section needs three comma-separated components");
                return CrossSectionCaps{v[0], v[1], v[2]};
            };
            const double c = assemble_crossover(triple(as_a), triple(as_b), as_w1, as_w2);
            std::cout << text::format_double(c) << '\n';
        } else if (*bench) {
            log_config("bench", "tech=" + bn_tech + " in=" + bn_in + " repeats=" + std::to_string(bn_repeats) +
                                    " count=" + std::to_string(bn_count) + " solver_count=" +
                                    std::to_string(bn_solver_count) + " resolution=" + std::to_string(bn_resolution) +
                                    " threads=1");
            const TechFile tech = load_techfile(bn_tech);
            auto ss = read_structures(bn_in);
            if (bn_count > 0 && static_cast<std::size_t>(bn_count) < ss.size())
                ss.resize(bn_count);
            nn::ModelBundle tb = nn::load_bundle(bn_total), cb = nn::load_bundle(bn_coupling);
            if (tb.model->kind() != nn::ModelKind::cnncap || cb.model->kind() != nn::ModelKind::cnncap)
                throw UsageError("bench expects two cnncap models");
            BenchResult br = bench_inference(tech, ss, tb.model->in_length(), as_trained(tb), as_trained(cb),
                                             bn_repeats);
            SolverOptions opt;
            opt.resolution = bn_resolution;
            const std::size_t n_solve = std::min<std::size_t>(ss.size(), std::max(1, bn_solver_count));
            br.solver_ms = bench_solver_ms(tech, std::span(ss).first(n_solve), opt);
            const std::string out = bench_text(br);
            std::cout << out;
            if (!bn_out.empty())
                write_text(bn_out, "# " + command_line + '\n' + out);
        }
        log_time(app.get_subcommands().front()->get_name(), t0);
        return kExitOk;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    }
}

int run(std::span<const std::string> args)
{
    std::vector<const char*> argv{"cnncap"};
    for (const auto& a : args)
        argv.push_back(a.c_str());
    return run(static_cast<int>(argv.size()), argv.data());
}

} // namespace cnncap::cli
