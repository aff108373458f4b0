#include "cnncap/trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "cnncap/error.hpp"
#include "cnncap/evalkit.hpp"
#include "cnncap/rng.hpp"
#include "cnncap/textio.hpp"

namespace cnncap {

namespace {

std::string fmt(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

int group_index(std::map<std::string, int>& ids, SampleSet& s, const std::string& id)
{
    auto [it, fresh] = ids.try_emplace(id, static_cast<int>(s.group_ids.size()));
    if (fresh)
        s.group_ids.push_back(id);
    return it->second;
}

// Validation metrics over every unmasked target.
std::pair<double, double> validation_errors(nn::Model& model, const SampleSet& val, std::span<const double> scale)
{
    const auto preds = predict(model, val, scale);
    std::vector<double> p, l;
    for (std::size_t i = 0; i < preds.size(); ++i)
        if (!std::isnan(val.y[i])) {
            p.push_back(preds[i]);
            l.push_back(val.y[i]);
        }
    if (p.empty())
        return {NAN, NAN};
    const ErrorReport r = summarize(relative_errors(p, l));
    return {r.err_avg, r.err_max};
}

} // namespace

// ---------------------------------------------------------------- SampleSet

SampleSet SampleSet::subset(std::span<const std::size_t> rows) const
{
    SampleSet out;
    out.channels = channels;
    out.length = length;
    out.outputs = outputs;
    out.x.reserve(rows.size() * in_size());
    out.y.reserve(rows.size() * outputs);
    std::map<std::string, int> ids;
    for (std::size_t r : rows) {
        if (r >= size())
            throw std::out_of_range("SampleSet::subset: row out of range");
        out.x.insert(out.x.end(), x.begin() + static_cast<std::ptrdiff_t>(r * in_size()),
                     x.begin() + static_cast<std::ptrdiff_t>((r + 1) * in_size()));
        out.y.insert(out.y.end(), y.begin() + static_cast<std::ptrdiff_t>(r * outputs),
                     y.begin() + static_cast<std::ptrdiff_t>((r + 1) * outputs));
        out.group.push_back(group_index(ids, out, group_ids[group[r]]));
    }
    return out;
}

std::uint64_t SampleSet::fingerprint() const
{
    std::uint64_t h = text::fnv1a64(&channels, sizeof channels);
    h = text::fnv1a64(&length, sizeof length, h);
    h = text::fnv1a64(&outputs, sizeof outputs, h);
    h = text::fnv1a64(x.data(), x.size() * sizeof(float), h);
    h = text::fnv1a64(y.data(), y.size() * sizeof(double), h);
    return text::fnv1a64(group.data(), group.size() * sizeof(int), h);
}

SampleSet grid_samples(const GridDataset& ds, TaskKind task)
{
    SampleSet s;
    s.channels = kChannels;
    s.length = ds.L;
    s.outputs = 1;
    std::map<std::string, int> ids;
    for (const auto& g : ds.samples) {
        if (g.x.task != task)
            continue;
        if (g.x.L != ds.L || g.x.values.size() != s.in_size())
            throw DataError("dataset record for '" + g.structure_id + "' has the wrong length");
        s.x.insert(s.x.end(), g.x.values.begin(), g.x.values.end());
        s.y.push_back(g.target);
        s.group.push_back(group_index(ids, s, g.structure_id));
    }
    return s;
}

SampleSet flatten_for_mlp(SampleSet s)
{
    s.channels *= s.length;
    s.length = 1;
    return s;
}

SampleSet mlpcap_samples(std::span<const Structure2D> structures, std::span<const CapacitanceResult> labels,
                         double filter_ratio)
{
    std::map<std::string, const CapacitanceResult*> by_id;
    for (const auto& l : labels)
        by_id[l.structure_id] = &l;
    SampleSet s;
    s.channels = kPatternBFeatures;
    s.length = 1;
    s.outputs = 5;
    std::map<std::string, int> ids;
    for (const auto& st : structures) {
        if (st.pattern != Pattern::B)
            throw DataError("MLP-Cap rows need Pattern-B structures; '" + st.id + "' is Pattern-" +
                            pattern_letter(st.pattern));
        const auto it = by_id.find(st.id);
        if (it == by_id.end())
            throw DataError("no labels for structure '" + st.id + "'");
        const CapacitanceResult& c = *it->second;
        for (double f : mlp_feature_pattern_b(st))
            s.x.push_back(static_cast<float>(f));
        s.y.push_back(c.total);
        for (int id = 1; id <= 4; ++id) {
            const auto ci = c.couplings.find(id);
            const bool keep = ci != c.couplings.end() && ci->second >= filter_ratio * c.total;
            s.y.push_back(keep ? ci->second : NAN);
        }
        s.group.push_back(group_index(ids, s, st.id));
    }
    return s;
}

Split split_dataset(const SampleSet& s, double train_fraction, std::uint64_t seed)
{
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw UsageError("split: train fraction must be in (0, 1)");
    const std::size_t groups = s.group_ids.size();
    std::vector<std::size_t> order(groups);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(order);
    const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(groups) + 1e-9));
    if (n_train == 0 || n_train == groups)
        throw DataError("split: " + std::to_string(groups) + " structures at fraction " + fmt(train_fraction) +
                        " leave one side empty");
    std::vector<char> in_train(groups, 0);
    for (std::size_t i = 0; i < n_train; ++i)
        in_train[order[i]] = 1;
    std::vector<std::size_t> tr, te;
    for (std::size_t r = 0; r < s.size(); ++r)
        (in_train[s.group[r]] ? tr : te).push_back(r);
    return {s.subset(tr), s.subset(te)};
}

// ---------------------------------------------------------------- losses

const char* loss_name(LossKind k)
{
    return k == LossKind::mse ? "mse" : "msre";
}

LossKind parse_loss(std::string_view s)
{
    if (s == "mse")
        return LossKind::mse;
    if (s == "msre")
        return LossKind::msre;
    throw UsageError("unknown loss '" + std::string(s) + "' (expected mse or msre)");
}

double loss_mse(std::span<const double> preds, std::span<const double> labels)
{
    if (preds.size() != labels.size() || preds.empty())
        throw DataError("loss_mse: need equal, non-zero lengths");
    double s = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i)
        s += (preds[i] - labels[i]) * (preds[i] - labels[i]);
    return s / static_cast<double>(preds.size());
}

double loss_msre(std::span<const double> preds, std::span<const double> labels)
{
    if (preds.size() != labels.size() || preds.empty())
        throw DataError("loss_msre: need equal, non-zero lengths");
    double s = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (labels[i] == 0.0)
            throw DataError("loss_msre: zero label at index " + std::to_string(i));
        const double r = 1.0 - preds[i] / labels[i];
        s += r * r;
    }
    return s / static_cast<double>(preds.size());
}

double loss_and_grad(LossKind k, std::span<const double> preds, std::span<const double> labels, int outputs,
                     std::span<double> grad)
{
    if (preds.size() != labels.size() || grad.size() != preds.size() || outputs < 1 || preds.size() % outputs != 0 ||
        preds.empty())
        throw DataError("loss: inconsistent prediction/label/gradient sizes");
    const double n = static_cast<double>(preds.size() / outputs);
    double s = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const double y = labels[i];
        if (std::isnan(y)) {
            grad[i] = 0.0;
            continue;
        }
        if (k == LossKind::mse) {
            const double d = preds[i] - y;
            s += d * d;
            grad[i] = 2.0 * d / n;
        } else {
            if (y == 0.0)
                throw DataError("loss_msre: zero label");
            const double r = 1.0 - preds[i] / y;
            s += r * r;
            grad[i] = -2.0 * r / (y * n);
        }
    }
    return s / n;
}

// ---------------------------------------------------------------- Adam

void Adam::step(const std::vector<nn::Param<float>*>& params)
{
    if (m_.empty()) {
        m_.resize(params.size());
        v_.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i)
            if (params[i]->trainable) {
                m_[i].assign(params[i]->size(), 0.0f);
                v_[i].assign(params[i]->size(), 0.0f);
            }
    }
    if (m_.size() != params.size())
        throw std::invalid_argument("Adam::step: parameter list changed between steps");
    ++t_;
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = *params[i];
        if (!p.trainable)
            continue;
        adam_update<float>(p.value, p.grad, m_[i], v_[i], t_, h_);
    }
}

// ---------------------------------------------------------------- training

std::string TrainConfig::to_string() const
{
    std::ostringstream os;
    os << "model=" << nn::model_kind_name(model) << " task=" << (task == TaskKind::total ? "total" : "coupling")
       << " loss=" << loss_name(loss) << " batch=" << batch << " lr=" << fmt(lr) << " epochs=" << epochs
       << " patience=" << patience << " seed=" << seed << " norm=" << (norm == NormMode::mean ? "mean" : "none")
       << " val_fraction=" << fmt(val_fraction);
    return os.str();
}

TrainConfig default_train_config(nn::ModelKind kind, TaskKind task)
{
    TrainConfig c;
    c.model = kind;
    c.task = task;
    if (kind == nn::ModelKind::cnncap) {
        c.batch = 64;
        if (task == TaskKind::total) {
            c.loss = LossKind::mse;
            c.lr = 1e-4;
            c.norm = NormMode::mean;
        } else {
            c.loss = LossKind::msre;
            c.lr = 1e-5;
            c.norm = NormMode::mean;
        }
    } else {
        c.loss = LossKind::mse;
        c.batch = 32;
        c.lr = 1e-5;
        c.norm = NormMode::mean;
    }
    return c;
}

TrainResult train(nn::Model& model, const SampleSet& data, const TrainConfig& cfg, const EpochCallback& on_epoch)
{
    if (data.size() == 0)
        throw DataError("train: empty dataset");
    if (cfg.batch < 1 || cfg.epochs < 1 || !(cfg.lr >= 0.0))
        throw UsageError("train: batch and epochs must be positive, lr non-negative");
    if (static_cast<std::size_t>(model.in_size()) != data.in_size() || model.in_channels() != data.channels ||
        model.outputs() != data.outputs)
        throw DataError("train: model expects " + std::to_string(model.in_channels()) + "x" +
                        std::to_string(model.in_length()) + " -> " + std::to_string(model.outputs()) +
                        ", dataset has " + std::to_string(data.channels) + "x" + std::to_string(data.length) +
                        " -> " + std::to_string(data.outputs));

    model.init(derive_seed(cfg.seed, 1));

    SampleSet fit, val;
    if (cfg.val_fraction > 0.0 && data.group_ids.size() >= 2) {
        auto sp = split_dataset(data, 1.0 - cfg.val_fraction, derive_seed(cfg.seed, 3));
        fit = std::move(sp.train);
        val = std::move(sp.test);
    } else {
        fit = data;
    }

    TrainResult res;
    res.target_scale.assign(data.outputs, 1.0);
    if (cfg.norm == NormMode::mean)
        for (int o = 0; o < data.outputs; ++o) {
            double s = 0.0;
            std::size_t n = 0;
            for (std::size_t r = 0; r < fit.size(); ++r) {
                const double y = fit.y[r * data.outputs + o];
                if (!std::isnan(y)) {
                    s += y;
                    ++n;
                }
            }
            if (n > 0 && s / n > 0.0)
                res.target_scale[o] = s / n;
        }
    std::vector<double> ynorm(fit.y.size());
    for (std::size_t i = 0; i < ynorm.size(); ++i)
        ynorm[i] = fit.y[i] / res.target_scale[i % data.outputs];

    Adam adam(AdamHyper{cfg.lr});
    const auto params = model.params();
    model.zero_grad();
    Rng shuffle_rng(derive_seed(cfg.seed, 2));
    std::vector<std::size_t> perm(fit.size());
    nn::Act<float> xb, dy;
    std::vector<double> preds, labels, grad;
    std::vector<std::vector<float>> best;
    double best_err = std::numeric_limits<double>::infinity();
    int since_best = 0;
    const int O = data.outputs;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::iota(perm.begin(), perm.end(), 0);
        shuffle_rng.shuffle(perm);
        double loss_sum = 0.0;
        std::size_t seen = 0;
        int batch_index = 0;
        for (std::size_t start = 0; start < perm.size(); start += cfg.batch, ++batch_index) {
            const int B = static_cast<int>(std::min<std::size_t>(cfg.batch, perm.size() - start));
            nn::pack_batch(model, fit.x.data(), perm.data() + start, B, xb);
            const auto& y = model.forward(xb, true);
            preds.resize(static_cast<std::size_t>(B) * O);
            labels.resize(preds.size());
            grad.resize(preds.size());
            for (int b = 0; b < B; ++b)
                for (int o = 0; o < O; ++o) {
                    preds[b * O + o] = y.v[static_cast<std::size_t>(o) * B + b];
                    labels[b * O + o] = ynorm[perm[start + b] * O + o];
                }
            const double loss = loss_and_grad(cfg.loss, preds, labels, O, grad);
            if (!std::isfinite(loss))
                throw NumericalError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                                     std::to_string(batch_index));
            dy.resize(O, B, 1);
            for (int b = 0; b < B; ++b)
                for (int o = 0; o < O; ++o)
                    dy.v[static_cast<std::size_t>(o) * B + b] = static_cast<float>(grad[b * O + o]);
            model.backward(dy);
            adam.step(params);
            model.zero_grad();
            loss_sum += loss * B;
            seen += B;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(seen);
        rec.lr = cfg.lr;
        bool stop = false;
        if (val.size() > 0) {
            std::tie(rec.val_err_avg, rec.val_err_max) = validation_errors(model, val, res.target_scale);
            if (rec.val_err_avg < best_err) {
                best_err = rec.val_err_avg;
                best = nn::snapshot(model);
                res.best_epoch = epoch;
                since_best = 0;
            } else if (++since_best >= cfg.patience) {
                stop = true;
            }
        } else {
            res.best_epoch = epoch;
        }
        res.history.push_back(rec);
        if (on_epoch)
            on_epoch(rec);
        if (stop) {
            res.stopped_early = epoch < cfg.epochs;
            break;
        }
    }
    if (!best.empty()) {
        nn::restore(model, best);
        res.best_val_err_avg = best_err;
    }
    return res;
}

std::string history_text(const std::vector<EpochRecord>& h)
{
    std::string out = "epoch\ttrain_loss\tval_err_avg\tval_err_max\tlr\n";
    for (const auto& r : h)
        out += std::to_string(r.epoch) + '\t' + fmt(r.train_loss) + '\t' + fmt(r.val_err_avg) + '\t' +
               fmt(r.val_err_max) + '\t' + fmt(r.lr) + '\n';
    return out;
}

std::vector<double> predict(nn::Model& model, const SampleSet& s, std::span<const double> scale, int batch)
{
    const int O = model.outputs();
    if (static_cast<int>(scale.size()) != O)
        throw DataError("predict: scale has " + std::to_string(scale.size()) + " entries for " + std::to_string(O) +
                        " outputs");
    if (static_cast<std::size_t>(model.in_size()) != s.in_size())
        throw DataError("predict: input size mismatch");
    std::vector<double> out(s.size() * O);
    std::vector<std::size_t> rows;
    nn::Act<float> xb;
    for (std::size_t start = 0; start < s.size(); start += batch) {
        const int B = static_cast<int>(std::min<std::size_t>(batch, s.size() - start));
        rows.resize(B);
        std::iota(rows.begin(), rows.end(), start);
        nn::pack_batch(model, s.x.data(), rows.data(), B, xb);
        const auto& y = model.forward(xb, false);
        for (int b = 0; b < B; ++b)
            for (int o = 0; o < O; ++o)
                out[(start + b) * O + o] = static_cast<double>(y.v[static_cast<std::size_t>(o) * B + b]) * scale[o];
    }
    return out;
}

std::vector<double> default_lr_grid()
{
    return {1e-5, 1e-4, 1e-3, 1e-2};
}

std::vector<int> default_batch_grid()
{
    return {16, 32, 64, 128};
}

GridSearchResult grid_search(const std::function<std::unique_ptr<nn::Model>()>& make, const SampleSet& data,
                             const TrainConfig& base, std::span<const double> lr_grid,
                             std::span<const int> batch_grid, int epochs)
{
    if (lr_grid.empty() || batch_grid.empty())
        throw UsageError("grid search: empty grid");
    GridSearchResult out;
    out.best = base;
    double best = std::numeric_limits<double>::infinity();
    bool have = false;
    for (double lr : lr_grid)
        for (int b : batch_grid) {
            if (!(lr >= 1e-5 * (1 - 1e-12) && lr <= 1e-2 * (1 + 1e-12)) || (b != 16 && b != 32 && b != 64 && b != 128))
                throw UsageError("grid search: lr must lie in [1e-5, 1e-2] and batch in {16, 32, 64, 128}");
            TrainConfig c = base;
            c.lr = lr;
            c.batch = b;
            c.epochs = epochs;
            auto model = make();
            const TrainResult r = train(*model, data, c);
            GridSearchCell cell{b, lr, r.best_val_err_avg, r.best_epoch};
            out.log.push_back(cell);
            const double score = std::isnan(cell.val_err_avg) ? std::numeric_limits<double>::infinity() : cell.val_err_avg;
            if (!have || score < best) {
                best = score;
                out.best = c;
                out.best.epochs = base.epochs;
                have = true;
            }
        }
    return out;
}

} // namespace cnncap
