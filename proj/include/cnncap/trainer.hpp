#pragma once

// Losses, Adam, structure-level splitting, the training loop and grid search.

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cnncap/dataset_io.hpp"
#include "cnncap/fieldsolver.hpp"
#include "cnncap/gridrep.hpp"
#include "cnncap/nn/model.hpp"

namespace cnncap {

/// Flat training tensors. Targets are row-major [n][outputs]; a NaN target is
/// masked out of losses and metrics (filtered couplings in MLP-Cap rows).
struct SampleSet {
    int channels = 0, length = 0, outputs = 1;
    std::vector<float> x;
    std::vector<double> y;
    std::vector<int> group; // structure index per sample
    std::vector<std::string> group_ids;

    std::size_t size() const { return group.size(); }
    std::size_t in_size() const { return static_cast<std::size_t>(channels) * length; }
    /// Rows in the given order; groups are renumbered densely in first-seen order.
    SampleSet subset(std::span<const std::size_t> rows) const;
    std::uint64_t fingerprint() const;
};

/// Samples of one task from an encoded dataset, as [3][L] inputs.
SampleSet grid_samples(const GridDataset& ds, TaskKind task);
/// Same rows flattened to [3L][1] for Grid+MLP.
SampleSet flatten_for_mlp(SampleSet s);
/// Pattern-B 9-parameter rows with targets (total, C_1..C_4); couplings below
/// filter_ratio * total are masked.
SampleSet mlpcap_samples(std::span<const Structure2D> structures, std::span<const CapacitanceResult> labels,
                         double filter_ratio = 0.01);

struct Split {
    SampleSet train, test;
};

/// Structure-level split: floor(fraction * groups) structures go to train.
/// Throws DataError when either side would be empty.
Split split_dataset(const SampleSet& s, double train_fraction, std::uint64_t seed);

enum class LossKind { mse, msre };
const char* loss_name(LossKind k);
LossKind parse_loss(std::string_view s);

double loss_mse(std::span<const double> preds, std::span<const double> labels);
double loss_msre(std::span<const double> preds, std::span<const double> labels);

/// Mean over rows (`outputs` targets per row) and its gradient w.r.t. preds.
/// NaN labels contribute nothing.
double loss_and_grad(LossKind k, std::span<const double> preds, std::span<const double> labels, int outputs,
                     std::span<double> grad);

struct AdamHyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// One bias-corrected Adam update at step t (1-based).
template <class T>
void adam_update(std::span<T> theta, std::span<const T> grad, std::span<T> m, std::span<T> v, long t,
                 const AdamHyper& h)
{
    if (grad.size() != theta.size() || m.size() != theta.size() || v.size() != theta.size())
        throw std::invalid_argument("adam_update: shape mismatch");
    const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double g = grad[i];
        const double mi = h.beta1 * m[i] + (1.0 - h.beta1) * g;
        const double vi = h.beta2 * v[i] + (1.0 - h.beta2) * g * g;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        theta[i] = static_cast<T>(theta[i] - h.lr * (mi / c1) / (std::sqrt(vi / c2) + h.eps));
    }
}

class Adam {
public:
    explicit Adam(AdamHyper h = {}) : h_(h) {}
    void step(const std::vector<nn::Param<float>*>& params);
    long steps() const { return t_; }
    const AdamHyper& hyper() const { return h_; }

private:
    AdamHyper h_;
    long t_ = 0;
    std::vector<std::vector<float>> m_, v_;
};

enum class NormMode { none, mean };

struct TrainConfig {
    nn::ModelKind model = nn::ModelKind::cnncap;
    TaskKind task = TaskKind::total;
    LossKind loss = LossKind::mse;
    int batch = 64;
    double lr = 1e-4;
    int epochs = 100;
    int patience = 15;
    std::uint64_t seed = 0;
    NormMode norm = NormMode::mean;
    double val_fraction = 0.1;

    std::string to_string() const;
};

/// Per-kind/task defaults: CNN total MSE lr 1e-4 with mean normalisation, CNN
/// coupling MSRE lr 1e-5 on raw targets, MLPs MSE batch 32 lr 1e-5.
TrainConfig default_train_config(nn::ModelKind kind, TaskKind task);

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_err_avg = NAN;
    double val_err_max = NAN;
    double lr = 0.0;
};

struct TrainResult {
    std::vector<EpochRecord> history;
    int best_epoch = 0;
    double best_val_err_avg = NAN;
    bool stopped_early = false;
    std::vector<double> target_scale; // per output; predictions are model output * scale
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Initialises `model` from the seed, trains, and leaves the best-validation
/// weights in place (the last epoch when there is no validation subset).
/// Throws NumericalError on a non-finite loss.
TrainResult train(nn::Model& model, const SampleSet& data, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Tab-separated epoch, train_loss, val_err_avg, val_err_max, lr.
std::string history_text(const std::vector<EpochRecord>& h);

/// Inference in batches; returns [n][outputs] de-normalised predictions.
std::vector<double> predict(nn::Model& model, const SampleSet& s, std::span<const double> scale, int batch = 128);

struct GridSearchCell {
    int batch = 0;
    double lr = 0.0;
    double val_err_avg = NAN;
    int best_epoch = 0;
};

struct GridSearchResult {
    TrainConfig best;
    std::vector<GridSearchCell> log;
};

std::vector<double> default_lr_grid();
std::vector<int> default_batch_grid();

/// Trains every (lr, batch) pair for `epochs` epochs and keeps the lowest
/// validation Err_avg (ties go to the earlier cell).
GridSearchResult grid_search(const std::function<std::unique_ptr<nn::Model>()>& make, const SampleSet& data,
                             const TrainConfig& base, std::span<const double> lr_grid,
                             std::span<const int> batch_grid, int epochs);

} // namespace cnncap
