#pragma once

// Uniform float32 front end over the three regressors, plus the on-disk
// bundle: a text manifest and a raw little-endian float blob next to it.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "cnncap/nn/cnncap.hpp"
#include "cnncap/nn/mlp.hpp"

namespace cnncap::nn {

enum class ModelKind { cnncap, mlpcap, gridmlp };

std::string_view model_kind_name(ModelKind k);
ModelKind parse_model_kind(std::string_view s);

class Model {
public:
    virtual ~Model() = default;

    virtual ModelKind kind() const = 0;
    /// Input layout [channels][B][length]; MLPs use length 1.
    virtual int in_channels() const = 0;
    virtual int in_length() const = 0;
    virtual int outputs() const = 0;
    int in_size() const { return in_channels() * in_length(); }

    virtual void init(std::uint64_t seed) = 0;
    /// Returns [outputs][B][1].
    virtual const Act<float>& forward(const Act<float>& x, bool train) = 0;
    virtual void backward(const Act<float>& dy) = 0;
    virtual std::vector<Param<float>*> params() = 0;
    virtual std::size_t param_count() = 0;
    /// Text that `make_model(kind(), config_string())` accepts.
    virtual std::string config_string() const = 0;

    void zero_grad();
};

std::unique_ptr<Model> make_cnn(const CnnCapConfig& cfg);
std::unique_ptr<Model> make_mlp(ModelKind kind, const MlpConfig& cfg);
std::unique_ptr<Model> make_model(ModelKind kind, const std::string& config);

/// MLP-Cap for Pattern-B (9 inputs, total + 4 couplings) and Grid+MLP (3L -> 1).
MlpConfig mlpcap_config();
MlpConfig gridmlp_config(int length);

/// Packs flat samples (channel-major, in_size() floats each) into a batch.
void pack_batch(const Model& m, const float* samples, const std::size_t* rows, int count, Act<float>& out);

struct ModelBundle {
    std::unique_ptr<Model> model;
    /// Free-form metadata: seed, loss, hyper-parameters, dataset fingerprint, ...
    std::map<std::string, std::string> meta;
};

/// Writes `path` (manifest) and `path` + ".bin" (blob).
void save_bundle(const ModelBundle& b, const std::filesystem::path& path);
ModelBundle load_bundle(const std::filesystem::path& path);

/// Deep copy of all tensor values, used for best-checkpoint snapshots.
std::vector<std::vector<float>> snapshot(Model& m);
void restore(Model& m, const std::vector<std::vector<float>>& values);

} // namespace cnncap::nn
