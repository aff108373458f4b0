#include "cnncap/nn/model.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "cnncap/error.hpp"
#include "cnncap/textio.hpp"

namespace cnncap::nn {

namespace {

class CnnModel final : public Model {
public:
    explicit CnnModel(const CnnCapConfig& cfg) : net_(cfg) {}

    ModelKind kind() const override { return ModelKind::cnncap; }
    int in_channels() const override { return net_.config().input_channels; }
    int in_length() const override { return net_.config().length; }
    int outputs() const override { return 1; }
    void init(std::uint64_t seed) override { net_.init(seed); }
    const Act<float>& forward(const Act<float>& x, bool train) override { return net_.forward(x, train); }
    void backward(const Act<float>& dy) override { net_.backward(dy); }
    std::vector<Param<float>*> params() override { return net_.params(); }
    std::size_t param_count() override { return net_.param_count(); }
    std::string config_string() const override { return net_.config().to_string(); }

private:
    CnnCap<float> net_;
};

class MlpModel final : public Model {
public:
    MlpModel(ModelKind kind, const MlpConfig& cfg) : kind_(kind), net_(cfg) {}

    ModelKind kind() const override { return kind_; }
    int in_channels() const override { return net_.config().inputs; }
    int in_length() const override { return 1; }
    int outputs() const override { return net_.config().outputs; }
    void init(std::uint64_t seed) override { net_.init(seed); }
    const Act<float>& forward(const Act<float>& x, bool train) override { return net_.forward(x, train); }
    void backward(const Act<float>& dy) override { net_.backward(dy); }
    std::vector<Param<float>*> params() override { return net_.params(); }
    std::size_t param_count() override { return net_.param_count(); }
    std::string config_string() const override { return net_.config().to_string(); }

private:
    ModelKind kind_;
    Mlp<float> net_;
};

std::string shape_text(const std::vector<int>& s)
{
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i)
        out += (i ? "," : "") + std::to_string(s[i]);
    return out;
}

std::string hex64(std::uint64_t v)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::filesystem::path blob_path(const std::filesystem::path& manifest)
{
    auto p = manifest;
    p += ".bin";
    return p;
}

} // namespace

std::string_view model_kind_name(ModelKind k)
{
    switch (k) {
    case ModelKind::cnncap:
        return "cnncap";
    case ModelKind::mlpcap:
        return "mlpcap";
    case ModelKind::gridmlp:
        return "gridmlp";
    }
    return "?";
}

ModelKind parse_model_kind(std::string_view s)
{
    if (s == "cnncap")
        return ModelKind::cnncap;
    if (s == "mlpcap")
        return ModelKind::mlpcap;
    if (s == "gridmlp")
        return ModelKind::gridmlp;
    throw UsageError("unknown model kind '" + std::string(s) + "' (expected cnncap, mlpcap or gridmlp)");
}

void Model::zero_grad()
{
    for (auto* p : params())
        if (p->trainable)
            p->zero_grad();
}

std::unique_ptr<Model> make_cnn(const CnnCapConfig& cfg)
{
    return std::make_unique<CnnModel>(cfg);
}

std::unique_ptr<Model> make_mlp(ModelKind kind, const MlpConfig& cfg)
{
    if (kind == ModelKind::cnncap)
        throw UsageError("make_mlp: cnncap is not an MLP");
    return std::make_unique<MlpModel>(kind, cfg);
}

std::unique_ptr<Model> make_model(ModelKind kind, const std::string& config)
{
    if (kind == ModelKind::cnncap)
        return make_cnn(CnnCapConfig::parse(config));
    return make_mlp(kind, MlpConfig::parse(config));
}

MlpConfig mlpcap_config()
{
    return MlpConfig{9, {256, 256, 512}, 5};
}

MlpConfig gridmlp_config(int length)
{
    return MlpConfig{3 * length, {256, 256, 512}, 1};
}

void pack_batch(const Model& m, const float* samples, const std::size_t* rows, int count, Act<float>& out)
{
    const int C = m.in_channels(), L = m.in_length();
    const std::size_t stride = static_cast<std::size_t>(C) * L;
    out.resize(C, count, L);
    for (int b = 0; b < count; ++b) {
        const float* s = samples + rows[b] * stride;
        for (int c = 0; c < C; ++c)
            std::memcpy(out.v.data() + (static_cast<std::size_t>(c) * count + b) * L, s + static_cast<std::size_t>(c) * L,
                        sizeof(float) * L);
    }
}

void save_bundle(const ModelBundle& b, const std::filesystem::path& path)
{
    if (!b.model)
        throw UsageError("save_bundle: empty bundle");
    Model& m = *b.model;
    std::vector<char> blob;
    std::ostringstream tensors;
    for (auto* p : m.params()) {
        const std::size_t off = blob.size();
        tensors << "tensor " << p->name << ' ' << shape_text(p->shape) << " f32 " << off << '\n';
        blob.resize(off + p->size() * sizeof(float));
        std::memcpy(blob.data() + off, p->value.data(), p->size() * sizeof(float));
    }

    std::ostringstream man;
    man << "cnncap-bundle 1\n";
    man << "kind " << model_kind_name(m.kind()) << '\n';
    man << "config " << m.config_string() << '\n';
    man << "params " << m.param_count() << '\n';
    for (const auto& [k, v] : b.meta) {
        if (k.empty() || k.find_first_of(" \t\n") != std::string::npos || v.find('\n') != std::string::npos)
            throw UsageError("save_bundle: metadata key/value must be single-line, key without spaces: '" + k + "'");
        man << "meta " << k << ' ' << v << '\n';
    }
    man << "blob " << blob_path(path).filename().string() << ' ' << blob.size() << ' '
        << hex64(text::fnv1a64(blob.data(), blob.size())) << '\n';
    man << tensors.str();

    std::ofstream bo(blob_path(path), std::ios::binary);
    bo.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    std::ofstream mo(path);
    mo << man.str();
    if (!bo || !mo)
        throw DataError("save_bundle: cannot write " + path.string());
}

ModelBundle load_bundle(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open model manifest " + path.string());
    auto fail = [&](const std::string& why) { return DataError(path.string() + ": " + why); };

    std::string line;
    if (!std::getline(in, line) || text::trim(line) != "cnncap-bundle 1")
        throw fail("not a model manifest (bad magic line)");

    std::string kind, config;
    std::map<std::string, std::string> meta;
    std::size_t blob_bytes = 0;
    std::uint64_t checksum = 0;
    bool have_blob = false;
    struct Entry {
        std::string name, shape;
        std::size_t offset;
    };
    std::vector<Entry> entries;

    while (std::getline(in, line)) {
        const std::string_view l = line;
        if (text::trim(l).empty())
            continue;
        const auto sp = l.find(' ');
        const auto key = l.substr(0, sp);
        const std::string_view rest = sp == std::string_view::npos ? std::string_view{} : l.substr(sp + 1);
        if (key == "kind") {
            kind = std::string(text::trim(rest));
        } else if (key == "config") {
            config = std::string(rest);
        } else if (key == "params") {
            // informational
        } else if (key == "meta") {
            const auto s2 = rest.find(' ');
            if (s2 == std::string_view::npos)
                meta[std::string(rest)] = "";
            else
                meta[std::string(rest.substr(0, s2))] = std::string(rest.substr(s2 + 1));
        } else if (key == "blob") {
            const auto f = text::split_ws(rest);
            const auto n = f.size() == 3 ? text::parse_int(f[1]) : std::nullopt;
            if (!n || *n < 0 || f[2].size() != 16)
                throw fail("corrupt blob line");
            blob_bytes = static_cast<std::size_t>(*n);
            checksum = std::stoull(std::string(f[2]), nullptr, 16);
            have_blob = true;
        } else if (key == "tensor") {
            const auto f = text::split_ws(rest);
            const auto off = f.size() == 4 ? text::parse_int(f[3]) : std::nullopt;
            if (!off || *off < 0 || f[2] != "f32")
                throw fail("corrupt tensor line '" + line + "'");
            entries.push_back({std::string(f[0]), std::string(f[1]), static_cast<std::size_t>(*off)});
        } else {
            throw fail("unknown manifest key '" + std::string(key) + "'");
        }
    }
    if (kind.empty() || config.empty() || !have_blob)
        throw fail("manifest is missing kind, config or blob line");

    ModelBundle b;
    try {
        b.model = make_model(parse_model_kind(kind), config);
    } catch (const UsageError& e) {
        throw fail(e.what());
    }
    b.meta = std::move(meta);

    std::ifstream bi(blob_path(path), std::ios::binary);
    if (!bi)
        throw fail("cannot open weight blob " + blob_path(path).string());
    std::vector<char> blob((std::istreambuf_iterator<char>(bi)), std::istreambuf_iterator<char>());
    if (blob.size() < blob_bytes)
        throw fail("weight blob truncated: " + std::to_string(blob.size()) + " of " + std::to_string(blob_bytes) +
                   " bytes");
    if (blob.size() != blob_bytes)
        throw fail("weight blob has " + std::to_string(blob.size() - blob_bytes) + " trailing bytes");
    if (text::fnv1a64(blob.data(), blob.size()) != checksum)
        throw fail("weight blob checksum mismatch");

    auto params = b.model->params();
    if (params.size() != entries.size())
        throw fail("manifest lists " + std::to_string(entries.size()) + " tensors, config implies " +
                   std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Param<float>& p = *params[i];
        const Entry& e = entries[i];
        if (e.name != p.name || e.shape != shape_text(p.shape))
            throw fail("tensor " + std::to_string(i) + " is '" + e.name + "' [" + e.shape + "], expected '" + p.name +
                       "' [" + shape_text(p.shape) + "]");
        const std::size_t bytes = p.size() * sizeof(float);
        if (e.offset + bytes > blob.size())
            throw fail("tensor '" + e.name + "' runs past the end of the blob");
        std::memcpy(p.value.data(), blob.data() + e.offset, bytes);
    }
    b.model->zero_grad();
    return b;
}

std::vector<std::vector<float>> snapshot(Model& m)
{
    std::vector<std::vector<float>> out;
    for (auto* p : m.params())
        out.push_back(p->value);
    return out;
}

void restore(Model& m, const std::vector<std::vector<float>>& values)
{
    auto params = m.params();
    if (params.size() != values.size())
        throw std::invalid_argument("restore: tensor count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i]->value.size() != values[i].size())
            throw std::invalid_argument("restore: size mismatch for " + params[i]->name);
        params[i]->value = values[i];
    }
}

} // namespace cnncap::nn
