#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "cnncap/error.hpp"
#include "cnncap/nn/model.hpp"
#include "cnncap/rng.hpp"

using namespace cnncap;
using namespace cnncap::nn;

namespace {

std::filesystem::path scratch(const std::string& name)
{
    const auto dir = std::filesystem::temp_directory_path() / "cnncap_test_model";
    std::filesystem::create_directories(dir);
    return dir / name;
}

std::vector<float> run(Model& m, int batch, std::uint64_t seed)
{
    Rng rng(seed);
    std::vector<float> flat(static_cast<std::size_t>(batch) * m.in_size());
    for (auto& v : flat)
        v = static_cast<float>(rng.uniform(-1, 1));
    std::vector<std::size_t> rows(batch);
    for (int i = 0; i < batch; ++i)
        rows[i] = i;
    Act<float> x;
    pack_batch(m, flat.data(), rows.data(), batch, x);
    return m.forward(x, false).v;
}

} // namespace

TEST_CASE("model kinds parse and build")
{
    CHECK(parse_model_kind("gridmlp") == ModelKind::gridmlp);
    CHECK_THROWS_AS(parse_model_kind("resnet"), UsageError);
    auto g = make_mlp(ModelKind::gridmlp, gridmlp_config(64));
    CHECK(g->in_channels() == 192);
    CHECK(g->in_length() == 1);
    CHECK(make_mlp(ModelKind::mlpcap, mlpcap_config())->param_count() == 202501);
}

TEST_CASE("bundle round trip is bit exact")
{
    for (auto kind : {ModelKind::cnncap, ModelKind::mlpcap}) {
        ModelBundle b;
        b.model = kind == ModelKind::cnncap ? make_cnn(CnnCapConfig::tiny()) : make_mlp(kind, mlpcap_config());
        b.model->init(5);
        // move BN running stats away from their defaults
        if (kind == ModelKind::cnncap) {
            Act<float> x;
            x.resize(3, 4, 32);
            Rng rng(1);
            for (auto& v : x.v)
                v = static_cast<float>(rng.uniform(-1, 1));
            b.model->forward(x, true);
        }
        b.meta["seed"] = "5";
        b.meta["loss"] = "mse";
        b.meta["note"] = "two words";
        const auto path = scratch(std::string(model_kind_name(kind)) + ".cap");
        save_bundle(b, path);
        const ModelBundle c = load_bundle(path);
        CHECK(c.model->kind() == kind);
        CHECK(c.meta == b.meta);
        CHECK(c.model->param_count() == b.model->param_count());
        const auto pa = b.model->params(), pb = c.model->params();
        REQUIRE(pa.size() == pb.size());
        for (std::size_t i = 0; i < pa.size(); ++i)
            CHECK(std::memcmp(pa[i]->value.data(), pb[i]->value.data(), pa[i]->size() * sizeof(float)) == 0);
        const auto ya = run(*b.model, 3, 9), yb = run(*c.model, 3, 9);
        CHECK(std::memcmp(ya.data(), yb.data(), ya.size() * sizeof(float)) == 0);
    }
}

TEST_CASE("corrupt bundles are rejected")
{
    ModelBundle b;
    b.model = make_mlp(ModelKind::mlpcap, MlpConfig{9, {8}, 5});
    b.model->init(2);
    const auto path = scratch("corrupt.cap");
    auto blob = path;
    blob += ".bin";

    save_bundle(b, path);
    std::filesystem::resize_file(blob, std::filesystem::file_size(blob) - 4);
    CHECK_THROWS_WITH_AS(load_bundle(path), doctest::Contains("truncated"), DataError);

    save_bundle(b, path);
    {
        std::fstream f(blob, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(10);
        f.put('\x7f');
    }
    CHECK_THROWS_WITH_AS(load_bundle(path), doctest::Contains("checksum"), DataError);

    save_bundle(b, path);
    {
        std::ofstream f(path, std::ios::app);
        f << "bogus line\n";
    }
    CHECK_THROWS_AS(load_bundle(path), DataError);

    std::ofstream(path) << "not a manifest\n";
    CHECK_THROWS_AS(load_bundle(path), DataError);
}

TEST_CASE("snapshot and restore")
{
    auto m = make_mlp(ModelKind::gridmlp, MlpConfig{96, {16, 8}, 1});
    m->init(1);
    const auto snap = snapshot(*m);
    const auto before = run(*m, 2, 4);
    m->init(2);
    CHECK(snapshot(*m) != snap);
    CHECK(run(*m, 2, 4) != before);
    restore(*m, snap);
    CHECK(snapshot(*m) == snap);
    CHECK(run(*m, 2, 4) == before);

    auto c = make_cnn(CnnCapConfig::tiny());
    c->init(1);
    const auto csnap = snapshot(*c);
    c->init(2);
    CHECK(snapshot(*c) != csnap);
    restore(*c, csnap);
    CHECK(snapshot(*c) == csnap);
}
