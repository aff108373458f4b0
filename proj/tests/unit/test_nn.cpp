#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <vector>

#include "cnncap/nn/cnncap.hpp"
#include "cnncap/nn/mlp.hpp"
#include "cnncap/rng.hpp"

using namespace cnncap;
using namespace cnncap::nn;

namespace {

template <class T>
Act<T> random_input(int c, int b, int l, std::uint64_t seed)
{
    Rng rng(seed);
    Act<T> x;
    x.resize(c, b, l);
    for (auto& v : x.v)
        v = static_cast<T>(rng.uniform(-1.0, 1.0));
    return x;
}

// Loss = sum_i r_i * y_i, so dL/dy = r.
template <class Net>
double probe_loss(Net& net, const Act<double>& x, const Act<double>& r)
{
    const auto& y = net.forward(x, true);
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i)
        s += y.v[i] * r.v[i];
    return s;
}

template <class Net>
double worst_gradient_error(Net& net, const Act<double>& x, const Act<double>& r, int per_tensor, double h)
{
    for (auto* p : net.params())
        if (p->trainable)
            p->zero_grad();
    probe_loss(net, x, r);
    net.backward(r);

    double worst = 0;
    Rng pick(99);
    for (auto* p : net.params()) {
        if (!p->trainable)
            continue;
        for (int n = 0; n < per_tensor; ++n) {
            const auto i = static_cast<std::size_t>(pick.uniform_int(0, static_cast<std::int64_t>(p->size()) - 1));
            const double keep = p->value[i];
            p->value[i] = keep + h;
            const double up = probe_loss(net, x, r);
            p->value[i] = keep - h;
            const double dn = probe_loss(net, x, r);
            p->value[i] = keep;
            const double num = (up - dn) / (2 * h);
            const double ana = p->grad[i];
            const double err = std::abs(num - ana) / std::max(1.0, std::abs(num) + std::abs(ana));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

} // namespace

TEST_CASE("mlp-cap parameter count")
{
    Mlp<float> m(MlpConfig{});
    CHECK(m.param_count() == 202501);
}

TEST_CASE("tiny cnn parameter count matches hand count")
{
    CnnCap<float> net(CnnCapConfig::tiny());
    // stem 36+8, stage1 112, stage2 368, stage3 1376, stage4 5312, head 33
    CHECK(net.param_count() == 7245);
}

TEST_CASE("full cnn size and final feature map")
{
    CnnCapConfig cfg;
    cfg.length = 1024;
    CnnCap<float> net(cfg);
    net.init(1);
    MESSAGE("full CNN trainable parameters: " << net.param_count());
    CHECK(cfg.final_length() == 64);
    const auto x = random_input<float>(3, 1, 1024, 5);
    const auto& y = net.forward(x, false);
    CHECK(y.c == 1);
    CHECK(y.b == 1);
    CHECK(net.last_feature_map().c == 512);
    CHECK(net.last_feature_map().l == 64);
    CHECK(std::isfinite(y.v[0]));
}

TEST_CASE("config strings round trip")
{
    const CnnCapConfig c = CnnCapConfig::tiny(64);
    CHECK(CnnCapConfig::parse(c.to_string()) == c);
    const MlpConfig m{768, {32, 16}, 1};
    CHECK(MlpConfig::parse(m.to_string()) == m);
    CHECK_THROWS(CnnCapConfig::parse("L=100"));
}

TEST_CASE("zero weights give zero output")
{
    CnnCap<float> net(CnnCapConfig::tiny());
    net.init(3);
    for (auto* p : net.params())
        if (p->trainable)
            std::fill(p->value.begin(), p->value.end(), 0.0f);
    const auto x = random_input<float>(3, 4, 32, 8);
    for (float v : net.forward(x, false).v)
        CHECK(v == 0.0f);

    Mlp<float> m(MlpConfig{9, {16, 16}, 5});
    for (auto* p : m.params())
        std::fill(p->value.begin(), p->value.end(), 0.0f);
    for (float v : m.forward(random_input<float>(9, 3, 1, 2)).v)
        CHECK(v == 0.0f);
}

TEST_CASE("inference is batch invariant")
{
    CnnCap<float> net(CnnCapConfig::tiny(64));
    net.init(11);
    const int B = 7;
    const auto x = random_input<float>(3, B, 64, 12);
    const std::vector<float> batched = net.forward(x, false).v;
    for (int b = 0; b < B; ++b) {
        Act<float> one;
        one.resize(3, 1, 64);
        for (int c = 0; c < 3; ++c)
            for (int i = 0; i < 64; ++i)
                one.v[c * 64 + i] = x.v[(c * B + b) * 64 + i];
        const float y = net.forward(one, false).v[0];
        CHECK(y == doctest::Approx(batched[b]).epsilon(1e-6));
    }
}

TEST_CASE("cnn gradients match finite differences")
{
    CnnCap<double> net(CnnCapConfig::tiny());
    net.init(21);
    CHECK(net.head_weights().value[0] == 0.0);
    // head starts at zero, which would hide the trunk gradients
    Rng rng(24);
    he_uniform(net.head_weights(), 32, rng);
    const auto x = random_input<double>(3, 3, 32, 22);
    const auto r = random_input<double>(1, 3, 1, 23);
    const double err = worst_gradient_error(net, x, r, 2, 1e-6);
    MESSAGE("cnn worst relative gradient error " << err);
    CHECK(err < 1e-4);
}

TEST_CASE("mlp gradients match finite differences")
{
    Mlp<double> m(MlpConfig{3, {2}, 1});
    m.init(31);
    const auto x = random_input<double>(3, 4, 1, 32);
    const auto r = random_input<double>(1, 4, 1, 33);
    const double err = worst_gradient_error(m, x, r, 6, 1e-6);
    CHECK(err < 1e-6);

    Mlp<double> big(MlpConfig{9, {12, 8, 6}, 5});
    big.init(34);
    CHECK(worst_gradient_error(big, random_input<double>(9, 5, 1, 35), random_input<double>(5, 5, 1, 36), 4, 1e-6) <
          1e-6);
}

TEST_CASE("duplicated sample doubles the mlp gradient")
{
    Mlp<double> m(MlpConfig{4, {5}, 2});
    m.init(41);
    auto single = random_input<double>(4, 1, 1, 42);
    Act<double> twice;
    twice.resize(4, 2, 1);
    for (int c = 0; c < 4; ++c)
        twice.v[c * 2] = twice.v[c * 2 + 1] = single.v[c];

    Act<double> d1, d2;
    d1.resize(2, 1, 1);
    d1.v = {0.3, -0.7};
    d2.resize(2, 2, 1);
    d2.v = {0.3, 0.3, -0.7, -0.7};

    std::vector<std::vector<double>> g1;
    for (auto* p : m.params())
        p->zero_grad();
    m.forward(single);
    m.backward(d1);
    for (auto* p : m.params())
        g1.push_back(p->grad);
    for (auto* p : m.params())
        p->zero_grad();
    m.forward(twice);
    m.backward(d2);
    std::size_t k = 0;
    for (auto* p : m.params()) {
        for (std::size_t i = 0; i < p->size(); ++i)
            CHECK(p->grad[i] == doctest::Approx(2 * g1[k][i]).epsilon(1e-12));
        ++k;
    }
}

TEST_CASE("tanh hidden outputs stay in (-1, 1)")
{
    Mlp<float> m(MlpConfig{9, {64, 64}, 5});
    m.init(51);
    auto x = random_input<float>(9, 16, 1, 52);
    for (auto& v : x.v)
        v *= 100.0f;
    m.forward(x);
    for (int i = 0; i < 2; ++i)
        for (float v : m.hidden_output(i).v)
            CHECK(std::abs(v) <= 1.0f);
}

TEST_CASE("batch norm running statistics move only in training")
{
    CnnCap<float> net(CnnCapConfig::tiny());
    net.init(61);
    auto* rm = net.params()[3];
    REQUIRE(rm->name == "stem.bn.running_mean");
    const auto before = rm->value;
    net.forward(random_input<float>(3, 4, 32, 62), false);
    CHECK(rm->value == before);
    net.forward(random_input<float>(3, 4, 32, 62), true);
    CHECK(rm->value != before);
}

TEST_CASE("wrong input shape is rejected")
{
    CnnCap<float> net(CnnCapConfig::tiny());
    net.init(1);
    CHECK_THROWS_AS(net.forward(random_input<float>(3, 2, 64, 1), false), std::invalid_argument);
    Mlp<float> m(MlpConfig{});
    CHECK_THROWS_AS(m.forward(random_input<float>(8, 2, 1, 1)), std::invalid_argument);
}

TEST_CASE("identity block passes non-negative input through")
{
    BasicBlock<double> blk("b", 4, 4, 3, 1);
    REQUIRE_FALSE(blk.has_projection());
    std::vector<Param<double>*> ps;
    blk.collect(ps);
    for (auto* p : ps)
        std::fill(p->value.begin(), p->value.end(), 0.0);
    auto x = random_input<double>(4, 2, 8, 71);
    for (auto& v : x.v)
        v = std::abs(v);
    const auto& y = blk.forward(x, false);
    for (std::size_t i = 0; i < x.size(); ++i)
        CHECK(y.v[i] == doctest::Approx(x.v[i]).epsilon(1e-12));
}
