#pragma once

// Building blocks for 1-D convolutional and dense networks with hand-written
// backward passes. Activations are channel-major: [C][B][L].

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

namespace cnncap::nn {

template <class T>
struct Param {
    std::string name;
    std::vector<int> shape;
    std::vector<T> value;
    std::vector<T> grad;     // empty for buffers
    bool trainable = true;   // false for batch-norm running statistics

    Param() = default;
    Param(std::string n, std::vector<int> s, bool train = true);
    std::size_t size() const { return value.size(); }
    void zero_grad();
};

template <class T>
struct Act {
    int c = 0, b = 0, l = 0;
    std::vector<T> v;

    void resize(int channels, int batch, int length);
    std::size_t size() const { return v.size(); }
    T* channel(int ch) { return v.data() + static_cast<std::size_t>(ch) * b * l; }
    const T* channel(int ch) const { return v.data() + static_cast<std::size_t>(ch) * b * l; }
};

/// Kernel-k convolution with zero padding k/2 and no bias (batch norm follows).
template <class T>
class Conv1d {
public:
    Conv1d(const std::string& name, int cin, int cout, int kernel, int stride);

    const Act<T>& forward(const Act<T>& x);
    /// Accumulates weight gradients; fills dx unless `need_dx` is false.
    const Act<T>& backward(const Act<T>& dy, bool need_dx = true);

    Param<T> w; // [cout][cin][k]
    int cin, cout, kernel, stride;

private:
    const Act<T>* x_ = nullptr;
    std::vector<T> col_;
    Act<T> y_, dx_;
    int lout_ = 0;
};

template <class T>
class BatchNorm1d {
public:
    BatchNorm1d(const std::string& name, int channels, double momentum = 0.1, double eps = 1e-5);

    const Act<T>& forward(const Act<T>& x, bool train);
    const Act<T>& backward(const Act<T>& dy);

    Param<T> gamma, beta, running_mean, running_var;
    double momentum, eps;

private:
    Act<T> y_, dx_;
    std::vector<T> xhat_, inv_std_;
};

template <class T>
class ReLU {
public:
    const Act<T>& forward(const Act<T>& x);
    /// dx may alias nothing; result valid until the next call.
    const Act<T>& backward(const Act<T>& dy);

private:
    Act<T> y_, dx_;
};

template <class T>
class MaxPool1d {
public:
    const Act<T>& forward(const Act<T>& x); // kernel 2, stride 2
    const Act<T>& backward(const Act<T>& dy);

private:
    Act<T> y_, dx_;
    std::vector<int> arg_;
    int lin_ = 0;
};

/// [C][B][L] -> [C][B][1]
template <class T>
class GlobalAvgPool {
public:
    const Act<T>& forward(const Act<T>& x);
    const Act<T>& backward(const Act<T>& dy);

private:
    Act<T> y_, dx_;
    int lin_ = 0;
};

/// Dense layer on [F][B][1] activations: y = W x + b.
template <class T>
class Linear {
public:
    Linear(const std::string& name, int in, int out);

    const Act<T>& forward(const Act<T>& x);
    const Act<T>& backward(const Act<T>& dy, bool need_dx = true);

    Param<T> w; // [out][in]
    Param<T> bias;
    int in, out;

private:
    const Act<T>* x_ = nullptr;
    Act<T> y_, dx_;
};

template <class T>
class Tanh {
public:
    const Act<T>& forward(const Act<T>& x);
    const Act<T>& backward(const Act<T>& dy);

private:
    Act<T> y_, dx_;
};

/// He-uniform: U(-b, b) with b = sqrt(6 / fan_in).
template <class T, class Rng>
void he_uniform(Param<T>& p, int fan_in, Rng& rng)
{
    const double bound = std::sqrt(6.0 / fan_in);
    for (auto& v : p.value)
        v = static_cast<T>(rng.uniform(-bound, bound));
}

} // namespace cnncap::nn
