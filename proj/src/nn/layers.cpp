#include "cnncap/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cnncap/kernels/kernels.hpp"

namespace cnncap::nn {

using kernels::gemm;
using kernels::Trans;

namespace {

// Four independent double accumulators; a single chain is latency bound.
template <class T, class F>
double sum4(std::size_t n, F f)
{
    double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += f(i);
        s1 += f(i + 1);
        s2 += f(i + 2);
        s3 += f(i + 3);
    }
    for (; i < n; ++i)
        s0 += f(i);
    return (s0 + s1) + (s2 + s3);
}

} // namespace

template <class T>
Param<T>::Param(std::string n, std::vector<int> s, bool train) : name(std::move(n)), shape(std::move(s)), trainable(train)
{
    std::size_t count = 1;
    for (int d : shape)
        count *= static_cast<std::size_t>(d);
    value.assign(count, T(0));
    if (trainable)
        grad.assign(count, T(0));
}

template <class T>
void Param<T>::zero_grad()
{
    std::fill(grad.begin(), grad.end(), T(0));
}

template <class T>
void Act<T>::resize(int channels, int batch, int length)
{
    c = channels;
    b = batch;
    l = length;
    v.resize(static_cast<std::size_t>(c) * b * l);
}

// ---------------------------------------------------------------- Conv1d

template <class T>
Conv1d<T>::Conv1d(const std::string& name, int cin_, int cout_, int kernel_, int stride_)
    : w(name + ".w", {cout_, cin_, kernel_}), cin(cin_), cout(cout_), kernel(kernel_), stride(stride_)
{
}

template <class T>
const Act<T>& Conv1d<T>::forward(const Act<T>& x)
{
    if (x.c != cin)
        throw std::invalid_argument(w.name + ": expected " + std::to_string(cin) + " input channels, got " +
                                    std::to_string(x.c));
    x_ = &x;
    const int pad = kernel / 2;
    const int L = x.l, B = x.b;
    lout_ = (L + 2 * pad - kernel) / stride + 1;
    const std::size_t N = static_cast<std::size_t>(B) * lout_;
    const int K = cin * kernel;
    col_.resize(static_cast<std::size_t>(K) * N);
    for (int ci = 0; ci < cin; ++ci) {
        const T* xc = x.channel(ci);
        for (int t = 0; t < kernel; ++t) {
            T* row = col_.data() + static_cast<std::size_t>(ci * kernel + t) * N;
            for (int b = 0; b < B; ++b) {
                const T* xb = xc + static_cast<std::size_t>(b) * L;
                T* out = row + static_cast<std::size_t>(b) * lout_;
                for (int lo = 0; lo < lout_; ++lo) {
                    const int li = lo * stride + t - pad;
                    out[lo] = (li >= 0 && li < L) ? xb[li] : T(0);
                }
            }
        }
    }
    y_.resize(cout, B, lout_);
    gemm<T>(Trans::no, Trans::no, cout, static_cast<int>(N), K, w.value.data(), K, col_.data(), static_cast<int>(N),
            T(0), y_.v.data(), static_cast<int>(N));
    return y_;
}

template <class T>
const Act<T>& Conv1d<T>::backward(const Act<T>& dy, bool need_dx)
{
    if (!x_)
        throw std::logic_error(w.name + ": backward without forward");
    const int L = x_->l, B = x_->b;
    const int N = B * lout_;
    const int K = cin * kernel;
    gemm<T>(Trans::no, Trans::yes, cout, K, N, dy.v.data(), N, col_.data(), N, T(1), w.grad.data(), K);
    if (!need_dx)
        return dx_;
    // reuse the column buffer for d(col)
    gemm<T>(Trans::yes, Trans::no, K, N, cout, w.value.data(), K, dy.v.data(), N, T(0), col_.data(), N);
    dx_.resize(cin, B, L);
    std::fill(dx_.v.begin(), dx_.v.end(), T(0));
    const int pad = kernel / 2;
    for (int ci = 0; ci < cin; ++ci) {
        T* dxc = dx_.channel(ci);
        for (int t = 0; t < kernel; ++t) {
            const T* row = col_.data() + static_cast<std::size_t>(ci * kernel + t) * N;
            for (int b = 0; b < B; ++b) {
                T* dxb = dxc + static_cast<std::size_t>(b) * L;
                const T* in = row + static_cast<std::size_t>(b) * lout_;
                for (int lo = 0; lo < lout_; ++lo) {
                    const int li = lo * stride + t - pad;
                    if (li >= 0 && li < L)
                        dxb[li] += in[lo];
                }
            }
        }
    }
    x_ = nullptr; // column buffer is spent
    return dx_;
}

// ---------------------------------------------------------------- BatchNorm1d

template <class T>
BatchNorm1d<T>::BatchNorm1d(const std::string& name, int channels, double momentum_, double eps_)
    : gamma(name + ".gamma", {channels}),
      beta(name + ".beta", {channels}),
      running_mean(name + ".running_mean", {channels}, false),
      running_var(name + ".running_var", {channels}, false),
      momentum(momentum_),
      eps(eps_)
{
    std::fill(gamma.value.begin(), gamma.value.end(), T(1));
    std::fill(running_var.value.begin(), running_var.value.end(), T(1));
}

template <class T>
const Act<T>& BatchNorm1d<T>::forward(const Act<T>& x, bool train)
{
    const int C = x.c;
    const std::size_t n = static_cast<std::size_t>(x.b) * x.l;
    if (C != static_cast<int>(gamma.size()))
        throw std::invalid_argument(gamma.name + ": channel mismatch");
    y_.resize(x.c, x.b, x.l);
    inv_std_.resize(C);
    if (train) {
        if (n < 2)
            throw std::invalid_argument(gamma.name + ": training needs more than one value per channel");
        xhat_.resize(x.size());
    } else {
        xhat_.clear();
    }
    for (int c = 0; c < C; ++c) {
        const T* xc = x.channel(c);
        T* yc = y_.channel(c);
        double mean, var;
        if (train) {
            mean = sum4<T>(n, [&](std::size_t i) { return static_cast<double>(xc[i]); }) / n;
            const double ss = sum4<T>(n, [&](std::size_t i) {
                const double d = xc[i] - mean;
                return d * d;
            });
            var = ss / n;
            running_mean.value[c] = static_cast<T>((1.0 - momentum) * running_mean.value[c] + momentum * mean);
            running_var.value[c] =
                static_cast<T>((1.0 - momentum) * running_var.value[c] + momentum * ss / (n - 1));
        } else {
            mean = running_mean.value[c];
            var = running_var.value[c];
        }
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_std_[c] = static_cast<T>(inv);
        const T g = gamma.value[c], bt = beta.value[c];
        const T m = static_cast<T>(mean), is = static_cast<T>(inv);
        if (train) {
            T* xh = xhat_.data() + static_cast<std::size_t>(c) * n;
            for (std::size_t i = 0; i < n; ++i) {
                xh[i] = (xc[i] - m) * is;
                yc[i] = g * xh[i] + bt;
            }
        } else {
            for (std::size_t i = 0; i < n; ++i)
                yc[i] = g * ((xc[i] - m) * is) + bt;
        }
    }
    return y_;
}

template <class T>
const Act<T>& BatchNorm1d<T>::backward(const Act<T>& dy)
{
    if (xhat_.empty())
        throw std::logic_error(gamma.name + ": backward needs a training-mode forward");
    const int C = dy.c;
    const std::size_t n = static_cast<std::size_t>(dy.b) * dy.l;
    dx_.resize(dy.c, dy.b, dy.l);
    for (int c = 0; c < C; ++c) {
        const T* d = dy.channel(c);
        const T* xh = xhat_.data() + static_cast<std::size_t>(c) * n;
        const double sd = sum4<T>(n, [&](std::size_t i) { return static_cast<double>(d[i]); });
        const double sdx = sum4<T>(n, [&](std::size_t i) { return static_cast<double>(d[i]) * xh[i]; });
        gamma.grad[c] += static_cast<T>(sdx);
        beta.grad[c] += static_cast<T>(sd);
        const T k = static_cast<T>(gamma.value[c] * static_cast<double>(inv_std_[c]) / n);
        const T a = static_cast<T>(sd), bb = static_cast<T>(sdx);
        const T nn = static_cast<T>(n);
        T* out = dx_.channel(c);
        for (std::size_t i = 0; i < n; ++i)
            out[i] = k * (nn * d[i] - a - xh[i] * bb);
    }
    return dx_;
}

// ---------------------------------------------------------------- ReLU

template <class T>
const Act<T>& ReLU<T>::forward(const Act<T>& x)
{
    y_.resize(x.c, x.b, x.l);
    for (std::size_t i = 0; i < x.size(); ++i)
        y_.v[i] = x.v[i] > T(0) ? x.v[i] : T(0);
    return y_;
}

template <class T>
const Act<T>& ReLU<T>::backward(const Act<T>& dy)
{
    dx_.resize(dy.c, dy.b, dy.l);
    for (std::size_t i = 0; i < dy.size(); ++i)
        dx_.v[i] = y_.v[i] > T(0) ? dy.v[i] : T(0);
    return dx_;
}

// ---------------------------------------------------------------- MaxPool1d

template <class T>
const Act<T>& MaxPool1d<T>::forward(const Act<T>& x)
{
    lin_ = x.l;
    const int lout = x.l / 2;
    y_.resize(x.c, x.b, lout);
    arg_.resize(y_.size());
    const std::size_t rows = static_cast<std::size_t>(x.c) * x.b;
    for (std::size_t r = 0; r < rows; ++r) {
        const T* in = x.v.data() + r * lin_;
        T* out = y_.v.data() + r * lout;
        int* arg = arg_.data() + r * lout;
        for (int o = 0; o < lout; ++o) {
            const int i = 2 * o;
            const bool second = in[i + 1] > in[i];
            out[o] = second ? in[i + 1] : in[i];
            arg[o] = i + (second ? 1 : 0);
        }
    }
    return y_;
}

template <class T>
const Act<T>& MaxPool1d<T>::backward(const Act<T>& dy)
{
    dx_.resize(dy.c, dy.b, lin_);
    std::fill(dx_.v.begin(), dx_.v.end(), T(0));
    const std::size_t rows = static_cast<std::size_t>(dy.c) * dy.b;
    for (std::size_t r = 0; r < rows; ++r)
        for (int o = 0; o < dy.l; ++o)
            dx_.v[r * lin_ + arg_[r * dy.l + o]] += dy.v[r * dy.l + o];
    return dx_;
}

// ---------------------------------------------------------------- GlobalAvgPool

template <class T>
const Act<T>& GlobalAvgPool<T>::forward(const Act<T>& x)
{
    lin_ = x.l;
    y_.resize(x.c, x.b, 1);
    const std::size_t rows = static_cast<std::size_t>(x.c) * x.b;
    for (std::size_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (int i = 0; i < lin_; ++i)
            s += x.v[r * lin_ + i];
        y_.v[r] = static_cast<T>(s / lin_);
    }
    return y_;
}

template <class T>
const Act<T>& GlobalAvgPool<T>::backward(const Act<T>& dy)
{
    dx_.resize(dy.c, dy.b, lin_);
    const std::size_t rows = static_cast<std::size_t>(dy.c) * dy.b;
    const T scale = T(1) / static_cast<T>(lin_);
    for (std::size_t r = 0; r < rows; ++r)
        for (int i = 0; i < lin_; ++i)
            dx_.v[r * lin_ + i] = dy.v[r] * scale;
    return dx_;
}

// ---------------------------------------------------------------- Linear

template <class T>
Linear<T>::Linear(const std::string& name, int in_, int out_)
    : w(name + ".w", {out_, in_}), bias(name + ".b", {out_}), in(in_), out(out_)
{
}

template <class T>
const Act<T>& Linear<T>::forward(const Act<T>& x)
{
    if (x.c != in || x.l != 1)
        throw std::invalid_argument(w.name + ": expected [" + std::to_string(in) + "][B][1] input");
    x_ = &x;
    const int B = x.b;
    y_.resize(out, B, 1);
    gemm<T>(Trans::no, Trans::no, out, B, in, w.value.data(), in, x.v.data(), B, T(0), y_.v.data(), B);
    for (int o = 0; o < out; ++o)
        for (int b = 0; b < B; ++b)
            y_.v[static_cast<std::size_t>(o) * B + b] += bias.value[o];
    return y_;
}

template <class T>
const Act<T>& Linear<T>::backward(const Act<T>& dy, bool need_dx)
{
    if (!x_)
        throw std::logic_error(w.name + ": backward without forward");
    const int B = dy.b;
    gemm<T>(Trans::no, Trans::yes, out, in, B, dy.v.data(), B, x_->v.data(), B, T(1), w.grad.data(), in);
    for (int o = 0; o < out; ++o) {
        T s = T(0);
        for (int b = 0; b < B; ++b)
            s += dy.v[static_cast<std::size_t>(o) * B + b];
        bias.grad[o] += s;
    }
    if (need_dx) {
        dx_.resize(in, B, 1);
        gemm<T>(Trans::yes, Trans::no, in, B, out, w.value.data(), in, dy.v.data(), B, T(0), dx_.v.data(), B);
    }
    return dx_;
}

// ---------------------------------------------------------------- Tanh

template <class T>
const Act<T>& Tanh<T>::forward(const Act<T>& x)
{
    y_.resize(x.c, x.b, x.l);
    for (std::size_t i = 0; i < x.size(); ++i)
        y_.v[i] = std::tanh(x.v[i]);
    return y_;
}

template <class T>
const Act<T>& Tanh<T>::backward(const Act<T>& dy)
{
    dx_.resize(dy.c, dy.b, dy.l);
    for (std::size_t i = 0; i < dy.size(); ++i)
        dx_.v[i] = dy.v[i] * (T(1) - y_.v[i] * y_.v[i]);
    return dx_;
}

#define CNNCAP_INSTANTIATE(T)                                                                                          \
    template struct Param<T>;                                                                                          \
    template struct Act<T>;                                                                                            \
    template class Conv1d<T>;                                                                                          \
    template class BatchNorm1d<T>;                                                                                     \
    template class ReLU<T>;                                                                                            \
    template class MaxPool1d<T>;                                                                                       \
    template class GlobalAvgPool<T>;                                                                                   \
    template class Linear<T>;                                                                                          \
    template class Tanh<T>;

CNNCAP_INSTANTIATE(float)
CNNCAP_INSTANTIATE(double)

} // namespace cnncap::nn
