#pragma once

// 1-D residual regressor over the 3-channel grid encoding.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cnncap/nn/layers.hpp"

namespace cnncap::nn {

struct CnnCapConfig {
    int input_channels = 3;
    int length = 256;
    int stem_channels = 64;
    int kernel = 3;
    std::vector<int> blocks{3, 4, 6, 3};
    std::vector<int> channels{64, 128, 256, 512};

    /// L=32, stages [1,1,1,1] with channels [4,8,16,32].
    static CnnCapConfig tiny(int length = 32);

    /// Length of the last feature map: L halved by the stem pool and at the
    /// entry of every stage after the first.
    int final_length() const;
    void validate() const;
    std::string to_string() const;
    static CnnCapConfig parse(const std::string& s);
    bool operator==(const CnnCapConfig&) const = default;
};

/// conv-BN-ReLU-conv-BN, plus shortcut, then ReLU.
template <class T>
class BasicBlock {
public:
    BasicBlock(const std::string& name, int cin, int cout, int kernel, int stride);

    const Act<T>& forward(const Act<T>& x, bool train);
    const Act<T>& backward(const Act<T>& dy);
    void collect(std::vector<Param<T>*>& out);
    bool has_projection() const { return proj_conv_.has_value(); }

    Conv1d<T> conv1;
    BatchNorm1d<T> bn1;
    Conv1d<T> conv2;
    BatchNorm1d<T> bn2;

private:
    ReLU<T> relu1_, relu_out_;
    std::optional<Conv1d<T>> proj_conv_;
    std::optional<BatchNorm1d<T>> proj_bn_;
    Act<T> sum_, dx_;
};

template <class T>
class CnnCap {
public:
    explicit CnnCap(const CnnCapConfig& cfg);

    /// He-uniform convolution weights, unit BN scale, zero biases, zero head.
    void init(std::uint64_t seed);

    /// x is [C][B][L]; returns [1][B][1].
    const Act<T>& forward(const Act<T>& x, bool train);
    /// dy is [1][B][1], the loss gradient w.r.t. each prediction.
    void backward(const Act<T>& dy);

    /// Every tensor in a stable order, including BN running statistics.
    std::vector<Param<T>*> params();
    std::size_t param_count();

    /// Feature map entering the global pool during the last forward.
    const Act<T>& last_feature_map() const { return *last_map_; }
    const CnnCapConfig& config() const { return cfg_; }
    Param<T>& head_weights() { return fc_.w; }

private:
    CnnCapConfig cfg_;
    Conv1d<T> stem_conv_;
    BatchNorm1d<T> stem_bn_;
    ReLU<T> stem_relu_;
    MaxPool1d<T> pool_;
    std::vector<std::unique_ptr<BasicBlock<T>>> blocks_;
    GlobalAvgPool<T> gap_;
    Linear<T> fc_;
    const Act<T>* last_map_ = nullptr;
};

} // namespace cnncap::nn
