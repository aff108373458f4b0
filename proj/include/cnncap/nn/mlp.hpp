#pragma once

// Fully-connected tanh regressor (MLP-Cap on 9 parameters, Grid+MLP on 3L densities).

#include <cstdint>
#include <string>
#include <vector>

#include "cnncap/nn/layers.hpp"

namespace cnncap::nn {

struct MlpConfig {
    int inputs = 9;
    std::vector<int> hidden{256, 256, 512};
    int outputs = 5;

    void validate() const;
    std::string to_string() const;
    static MlpConfig parse(const std::string& s);
    bool operator==(const MlpConfig&) const = default;
};

template <class T>
class Mlp {
public:
    explicit Mlp(const MlpConfig& cfg);

    void init(std::uint64_t seed);

    /// x is [inputs][B][1]; returns [outputs][B][1].
    const Act<T>& forward(const Act<T>& x, bool train = false);
    void backward(const Act<T>& dy);

    std::vector<Param<T>*> params();
    std::size_t param_count();

    /// Post-activation output of hidden layer i from the last forward.
    const Act<T>& hidden_output(int i) const { return *hidden_[i]; }
    const MlpConfig& config() const { return cfg_; }

private:
    MlpConfig cfg_;
    std::vector<Linear<T>> linear_;
    std::vector<Tanh<T>> tanh_;
    std::vector<const Act<T>*> hidden_;
};

} // namespace cnncap::nn
