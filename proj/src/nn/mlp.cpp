#include "cnncap/nn/mlp.hpp"

#include <sstream>
#include <stdexcept>

#include "cnncap/error.hpp"
#include "cnncap/rng.hpp"
#include "cnncap/textio.hpp"

namespace cnncap::nn {

void MlpConfig::validate() const
{
    if (inputs < 1 || outputs < 1)
        throw DataError("mlp config: inputs and outputs must be positive");
    for (int h : hidden)
        if (h < 1)
            throw DataError("mlp config: hidden sizes must be positive");
}

std::string MlpConfig::to_string() const
{
    std::ostringstream os;
    os << "in=" << inputs << " hidden=";
    for (std::size_t i = 0; i < hidden.size(); ++i)
        os << (i ? "," : "") << hidden[i];
    os << " out=" << outputs;
    return os.str();
}

MlpConfig MlpConfig::parse(const std::string& s)
{
    MlpConfig c;
    for (auto tok : text::split_ws(s)) {
        const auto eq = tok.find('=');
        if (eq == std::string_view::npos)
            throw DataError("mlp config: expected key=value, got '" + std::string(tok) + "'");
        const auto key = tok.substr(0, eq), val = tok.substr(eq + 1);
        if (key == "hidden") {
            c.hidden.clear();
            if (!val.empty())
                for (auto h : text::split(val, ',')) {
                    const auto v = text::parse_int(h);
                    if (!v)
                        throw DataError("mlp config: bad hidden size");
                    c.hidden.push_back(static_cast<int>(*v));
                }
            continue;
        }
        const auto v = text::parse_int(val);
        if (!v)
            throw DataError("mlp config: bad value for " + std::string(key));
        if (key == "in")
            c.inputs = static_cast<int>(*v);
        else if (key == "out")
            c.outputs = static_cast<int>(*v);
        else
            throw DataError("mlp config: unknown key '" + std::string(key) + "'");
    }
    c.validate();
    return c;
}

template <class T>
Mlp<T>::Mlp(const MlpConfig& cfg) : cfg_((cfg.validate(), cfg))
{
    int in = cfg.inputs;
    for (std::size_t i = 0; i < cfg.hidden.size(); ++i) {
        linear_.emplace_back("fc" + std::to_string(i + 1), in, cfg.hidden[i]);
        in = cfg.hidden[i];
    }
    linear_.emplace_back("out", in, cfg.outputs);
    tanh_.resize(cfg.hidden.size());
    hidden_.resize(cfg.hidden.size(), nullptr);
}

template <class T>
void Mlp<T>::init(std::uint64_t seed)
{
    Rng rng(seed);
    for (auto& l : linear_) {
        he_uniform(l.w, l.in, rng);
        std::fill(l.bias.value.begin(), l.bias.value.end(), T(0));
        l.w.zero_grad();
        l.bias.zero_grad();
    }
}

template <class T>
const Act<T>& Mlp<T>::forward(const Act<T>& x, bool)
{
    if (x.c != cfg_.inputs || x.l != 1)
        throw std::invalid_argument("mlp forward: expected [" + std::to_string(cfg_.inputs) + "][B][1] input, got [" +
                                    std::to_string(x.c) + "][B][" + std::to_string(x.l) + "]");
    const Act<T>* h = &x;
    for (std::size_t i = 0; i < tanh_.size(); ++i) {
        h = &tanh_[i].forward(linear_[i].forward(*h));
        hidden_[i] = h;
    }
    return linear_.back().forward(*h);
}

template <class T>
void Mlp<T>::backward(const Act<T>& dy)
{
    const Act<T>* d = &linear_.back().backward(dy, !tanh_.empty());
    for (std::size_t i = tanh_.size(); i-- > 0;)
        d = &linear_[i].backward(tanh_[i].backward(*d), i > 0);
}

template <class T>
std::vector<Param<T>*> Mlp<T>::params()
{
    std::vector<Param<T>*> out;
    for (auto& l : linear_) {
        out.push_back(&l.w);
        out.push_back(&l.bias);
    }
    return out;
}

template <class T>
std::size_t Mlp<T>::param_count()
{
    std::size_t n = 0;
    for (const auto* p : params())
        n += p->size();
    return n;
}

template class Mlp<float>;
template class Mlp<double>;

} // namespace cnncap::nn
