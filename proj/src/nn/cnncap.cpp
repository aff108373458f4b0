#include "cnncap/nn/cnncap.hpp"

#include <sstream>
#include <stdexcept>

#include "cnncap/error.hpp"
#include "cnncap/rng.hpp"
#include "cnncap/textio.hpp"

namespace cnncap::nn {

namespace {

std::string join(const std::vector<int>& v)
{
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i)
        s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

std::vector<int> parse_list(std::string_view s)
{
    std::vector<int> out;
    for (auto tok : text::split(s, ',')) {
        const auto v = text::parse_int(tok);
        if (!v)
            throw DataError("bad integer list '" + std::string(s) + "'");
        out.push_back(static_cast<int>(*v));
    }
    return out;
}

} // namespace

CnnCapConfig CnnCapConfig::tiny(int length)
{
    CnnCapConfig c;
    c.length = length;
    c.stem_channels = 4;
    c.blocks = {1, 1, 1, 1};
    c.channels = {4, 8, 16, 32};
    return c;
}

int CnnCapConfig::final_length() const
{
    int l = length / 2;
    for (std::size_t s = 1; s < blocks.size(); ++s)
        l /= 2;
    return l;
}

void CnnCapConfig::validate() const
{
    if (input_channels < 1 || stem_channels < 1 || kernel < 1 || kernel % 2 == 0)
        throw DataError("cnn config: bad channel or kernel settings");
    if (blocks.empty() || blocks.size() != channels.size())
        throw DataError("cnn config: blocks and channels must have the same non-zero length");
    for (std::size_t s = 0; s < blocks.size(); ++s)
        if (blocks[s] < 1 || channels[s] < 1)
            throw DataError("cnn config: stage " + std::to_string(s) + " is empty");
    const int halvings = static_cast<int>(blocks.size());
    if (length < (1 << halvings) || length % (1 << halvings) != 0)
        throw DataError("cnn config: L=" + std::to_string(length) + " must be a positive multiple of " +
                        std::to_string(1 << halvings));
}

std::string CnnCapConfig::to_string() const
{
    std::ostringstream os;
    os << "in=" << input_channels << " L=" << length << " stem=" << stem_channels << " kernel=" << kernel
       << " blocks=" << join(blocks) << " channels=" << join(channels);
    return os.str();
}

CnnCapConfig CnnCapConfig::parse(const std::string& s)
{
    CnnCapConfig c;
    for (auto tok : text::split_ws(s)) {
        const auto eq = tok.find('=');
        if (eq == std::string_view::npos)
            throw DataError("cnn config: expected key=value, got '" + std::string(tok) + "'");
        const auto key = tok.substr(0, eq), val = tok.substr(eq + 1);
        auto num = [&] {
            const auto v = text::parse_int(val);
            if (!v)
                throw DataError("cnn config: bad value for " + std::string(key));
            return static_cast<int>(*v);
        };
        if (key == "in")
            c.input_channels = num();
        else if (key == "L")
            c.length = num();
        else if (key == "stem")
            c.stem_channels = num();
        else if (key == "kernel")
            c.kernel = num();
        else if (key == "blocks")
            c.blocks = parse_list(val);
        else if (key == "channels")
            c.channels = parse_list(val);
        else
            throw DataError("cnn config: unknown key '" + std::string(key) + "'");
    }
    c.validate();
    return c;
}

// ---------------------------------------------------------------- BasicBlock

template <class T>
BasicBlock<T>::BasicBlock(const std::string& name, int cin, int cout, int kernel, int stride)
    : conv1(name + ".conv1", cin, cout, kernel, stride),
      bn1(name + ".bn1", cout),
      conv2(name + ".conv2", cout, cout, kernel, 1),
      bn2(name + ".bn2", cout)
{
    if (stride != 1 || cin != cout) {
        proj_conv_.emplace(name + ".proj", cin, cout, 1, stride);
        proj_bn_.emplace(name + ".proj_bn", cout);
    }
}

template <class T>
const Act<T>& BasicBlock<T>::forward(const Act<T>& x, bool train)
{
    const Act<T>& h = bn2.forward(conv2.forward(relu1_.forward(bn1.forward(conv1.forward(x), train))), train);
    const Act<T>& s = proj_conv_ ? proj_bn_->forward(proj_conv_->forward(x), train) : x;
    sum_.resize(h.c, h.b, h.l);
    for (std::size_t i = 0; i < sum_.size(); ++i)
        sum_.v[i] = h.v[i] + s.v[i];
    return relu_out_.forward(sum_);
}

template <class T>
const Act<T>& BasicBlock<T>::backward(const Act<T>& dy)
{
    const Act<T>& ds = relu_out_.backward(dy);
    const Act<T>& dmain = conv1.backward(bn1.backward(relu1_.backward(conv2.backward(bn2.backward(ds)))));
    dx_.resize(dmain.c, dmain.b, dmain.l);
    if (proj_conv_) {
        const Act<T>& dsc = proj_conv_->backward(proj_bn_->backward(ds));
        for (std::size_t i = 0; i < dx_.size(); ++i)
            dx_.v[i] = dmain.v[i] + dsc.v[i];
    } else {
        for (std::size_t i = 0; i < dx_.size(); ++i)
            dx_.v[i] = dmain.v[i] + ds.v[i];
    }
    return dx_;
}

template <class T>
void BasicBlock<T>::collect(std::vector<Param<T>*>& out)
{
    out.push_back(&conv1.w);
    out.insert(out.end(), {&bn1.gamma, &bn1.beta, &bn1.running_mean, &bn1.running_var});
    out.push_back(&conv2.w);
    out.insert(out.end(), {&bn2.gamma, &bn2.beta, &bn2.running_mean, &bn2.running_var});
    if (proj_conv_) {
        out.push_back(&proj_conv_->w);
        out.insert(out.end(),
                   {&proj_bn_->gamma, &proj_bn_->beta, &proj_bn_->running_mean, &proj_bn_->running_var});
    }
}

// ---------------------------------------------------------------- CnnCap

template <class T>
CnnCap<T>::CnnCap(const CnnCapConfig& cfg)
    : cfg_((cfg.validate(), cfg)),
      stem_conv_("stem.conv", cfg.input_channels, cfg.stem_channels, cfg.kernel, 1),
      stem_bn_("stem.bn", cfg.stem_channels),
      fc_("fc", cfg.channels.back(), 1)
{
    int cin = cfg.stem_channels;
    for (std::size_t s = 0; s < cfg.blocks.size(); ++s)
        for (int b = 0; b < cfg.blocks[s]; ++b) {
            const int stride = (s > 0 && b == 0) ? 2 : 1;
            const std::string name = "stage" + std::to_string(s + 1) + ".block" + std::to_string(b + 1);
            blocks_.push_back(std::make_unique<BasicBlock<T>>(name, cin, cfg.channels[s], cfg.kernel, stride));
            cin = cfg.channels[s];
        }
}

template <class T>
void CnnCap<T>::init(std::uint64_t seed)
{
    Rng rng(seed);
    for (Param<T>* p : params()) {
        if (p->name == "fc.w") {
            // zero head: start from the constant predictor
            std::fill(p->value.begin(), p->value.end(), T(0));
        } else if (p->shape.size() == 3) {
            he_uniform(*p, p->shape[1] * p->shape[2], rng);
        } else if (p->shape.size() == 2) {
            he_uniform(*p, p->shape[1], rng);
        } else {
            const bool ones = p->name.ends_with(".gamma") || p->name.ends_with(".running_var");
            std::fill(p->value.begin(), p->value.end(), ones ? T(1) : T(0));
        }
        if (p->trainable)
            p->zero_grad();
    }
}

template <class T>
const Act<T>& CnnCap<T>::forward(const Act<T>& x, bool train)
{
    if (x.c != cfg_.input_channels || x.l != cfg_.length)
        throw std::invalid_argument("cnn forward: expected [" + std::to_string(cfg_.input_channels) + "][B][" +
                                    std::to_string(cfg_.length) + "] input, got [" + std::to_string(x.c) + "][B][" +
                                    std::to_string(x.l) + "]");
    const Act<T>* h = &pool_.forward(stem_relu_.forward(stem_bn_.forward(stem_conv_.forward(x), train)));
    for (auto& blk : blocks_)
        h = &blk->forward(*h, train);
    last_map_ = h;
    return fc_.forward(gap_.forward(*h));
}

template <class T>
void CnnCap<T>::backward(const Act<T>& dy)
{
    const Act<T>* d = &gap_.backward(fc_.backward(dy));
    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it)
        d = &(*it)->backward(*d);
    stem_conv_.backward(stem_bn_.backward(stem_relu_.backward(pool_.backward(*d))), false);
}

template <class T>
std::vector<Param<T>*> CnnCap<T>::params()
{
    std::vector<Param<T>*> out{&stem_conv_.w, &stem_bn_.gamma, &stem_bn_.beta, &stem_bn_.running_mean,
                               &stem_bn_.running_var};
    for (auto& blk : blocks_)
        blk->collect(out);
    out.push_back(&fc_.w);
    out.push_back(&fc_.bias);
    return out;
}

template <class T>
std::size_t CnnCap<T>::param_count()
{
    std::size_t n = 0;
    for (const auto* p : params())
        if (p->trainable)
            n += p->size();
    return n;
}

template class BasicBlock<float>;
template class BasicBlock<double>;
template class CnnCap<float>;
template class CnnCap<double>;

} // namespace cnncap::nn
