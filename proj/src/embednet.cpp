#include "leafseg/embednet.hpp"

#include <cmath>
#include <stdexcept>

#include "leafseg/rng.hpp"

namespace leafseg::net {

void EmbedNetConfig::validate() const {
    if (num_labels < 2) throw std::invalid_argument("embednet: K must be >= 2");
    if (num_blocks != 2 && num_blocks != 3)
        throw std::invalid_argument("embednet: num_blocks must be 2 or 3");
    if (hidden_channels < 1) throw std::invalid_argument("embednet: hidden_channels must be >= 1");
}

namespace {

ad::Tensor he_init(Rng& rng, ad::Shape shape, int fan_in) {
    const float std = std::sqrt(2.0f / static_cast<float>(fan_in));
    std::vector<float> v(ad::numel(shape));
    for (float& x : v) x = std * static_cast<float>(rng.gaussian());
    ad::Tensor t(std::move(shape), std::move(v));
    t.set_requires_grad(true);
    return t;
}

}  // namespace

EmbedNet EmbedNet::init(const EmbedNetConfig& config) {
    config.validate();
    EmbedNet net;
    net.config_ = config;
    Rng rng(config.seed);
    int cin = 3;
    const int hidden = config.hidden_channels;
    for (int b = 0; b < config.num_blocks; ++b) {
        Block blk;
        blk.pointwise = he_init(rng, {cin, hidden}, cin);
        blk.depthwise = he_init(rng, {3, 3, hidden}, 9);
        blk.gamma = ad::Tensor(ad::Shape{hidden}, 1.0f);
        blk.beta = ad::Tensor(ad::Shape{hidden}, 0.0f);
        blk.gamma.set_requires_grad(true);
        blk.beta.set_requires_grad(true);
        blk.bn = ad::BatchNormState::init(hidden);
        net.blocks_.push_back(std::move(blk));
        cin = hidden;
    }
    net.head_ = he_init(rng, {hidden, config.num_labels}, hidden);
    return net;
}

ad::Tensor EmbedNet::forward(const ad::Tensor& image, bool training, ad::Tape* tape) {
    if (!image.defined() || image.rank() != 3 || image.dim(2) != 3)
        throw std::invalid_argument("embednet: input must be H x W x 3, got " +
                                    (image.defined() ? ad::shape_str(image.shape()) : "<empty>"));
    ad::Tensor x = image;
    for (auto& blk : blocks_) {
        x = ad::pointwise_conv2d(x, blk.pointwise, tape);
        x = ad::depthwise_conv2d(x, blk.depthwise, 1, tape);
        x = ad::batchnorm2d(x, blk.gamma, blk.beta, blk.bn, training, tape);
        x = ad::relu(x, tape);
    }
    x = ad::pointwise_conv2d(x, head_, tape);
    return ad::channel_softmax(x, tape);
}

std::vector<std::pair<std::string, ad::Tensor>> EmbedNet::parameters() {
    std::vector<std::pair<std::string, ad::Tensor>> out;
    for (size_t b = 0; b < blocks_.size(); ++b) {
        std::string prefix = "block" + std::to_string(b) + ".";
        out.emplace_back(prefix + "pointwise", blocks_[b].pointwise);
        out.emplace_back(prefix + "depthwise", blocks_[b].depthwise);
        out.emplace_back(prefix + "gamma", blocks_[b].gamma);
        out.emplace_back(prefix + "beta", blocks_[b].beta);
    }
    out.emplace_back("head", head_);
    return out;
}

size_t EmbedNet::parameter_count() const {
    size_t n = 0;
    for (const auto& blk : blocks_)
        n += blk.pointwise.size() + blk.depthwise.size() + blk.gamma.size() + blk.beta.size();
    return n + head_.size();
}

}  // namespace leafseg::net
