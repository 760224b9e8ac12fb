#include "leafseg/colorcorrect.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <stdexcept>

#include "leafseg/adam.hpp"
#include "leafseg/checkpoint.hpp"
#include "leafseg/colorspace.hpp"
#include "leafseg/rng.hpp"

namespace leafseg::cc {

namespace {

ad::Tensor he_kernel(Rng& rng, int k, int cin, int cout) {
    const float std = std::sqrt(2.0f / static_cast<float>(k * k * cin));
    std::vector<float> v(static_cast<size_t>(k) * k * cin * cout);
    for (float& x : v) x = std * static_cast<float>(rng.gaussian());
    ad::Tensor t(ad::Shape{k, k, cin, cout}, std::move(v));
    t.set_requires_grad(true);
    return t;
}

ad::Tensor affine_param(int c, float fill) {
    ad::Tensor t(ad::Shape{c}, fill);
    t.set_requires_grad(true);
    return t;
}

ImageF reflect_pad_to_multiple(const ImageF& img, int multiple) {
    const int hp = (img.height + multiple - 1) / multiple * multiple;
    const int wp = (img.width + multiple - 1) / multiple * multiple;
    if (hp == img.height && wp == img.width) return img;
    ImageF out(hp, wp, img.channels);
    auto reflect = [](int p, int n) {
        if (n == 1) return 0;
        const int period = 2 * (n - 1);
        p = std::abs(p) % period;
        return p < n ? p : period - p;
    };
    for (int y = 0; y < hp; ++y)
        for (int x = 0; x < wp; ++x) {
            const int sy = reflect(y, img.height), sx = reflect(x, img.width);
            for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(sy, sx, c);
        }
    return out;
}

}  // namespace

std::pair<ImageF, ImageF> split_lab(const ImageF& rgb) {
    if (rgb.channels != 3) throw std::invalid_argument("colorcorrect: split_lab expects RGB");
    ImageF lightness(rgb.height, rgb.width, 1);
    ImageF ab(rgb.height, rgb.width, 2);
    for (size_t i = 0; i < rgb.pixels(); ++i) {
        const float* p = rgb.data.data() + i * 3;
        float L, a, b;
        color::rgb_to_lab(p[0], p[1], p[2], L, a, b);
        lightness.data[i] = L / kLScale - 1.0f;
        ab.data[i * 2] = a / kAbScale;
        ab.data[i * 2 + 1] = b / kAbScale;
    }
    return {std::move(lightness), std::move(ab)};
}

ImageF merge_lab(const ImageF& lightness, const ImageF& ab) {
    if (lightness.channels != 1 || ab.channels != 2 || lightness.height != ab.height ||
        lightness.width != ab.width)
        throw std::invalid_argument("colorcorrect: merge_lab field mismatch");
    ImageF rgb(lightness.height, lightness.width, 3);
    for (size_t i = 0; i < rgb.pixels(); ++i) {
        const float L = (lightness.data[i] + 1.0f) * kLScale;
        const float a = ab.data[i * 2] * kAbScale;
        const float b = ab.data[i * 2 + 1] * kAbScale;
        float* q = rgb.data.data() + i * 3;
        color::lab_to_rgb(L, a, b, q[0], q[1], q[2]);
    }
    return rgb;
}

// ------------------------------ generator ---------------------------------

GeneratorNet GeneratorNet::init(uint64_t seed, int base_width) {
    GeneratorNet g;
    g.base_ = base_width;
    Rng rng(seed);
    const int b = base_width;
    auto conv_bn = [&rng](int k, int cin, int cout) {
        ConvBn cb;
        cb.kernel = he_kernel(rng, k, cin, cout);
        cb.gamma = affine_param(cout, 1.0f);
        cb.beta = affine_param(cout, 0.0f);
        cb.bn = ad::BatchNormState::init(cout);
        return cb;
    };
    g.enc1_ = conv_bn(3, 1, b);
    g.enc2_ = conv_bn(3, b, 2 * b);
    g.enc3_ = conv_bn(3, 2 * b, 4 * b);
    g.res1_ = {conv_bn(3, 4 * b, 4 * b), conv_bn(3, 4 * b, 4 * b)};
    g.res2_ = {conv_bn(3, 4 * b, 4 * b), conv_bn(3, 4 * b, 4 * b)};
    g.dec1_ = conv_bn(3, 4 * b + 2 * b, 2 * b);
    g.dec2_ = conv_bn(3, 2 * b + b, b);
    g.dec3_ = conv_bn(3, b, b);
    g.head_ = he_kernel(rng, 1, b, 2);  // stored 1x1xCinx2, used as pointwise
    g.initialized_ = true;
    return g;
}

ad::Tensor GeneratorNet::forward(const ad::Tensor& lightness, bool training, ad::Tape* tape) {
    if (!initialized_) throw std::logic_error("colorcorrect: generator not initialized");
    if (lightness.rank() != 3 || lightness.dim(2) != 1)
        throw std::invalid_argument("colorcorrect: generator input must be H x W x 1");
    if (lightness.dim(0) % 8 != 0 || lightness.dim(1) % 8 != 0)
        throw std::invalid_argument("colorcorrect: generator dims must be divisible by 8");

    auto stage = [&](ConvBn& cb, const ad::Tensor& x, int stride) {
        ad::Tensor y = ad::conv2d(x, cb.kernel, stride, 1, tape);
        y = ad::batchnorm2d(y, cb.gamma, cb.beta, cb.bn, training, tape);
        return ad::relu(y, tape);
    };
    auto res = [&](ResBlock& rb, const ad::Tensor& x) {
        ad::Tensor y = stage(rb.a, x, 1);
        y = ad::conv2d(y, rb.b.kernel, 1, 1, tape);
        y = ad::batchnorm2d(y, rb.b.gamma, rb.b.beta, rb.b.bn, training, tape);
        return ad::relu(ad::add(y, x, tape), tape);
    };

    ad::Tensor a1 = stage(enc1_, lightness, 2);  // H/2, b
    ad::Tensor a2 = stage(enc2_, a1, 2);         // H/4, 2b
    ad::Tensor x = stage(enc3_, a2, 2);          // H/8, 4b
    x = res(res1_, x);
    x = res(res2_, x);
    x = stage(dec1_, ad::concat_channels(ad::upsample2x(x, tape), a2, tape), 1);  // H/4
    x = stage(dec2_, ad::concat_channels(ad::upsample2x(x, tape), a1, tape), 1);  // H/2
    x = stage(dec3_, ad::upsample2x(x, tape), 1);                                 // H
    x = ad::conv2d(x, head_, 1, 0, tape);
    return ad::tanh_op(x, tape);
}

namespace {

template <typename ConvBnT>
void push_conv_bn(const std::string& prefix, ConvBnT& cb, bool with_stats,
                  std::vector<std::pair<std::string, ad::Tensor>>& out) {
    out.emplace_back(prefix + ".kernel", cb.kernel);
    out.emplace_back(prefix + ".gamma", cb.gamma);
    out.emplace_back(prefix + ".beta", cb.beta);
    if (with_stats) {
        out.emplace_back(prefix + ".running_mean", cb.bn.running_mean);
        out.emplace_back(prefix + ".running_var", cb.bn.running_var);
    }
}

}  // namespace

std::vector<std::pair<std::string, ad::Tensor>> GeneratorNet::parameters() {
    std::vector<std::pair<std::string, ad::Tensor>> out;
    push_conv_bn("enc1", enc1_, false, out);
    push_conv_bn("enc2", enc2_, false, out);
    push_conv_bn("enc3", enc3_, false, out);
    push_conv_bn("res1.a", res1_.a, false, out);
    push_conv_bn("res1.b", res1_.b, false, out);
    push_conv_bn("res2.a", res2_.a, false, out);
    push_conv_bn("res2.b", res2_.b, false, out);
    push_conv_bn("dec1", dec1_, false, out);
    push_conv_bn("dec2", dec2_, false, out);
    push_conv_bn("dec3", dec3_, false, out);
    out.emplace_back("head", head_);
    return out;
}

std::vector<std::pair<std::string, ad::Tensor>> GeneratorNet::state_tensors() {
    std::vector<std::pair<std::string, ad::Tensor>> out;
    push_conv_bn("enc1", enc1_, true, out);
    push_conv_bn("enc2", enc2_, true, out);
    push_conv_bn("enc3", enc3_, true, out);
    push_conv_bn("res1.a", res1_.a, true, out);
    push_conv_bn("res1.b", res1_.b, true, out);
    push_conv_bn("res2.a", res2_.a, true, out);
    push_conv_bn("res2.b", res2_.b, true, out);
    push_conv_bn("dec1", dec1_, true, out);
    push_conv_bn("dec2", dec2_, true, out);
    push_conv_bn("dec3", dec3_, true, out);
    out.emplace_back("head", head_);
    return out;
}

void GeneratorNet::load_state(const std::vector<std::pair<std::string, ad::Tensor>>& state) {
    std::map<std::string, ad::Tensor> by_name(state.begin(), state.end());
    auto fetch = [&](const std::string& name) {
        auto it = by_name.find(name);
        if (it == by_name.end())
            throw std::runtime_error("colorcorrect: checkpoint missing tensor " + name);
        return it->second;
    };
    const ad::Tensor enc1_k = fetch("enc1.kernel");
    *this = GeneratorNet::init(0, enc1_k.dim(3));
    for (auto& [name, t] : state_tensors()) {
        ad::Tensor src = fetch(name);
        if (src.shape() != t.shape())
            throw std::runtime_error("colorcorrect: checkpoint shape mismatch for " + name);
        t.values() = src.values();
    }
}

// ----------------------------- discriminator -------------------------------

DiscriminatorNet DiscriminatorNet::init(uint64_t seed, int base_width) {
    DiscriminatorNet d;
    Rng rng(seed);
    int cin = 3;
    int width = base_width;
    for (int i = 0; i < 4; ++i) {
        ConvBn cb;
        cb.kernel = he_kernel(rng, 3, cin, width);
        cb.gamma = affine_param(width, 1.0f);
        cb.beta = affine_param(width, 0.0f);
        cb.bn = ad::BatchNormState::init(width);
        d.blocks_.push_back(std::move(cb));
        cin = width;
        width *= 2;
    }
    d.head_ = he_kernel(rng, 1, cin, 1);
    d.initialized_ = true;
    return d;
}

ad::Tensor DiscriminatorNet::forward(const ad::Tensor& lab, bool training, ad::Tape* tape) {
    if (!initialized_) throw std::logic_error("colorcorrect: discriminator not initialized");
    if (lab.rank() != 3 || lab.dim(2) != 3)
        throw std::invalid_argument("colorcorrect: discriminator input must be H x W x 3");
    ad::Tensor x = lab;
    for (auto& cb : blocks_) {
        x = ad::conv2d(x, cb.kernel, 2, 1, tape);
        x = ad::batchnorm2d(x, cb.gamma, cb.beta, cb.bn, training, tape);
        x = ad::leaky_relu(x, 0.2f, tape);
    }
    x = ad::global_avg_pool(x, tape);
    x = ad::conv2d(x, head_, 1, 0, tape);
    return ad::sigmoid(x, tape);
}

std::vector<std::pair<std::string, ad::Tensor>> DiscriminatorNet::parameters() {
    std::vector<std::pair<std::string, ad::Tensor>> out;
    for (size_t i = 0; i < blocks_.size(); ++i)
        push_conv_bn("block" + std::to_string(i), blocks_[i], false, out);
    out.emplace_back("head", head_);
    return out;
}

std::vector<std::pair<std::string, ad::Tensor>> DiscriminatorNet::state_tensors() {
    std::vector<std::pair<std::string, ad::Tensor>> out;
    for (size_t i = 0; i < blocks_.size(); ++i)
        push_conv_bn("block" + std::to_string(i), blocks_[i], true, out);
    out.emplace_back("head", head_);
    return out;
}

void DiscriminatorNet::load_state(const std::vector<std::pair<std::string, ad::Tensor>>& state) {
    std::map<std::string, ad::Tensor> by_name(state.begin(), state.end());
    auto fetch = [&](const std::string& name) {
        auto it = by_name.find(name);
        if (it == by_name.end())
            throw std::runtime_error("colorcorrect: checkpoint missing tensor " + name);
        return it->second;
    };
    const ad::Tensor b0 = fetch("block0.kernel");
    *this = DiscriminatorNet::init(0, b0.dim(3));
    for (auto& [name, t] : state_tensors()) {
        ad::Tensor src = fetch(name);
        if (src.shape() != t.shape())
            throw std::runtime_error("colorcorrect: checkpoint shape mismatch for " + name);
        t.values() = src.values();
    }
}

// ------------------------------- training ----------------------------------

void TrainConfig::validate() const {
    if (lambda <= 0.0f || epochs <= 0 || batch_size <= 0 || lr <= 0.0f || pretrain_epochs < 0 ||
        base_width <= 0)
        throw std::invalid_argument("colorcorrect: train config values must be positive");
}

TrainResult train(const std::vector<ImageF>& patches, const TrainConfig& config) {
    config.validate();
    if (patches.empty()) throw std::invalid_argument("colorcorrect: empty training set");
    for (const auto& p : patches)
        if (p.channels != 3 || p.height % 8 != 0 || p.width % 8 != 0)
            throw std::invalid_argument("colorcorrect: patches must be RGB with dims divisible by 8");

    std::vector<ad::Tensor> light, chroma;
    light.reserve(patches.size());
    chroma.reserve(patches.size());
    for (const auto& p : patches) {
        auto [l, ab] = split_lab(p);
        light.push_back(to_tensor(l));
        chroma.push_back(to_tensor(ab));
    }

    TrainResult result;
    result.generator = GeneratorNet::init(Rng::mix(config.seed, 1), config.base_width);
    result.discriminator = DiscriminatorNet::init(Rng::mix(config.seed, 2), config.base_width);
    GeneratorNet& gen = result.generator;
    DiscriminatorNet& disc = result.discriminator;

    ad::AdamOptimizer opt_g(config.lr);
    for (auto& [name, p] : gen.parameters()) opt_g.add_param(name, p);
    ad::AdamOptimizer opt_d(config.lr);
    for (auto& [name, p] : disc.parameters()) opt_d.add_param(name, p);

    std::vector<size_t> order(patches.size());
    std::iota(order.begin(), order.end(), 0);

    ad::Tape tape;
    const ad::Tensor one = ad::Tensor(ad::Shape{1, 1, 1}, {1.0f});
    const ad::Tensor zero = ad::Tensor(ad::Shape{1, 1, 1}, {0.0f});
    int epoch_no = 0;

    auto abort_with = [&](const std::string& msg) {
        result.aborted = true;
        result.error = msg;
        tape.clear();
        return result;
    };

    // Phase 1: generator-only L1 warmup.
    for (int e = 0; e < config.pretrain_epochs; ++e) {
        ++epoch_no;
        Rng shuffle_rng(Rng::mix(config.seed, 1000 + static_cast<uint64_t>(epoch_no)));
        shuffle_rng.shuffle(order);
        double epoch_l1 = 0.0;
        int seen = 0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(config.batch_size)) {
            const size_t end = std::min(order.size(), start + static_cast<size_t>(config.batch_size));
            const float inv = 1.0f / static_cast<float>(end - start);
            for (size_t i = start; i < end; ++i) {
                tape.clear();
                ad::Tensor fake = gen.forward(light[order[i]], true, &tape);
                ad::Tensor l1 = ad::l1_loss(fake, chroma[order[i]], &tape);
                const float lv = l1.item();
                if (!std::isfinite(lv)) return abort_with("non-finite L1 loss in pretraining");
                epoch_l1 += lv;
                ++seen;
                ad::Tensor loss = ad::scale(l1, inv, &tape);
                tape.backward(loss);
            }
            opt_g.step();
            opt_g.zero_grad();
        }
        result.history.push_back({epoch_no, epoch_l1 / seen, 0.0, 0.0});
    }

    // Phase 2: alternating adversarial updates.
    for (int e = 0; e < config.epochs; ++e) {
        ++epoch_no;
        Rng shuffle_rng(Rng::mix(config.seed, 1000 + static_cast<uint64_t>(epoch_no)));
        shuffle_rng.shuffle(order);
        double epoch_l1 = 0.0, epoch_g = 0.0, epoch_d = 0.0;
        int seen = 0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(config.batch_size)) {
            const size_t end = std::min(order.size(), start + static_cast<size_t>(config.batch_size));
            const float inv = 1.0f / static_cast<float>(end - start);

            // Discriminator step: push D(real) to 1 and D(fake) to 0. The
            // fake pass runs the generator without a tape, detaching it.
            for (size_t i = start; i < end; ++i) {
                const size_t idx = order[i];
                tape.clear();
                ad::Tensor fake_ab = gen.forward(light[idx], true, nullptr);
                ad::Tensor d_real =
                    disc.forward(ad::concat_channels(light[idx], chroma[idx], &tape), true, &tape);
                ad::Tensor d_fake =
                    disc.forward(ad::concat_channels(light[idx], fake_ab, &tape), true, &tape);
                ad::Tensor loss_real = ad::bce_loss(d_real, one, &tape);
                ad::Tensor loss_fake = ad::bce_loss(d_fake, zero, &tape);
                ad::Tensor loss = ad::scale(ad::add(loss_real, loss_fake, &tape), 0.5f * inv, &tape);
                const float dv = loss_real.item() + loss_fake.item();
                if (!std::isfinite(dv)) return abort_with("non-finite discriminator loss");
                epoch_d += dv;
                tape.backward(loss);
            }
            opt_d.step();
            opt_d.zero_grad();

            // Generator step: adversarial term plus lambda-weighted L1.
            for (size_t i = start; i < end; ++i) {
                const size_t idx = order[i];
                tape.clear();
                ad::Tensor fake_ab = gen.forward(light[idx], true, &tape);
                ad::Tensor d_fake =
                    disc.forward(ad::concat_channels(light[idx], fake_ab, &tape), true, &tape);
                ad::Tensor gan = config.saturating_gan
                                     ? ad::scale(ad::bce_loss(d_fake, zero, &tape), -1.0f, &tape)
                                     : ad::bce_loss(d_fake, one, &tape);
                ad::Tensor l1 = ad::l1_loss(fake_ab, chroma[idx], &tape);
                ad::Tensor loss = ad::scale(
                    ad::add(gan, ad::scale(l1, config.lambda, &tape), &tape), inv, &tape);
                const float l1v = l1.item(), gv = gan.item();
                if (!std::isfinite(l1v) || !std::isfinite(gv))
                    return abort_with("non-finite generator loss");
                epoch_l1 += l1v;
                epoch_g += gv;
                ++seen;
                tape.backward(loss);
            }
            opt_g.step();
            opt_g.zero_grad();
            opt_d.zero_grad();  // discard D grads accumulated through the G objective
        }
        result.history.push_back({epoch_no, epoch_l1 / seen, epoch_g / seen, epoch_d / seen});
    }
    tape.clear();
    return result;
}

ImageF correct(const ImageF& image, GeneratorNet& generator) {
    if (!generator.initialized()) throw std::logic_error("colorcorrect: generator not initialized");
    if (image.channels != 3) throw std::invalid_argument("colorcorrect: correct expects RGB");
    auto [lightness, ab_unused] = split_lab(image);
    (void)ab_unused;
    ImageF padded = reflect_pad_to_multiple(lightness, 8);
    ad::Tensor pred = generator.forward(to_tensor(padded), /*training=*/false, nullptr);
    ImageF ab(image.height, image.width, 2);
    const float* pd = pred.data();
    const int wp = pred.dim(1);
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x) {
            ab.at(y, x, 0) = pd[(static_cast<size_t>(y) * wp + x) * 2];
            ab.at(y, x, 1) = pd[(static_cast<size_t>(y) * wp + x) * 2 + 1];
        }
    return merge_lab(lightness, ab);
}

void write_loss_csv(const std::string& path, const std::vector<EpochLoss>& history) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("colorcorrect: cannot write " + path);
    os << "epoch,l1,gan_g,gan_d\n";
    for (const auto& e : history)
        os << e.epoch << "," << e.l1 << "," << e.gan_g << "," << e.gan_d << "\n";
}

void save_models(const std::string& path, GeneratorNet& generator,
                 DiscriminatorNet& discriminator) {
    NamedTensors all;
    for (auto& [name, t] : generator.state_tensors()) all.emplace_back("gen." + name, t);
    for (auto& [name, t] : discriminator.state_tensors()) all.emplace_back("disc." + name, t);
    save_checkpoint(path, all);
}

std::pair<GeneratorNet, DiscriminatorNet> load_models(const std::string& path) {
    NamedTensors all = load_checkpoint(path);
    std::vector<std::pair<std::string, ad::Tensor>> gen_state, disc_state;
    for (auto& [name, t] : all) {
        if (name.rfind("gen.", 0) == 0)
            gen_state.emplace_back(name.substr(4), t);
        else if (name.rfind("disc.", 0) == 0)
            disc_state.emplace_back(name.substr(5), t);
    }
    GeneratorNet g;
    g.load_state(gen_state);
    DiscriminatorNet d;
    if (!disc_state.empty()) d.load_state(disc_state);
    return {std::move(g), std::move(d)};
}

}  // namespace leafseg::cc
