#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "leafseg/image.hpp"
#include "leafseg/ops.hpp"

namespace leafseg::cc {

// L* is rescaled to [-1,1] as L*/50 - 1 and a*/b* as value/110 for network
// consumption; merge_lab inverts the rescale.
constexpr float kLScale = 50.0f;
constexpr float kAbScale = 110.0f;

/// Per-pixel rgb -> L*a*b*, split into a 1-channel L* field and a 2-channel
/// a*b* field, both rescaled.
std::pair<ImageF, ImageF> split_lab(const ImageF& rgb);

/// Inverse rescale and lab -> rgb with gamut clip to [0,1].
ImageF merge_lab(const ImageF& lightness, const ImageF& ab);

/// Encoder-decoder generator recovering a*b* from L*: three stride-2
/// Conv-BatchNorm-ReLU stages (widths 32/64/128), two residual blocks, and
/// three upsample+conv stages with skip concatenation from the encoder
/// stages at matching resolution; pointwise head with tanh.
class GeneratorNet {
public:
    GeneratorNet() = default;
    static GeneratorNet init(uint64_t seed, int base_width = 32);

    bool initialized() const { return initialized_; }

    /// input H x W x 1 with H, W divisible by 8; output H x W x 2 in (-1,1).
    ad::Tensor forward(const ad::Tensor& lightness, bool training, ad::Tape* tape = nullptr);

    std::vector<std::pair<std::string, ad::Tensor>> parameters();
    std::vector<std::pair<std::string, ad::Tensor>> state_tensors();  // params + BN stats
    void load_state(const std::vector<std::pair<std::string, ad::Tensor>>& state);

private:
    struct ConvBn {
        ad::Tensor kernel;
        ad::Tensor gamma, beta;
        ad::BatchNormState bn;
    };
    struct ResBlock {
        ConvBn a, b;
    };
    bool initialized_ = false;
    int base_ = 32;
    ConvBn enc1_, enc2_, enc3_;
    ResBlock res1_, res2_;
    ConvBn dec1_, dec2_, dec3_;
    ad::Tensor head_;  // base x 2

    friend void collect(GeneratorNet&, bool, std::vector<std::pair<std::string, ad::Tensor>>&);
};

/// Four stride-2 Conv-BatchNorm-LeakyReLU blocks (widths 32/64/128/256),
/// global average pooling and a pointwise map to one sigmoid probability.
class DiscriminatorNet {
public:
    DiscriminatorNet() = default;
    static DiscriminatorNet init(uint64_t seed, int base_width = 32);

    bool initialized() const { return initialized_; }

    /// input H x W x 3 (L*a*b*, rescaled); output 1 x 1 x 1 in (0,1).
    ad::Tensor forward(const ad::Tensor& lab, bool training, ad::Tape* tape = nullptr);

    std::vector<std::pair<std::string, ad::Tensor>> parameters();
    std::vector<std::pair<std::string, ad::Tensor>> state_tensors();
    void load_state(const std::vector<std::pair<std::string, ad::Tensor>>& state);

private:
    struct ConvBn {
        ad::Tensor kernel;
        ad::Tensor gamma, beta;
        ad::BatchNormState bn;
    };
    bool initialized_ = false;
    std::vector<ConvBn> blocks_;
    ad::Tensor head_;  // widths.back() x 1
};

struct TrainConfig {
    float lambda = 100.0f;   // L1 weight
    int epochs = 50;         // adversarial epochs
    int batch_size = 16;
    float lr = 2e-4f;
    int pretrain_epochs = 20;  // generator-only L1 warmup
    uint64_t seed = 0;
    bool saturating_gan = false;  // minimax generator loss instead of -log D(fake)
    int base_width = 32;

    void validate() const;
};

struct EpochLoss {
    int epoch = 0;
    double l1 = 0.0;
    double gan_g = 0.0;
    double gan_d = 0.0;
};

struct TrainResult {
    GeneratorNet generator;
    DiscriminatorNet discriminator;
    std::vector<EpochLoss> history;
    bool aborted = false;
    std::string error;
};

/// Phase 1: pretrain_epochs of generator-only L1. Phase 2: alternating
/// discriminator/generator updates per batch. Deterministic under
/// config.seed; aborts with partial state on non-finite losses.
TrainResult train(const std::vector<ImageF>& patches, const TrainConfig& config);

/// Recolor an image from its own L* channel only. Dims are reflect-padded
/// to multiples of 8 and cropped back.
ImageF correct(const ImageF& image, GeneratorNet& generator);

void write_loss_csv(const std::string& path, const std::vector<EpochLoss>& history);

void save_models(const std::string& path, GeneratorNet& generator, DiscriminatorNet& discriminator);
std::pair<GeneratorNet, DiscriminatorNet> load_models(const std::string& path);

}  // namespace leafseg::cc
