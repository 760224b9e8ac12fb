#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "leafseg/image.hpp"
#include "leafseg/ops.hpp"
#include "leafseg/tensor.hpp"

namespace leafseg::net {

struct EmbedNetConfig {
    int num_labels = 64;     // K
    int num_blocks = 3;      // 2 or 3
    int hidden_channels = 64;
    uint64_t seed = 0;

    void validate() const;
};

/// Shallow per-pixel embedding network: num_blocks of
/// [pointwise conv -> 3x3 depthwise conv -> batchnorm -> ReLU] followed by a
/// pointwise head and a channel softmax. Spatial shape is preserved.
class EmbedNet {
public:
    EmbedNet() = default;
    /// He-style fan-in scaled random init, fully determined by config.seed.
    static EmbedNet init(const EmbedNetConfig& config);

    /// image must be H x W x 3 in [0,1]; output H x W x K, rows summing to 1.
    ad::Tensor forward(const ad::Tensor& image, bool training, ad::Tape* tape = nullptr);

    std::vector<std::pair<std::string, ad::Tensor>> parameters();
    size_t parameter_count() const;

    const EmbedNetConfig& config() const { return config_; }

private:
    struct Block {
        ad::Tensor pointwise;   // Cin x hidden
        ad::Tensor depthwise;   // 3 x 3 x hidden
        ad::Tensor gamma, beta; // hidden
        ad::BatchNormState bn;
    };
    EmbedNetConfig config_;
    std::vector<Block> blocks_;
    ad::Tensor head_;  // hidden x K
};

}  // namespace leafseg::net
