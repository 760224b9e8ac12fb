#pragma once

#include <cstdint>
#include <vector>

#include "leafseg/tensor.hpp"

namespace leafseg::ad {

// Image-like tensors are laid out H x W x C (channel-last, channels
// contiguous per pixel). Convolution kernels are k x k x Cin x Cout,
// depthwise kernels 3 x 3 x C, pointwise weights Cin x Cout.

Tensor add(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor sub(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor scale(const Tensor& x, float c, Tape* tape = nullptr);
Tensor log_clamped(const Tensor& x, float eps = 1e-12f, Tape* tape = nullptr);

Tensor relu(const Tensor& x, Tape* tape = nullptr);
Tensor leaky_relu(const Tensor& x, float slope = 0.2f, Tape* tape = nullptr);
Tensor tanh_op(const Tensor& x, Tape* tape = nullptr);
Tensor sigmoid(const Tensor& x, Tape* tape = nullptr);

/// Cross-correlation with zero padding; output spatial size
/// floor((H + 2*pad - k)/stride) + 1.
Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int pad,
              Tape* tape = nullptr);

/// One 3x3 filter per channel; output channel c depends only on input
/// channel c. Pads by reflection, so constant fields stay constant.
Tensor depthwise_conv2d(const Tensor& input, const Tensor& kernel, int pad = 1,
                        Tape* tape = nullptr);

/// Per-pixel linear map across channels.
Tensor pointwise_conv2d(const Tensor& input, const Tensor& weights, Tape* tape = nullptr);

struct BatchNormState {
    Tensor running_mean;  // per channel
    Tensor running_var;
    float momentum = 0.1f;
    float eps = 1e-5f;

    static BatchNormState init(int channels);
};

/// Train mode normalizes by the spatial statistics of `input` and updates
/// the running stats; eval mode normalizes by the running stats.
/// Differentiable w.r.t. input, gamma and beta in both modes.
Tensor batchnorm2d(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                   BatchNormState& state, bool training, Tape* tape = nullptr);

/// Per-pixel softmax over the channel dimension, max-subtracted.
/// Outputs are floored at FLT_MIN so every entry stays strictly positive.
Tensor channel_softmax(const Tensor& input, Tape* tape = nullptr);

/// Mean over pixels of -log probs[i, labels[i]], log clamped at 1e-12.
Tensor cross_entropy(const Tensor& probs, const std::vector<int32_t>& labels,
                     Tape* tape = nullptr);

/// Mean absolute difference; subgradient at 0 fixed to 0.
Tensor l1_loss(const Tensor& a, const Tensor& b, Tape* tape = nullptr);

/// -mean(t*log p + (1-t)*log(1-p)), p clamped to [1e-7, 1-1e-7].
Tensor bce_loss(const Tensor& pred, const Tensor& target, Tape* tape = nullptr);

/// Nearest-neighbor doubling of both spatial dims.
Tensor upsample2x(const Tensor& input, Tape* tape = nullptr);

Tensor concat_channels(const Tensor& a, const Tensor& b, Tape* tape = nullptr);

/// H x W x C -> 1 x 1 x C spatial mean.
Tensor global_avg_pool(const Tensor& input, Tape* tape = nullptr);

}  // namespace leafseg::ad
