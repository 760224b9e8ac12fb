#pragma once

#include <vector>

#include "leafseg/tensor.hpp"

namespace leafseg {

/// Plain H x W x C float image, channel-last, values nominally in [0,1].
struct ImageF {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<float> data;

    ImageF() = default;
    ImageF(int h, int w, int c, float fill = 0.0f)
        : height(h), width(w), channels(c),
          data(static_cast<size_t>(h) * w * c, fill) {}

    bool empty() const { return data.empty(); }
    size_t pixels() const { return static_cast<size_t>(height) * width; }

    float* px(int y, int x) {
        return data.data() + (static_cast<size_t>(y) * width + x) * channels;
    }
    const float* px(int y, int x) const {
        return data.data() + (static_cast<size_t>(y) * width + x) * channels;
    }

    float& at(int y, int x, int c) { return px(y, x)[c]; }
    float at(int y, int x, int c) const { return px(y, x)[c]; }
};

/// Clamp all values into [0,1] in place.
void clamp01(ImageF& img);

bool in_unit_range(const ImageF& img, float slack = 0.0f);

ad::Tensor to_tensor(const ImageF& img);
ImageF from_tensor(const ad::Tensor& t);

}  // namespace leafseg
