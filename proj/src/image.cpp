#include "leafseg/image.hpp"

#include <algorithm>
#include <stdexcept>

namespace leafseg {

void clamp01(ImageF& img) {
    for (float& v : img.data) v = std::min(std::max(v, 0.0f), 1.0f);
}

bool in_unit_range(const ImageF& img, float slack) {
    for (float v : img.data)
        if (v < -slack || v > 1.0f + slack) return false;
    return true;
}

ad::Tensor to_tensor(const ImageF& img) {
    return ad::Tensor(ad::Shape{img.height, img.width, img.channels}, img.data);
}

ImageF from_tensor(const ad::Tensor& t) {
    if (t.rank() != 3) throw std::invalid_argument("from_tensor: expected rank-3 tensor");
    ImageF img(t.dim(0), t.dim(1), t.dim(2));
    img.data = t.values();
    return img;
}

}  // namespace leafseg
