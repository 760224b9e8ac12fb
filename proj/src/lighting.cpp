#include "leafseg/lighting.hpp"

#include <algorithm>
#include <stdexcept>

#include "leafseg/colorspace.hpp"
#include "leafseg/rng.hpp"

namespace leafseg::light {

LightingSpec LightingSpec::for_mode(Mode m, uint64_t seed) {
    LightingSpec s;
    s.mode = m;
    s.seed = seed;
    if (m == Mode::Purple) s.hue_range = {0.83f, 0.86f};
    return s;
}

void LightingSpec::validate() const {
    auto check = [](const std::array<float, 2>& r, const char* name) {
        if (r[0] < 0.0f || r[1] > 1.0f || r[0] > r[1])
            throw std::invalid_argument(std::string("lighting: bad ") + name + " range");
    };
    check(hue_range, "hue");
    check(sat_range, "saturation");
    check(light_range, "lightness");
}

ImageF apply_lighting(const ImageF& image, const LightingSpec& spec) {
    spec.validate();
    if (image.channels != 3) throw std::invalid_argument("lighting: expected RGB image");
    Rng rng(spec.seed);
    const float sat_f = static_cast<float>(rng.uniform(spec.sat_range[0], spec.sat_range[1]));
    const float light_f =
        static_cast<float>(rng.uniform(spec.light_range[0], spec.light_range[1]));
    float shared_hue = 0.0f;
    if (!spec.per_pixel_hue)
        shared_hue = static_cast<float>(rng.uniform(spec.hue_range[0], spec.hue_range[1]));

    ImageF out(image.height, image.width, 3);
    const size_t n = image.pixels();
    for (size_t i = 0; i < n; ++i) {
        const float* p = image.data.data() + i * 3;
        float h, s, l;
        color::rgb_to_hsl(p[0], p[1], p[2], h, s, l);
        h = spec.per_pixel_hue
                ? static_cast<float>(rng.uniform(spec.hue_range[0], spec.hue_range[1]))
                : shared_hue;
        s = std::min(1.0f, s * sat_f);
        l = std::min(1.0f, l * light_f);
        float* q = out.data.data() + i * 3;
        color::hsl_to_rgb(h, s, l, q[0], q[1], q[2]);
    }
    return out;
}

}  // namespace leafseg::light
