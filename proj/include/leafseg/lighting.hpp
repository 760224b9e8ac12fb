#pragma once

#include <array>
#include <cstdint>

#include "leafseg/image.hpp"

namespace leafseg::light {

enum class Mode { Yellow, Purple };

struct LightingSpec {
    Mode mode = Mode::Yellow;
    std::array<float, 2> hue_range = {0.13f, 0.15f};
    std::array<float, 2> sat_range = {0.6f, 1.0f};
    std::array<float, 2> light_range = {0.75f, 1.0f};
    uint64_t seed = 0;
    bool per_pixel_hue = true;

    static LightingSpec for_mode(Mode m, uint64_t seed = 0);
    void validate() const;
};

/// Simulated grow-light distortion in HSL: the hue of each pixel is replaced
/// by an independent uniform draw from hue_range (one shared draw when
/// per_pixel_hue is off); saturation and lightness are each multiplied by a
/// single per-image uniform factor from their ranges. Deterministic under
/// spec.seed. Draw order: saturation factor, lightness factor, then hues in
/// row-major order.
ImageF apply_lighting(const ImageF& image, const LightingSpec& spec);

}  // namespace leafseg::light
