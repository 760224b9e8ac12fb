#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "leafseg/colorspace.hpp"
#include "leafseg/lighting.hpp"
#include "leafseg/rng.hpp"

using namespace leafseg;

namespace {

ImageF random_image(int h, int w, uint64_t seed) {
    Rng rng(seed);
    ImageF img(h, w, 3);
    for (auto& v : img.data) v = static_cast<float>(rng.uniform(0.05, 0.95));
    return img;
}

}  // namespace

TEST_CASE("yellow and purple modes keep hues inside their ranges") {
    ImageF img = random_image(12, 16, 3);
    for (auto mode : {light::Mode::Yellow, light::Mode::Purple}) {
        light::LightingSpec spec = light::LightingSpec::for_mode(mode, 9);
        ImageF out = light::apply_lighting(img, spec);
        for (size_t i = 0; i < out.pixels(); ++i) {
            const float* p = out.data.data() + i * 3;
            float h, s, l;
            color::rgb_to_hsl(p[0], p[1], p[2], h, s, l);
            if (s < 1e-6f || l < 1e-6f || l > 1.0f - 1e-6f) continue;  // hue undefined
            CHECK(h >= spec.hue_range[0] - 1e-6f);
            CHECK(h <= spec.hue_range[1] + 1e-6f);
        }
    }
}

TEST_CASE("a saturation factor of 0.6 scales S = 1 to exactly 0.6") {
    // one fully saturated pixel; pin the factor by collapsing the range
    ImageF img(1, 1, 3);
    color::hsl_to_rgb(0.5f, 1.0f, 0.5f, img.data[0], img.data[1], img.data[2]);
    light::LightingSpec spec = light::LightingSpec::for_mode(light::Mode::Yellow, 1);
    spec.sat_range = {0.6f, 0.6f};
    spec.light_range = {1.0f, 1.0f};
    ImageF out = light::apply_lighting(img, spec);
    float h, s, l;
    color::rgb_to_hsl(out.data[0], out.data[1], out.data[2], h, s, l);
    CHECK(s == doctest::Approx(0.6f).epsilon(1e-5));
    CHECK(l == doctest::Approx(0.5f).epsilon(1e-5));
}

TEST_CASE("same seed is bitwise deterministic, different seeds differ") {
    ImageF img = random_image(10, 10, 7);
    light::LightingSpec spec = light::LightingSpec::for_mode(light::Mode::Purple, 42);
    ImageF a = light::apply_lighting(img, spec);
    ImageF b = light::apply_lighting(img, spec);
    CHECK(a.data == b.data);
    spec.seed = 43;
    ImageF c = light::apply_lighting(img, spec);
    CHECK(a.data != c.data);
}

TEST_CASE("relative lightness ordering is preserved") {
    ImageF img = random_image(8, 8, 11);
    light::LightingSpec spec = light::LightingSpec::for_mode(light::Mode::Yellow, 5);
    ImageF out = light::apply_lighting(img, spec);
    std::vector<float> lin(img.pixels()), lout(img.pixels());
    for (size_t i = 0; i < img.pixels(); ++i) {
        float h, s;
        color::rgb_to_hsl(img.data[i * 3], img.data[i * 3 + 1], img.data[i * 3 + 2], h, s,
                          lin[i]);
        color::rgb_to_hsl(out.data[i * 3], out.data[i * 3 + 1], out.data[i * 3 + 2], h, s,
                          lout[i]);
    }
    for (size_t i = 0; i < lin.size(); ++i)
        for (size_t j = i + 1; j < lin.size(); ++j)
            if (lin[i] < lin[j] - 1e-5f) CHECK(lout[i] <= lout[j] + 1e-5f);
}

TEST_CASE("per-image hue variant uses a single hue") {
    ImageF img = random_image(6, 6, 13);
    light::LightingSpec spec = light::LightingSpec::for_mode(light::Mode::Yellow, 3);
    spec.per_pixel_hue = false;
    ImageF out = light::apply_lighting(img, spec);
    float href = -1.0f;
    for (size_t i = 0; i < out.pixels(); ++i) {
        float h, s, l;
        color::rgb_to_hsl(out.data[i * 3], out.data[i * 3 + 1], out.data[i * 3 + 2], h, s, l);
        if (s < 1e-6f || l < 1e-6f || l > 1.0f - 1e-6f) continue;
        if (href < 0.0f) href = h;
        CHECK(h == doctest::Approx(href).epsilon(1e-5));
    }
}

TEST_CASE("invalid ranges are rejected") {
    light::LightingSpec spec;
    spec.hue_range = {0.5f, 0.4f};
    ImageF img = random_image(4, 4, 1);
    CHECK_THROWS_AS(light::apply_lighting(img, spec), std::invalid_argument);
}
