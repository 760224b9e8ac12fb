#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "leafseg/colorspace.hpp"
#include "leafseg/greenness.hpp"
#include "leafseg/rng.hpp"
#include "leafseg/segmenter.hpp"

using namespace leafseg;

namespace {

// Paint two vertical bands with given HSV colors; region ids 0/1.
struct RegionScene {
    ImageF image;
    std::vector<int32_t> regions;
};

RegionScene two_band_scene(int h, int w, const float hsv_left[3], const float hsv_right[3]) {
    RegionScene s;
    s.image = ImageF(h, w, 3);
    s.regions.assign(static_cast<size_t>(h) * w, 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const bool left = x < w / 2;
            const float* c = left ? hsv_left : hsv_right;
            float* p = s.image.px(y, x);
            color::hsv_to_rgb(c[0], c[1], c[2], p[0], p[1], p[2]);
            s.regions[static_cast<size_t>(y) * w + x] = left ? 0 : 1;
        }
    return s;
}

}  // namespace

TEST_CASE("region_mean_colors: single region, two-point mean, brute-force oracle") {
    ImageF img(2, 2, 3);
    for (int i = 0; i < 4; ++i)
        for (int c = 0; c < 3; ++c) img.data[static_cast<size_t>(i) * 3 + c] = 0.1f * (i + c);
    std::vector<int32_t> one_region(4, 0);
    ImageF mean = green::region_mean_colors(img, one_region);
    for (int c = 0; c < 3; ++c) {
        double expect = 0.0;
        for (int i = 0; i < 4; ++i) expect += img.data[static_cast<size_t>(i) * 3 + c];
        expect /= 4.0;
        for (int i = 0; i < 4; ++i)
            CHECK(mean.data[static_cast<size_t>(i) * 3 + c] == doctest::Approx(expect));
    }

    // region of {(0,0,0), (1,1,1)} -> both become (0.5, 0.5, 0.5)
    ImageF bw(1, 2, 3);
    for (int c = 0; c < 3; ++c) bw.data[static_cast<size_t>(3 + c)] = 1.0f;
    std::vector<int32_t> pair_region(2, 0);
    ImageF m2 = green::region_mean_colors(bw, pair_region);
    for (size_t i = 0; i < m2.data.size(); ++i) CHECK(m2.data[i] == doctest::Approx(0.5f));

    // random map: brute-force per-region grouping matches exactly
    Rng rng(77);
    ImageF rimg(6, 7, 3);
    for (auto& v : rimg.data) v = static_cast<float>(rng.uniform());
    std::vector<int32_t> labels(42);
    for (auto& l : labels) l = static_cast<int32_t>(rng.uniform_int(0, 3));
    auto regions = seg::region_label_map(labels, 6, 7);
    ImageF got = green::region_mean_colors(rimg, regions);
    std::map<int32_t, std::array<double, 4>> acc;  // region -> (r,g,b,count)
    for (size_t i = 0; i < regions.size(); ++i) {
        auto& a = acc[regions[i]];
        for (int c = 0; c < 3; ++c) a[static_cast<size_t>(c)] += rimg.data[i * 3 + c];
        a[3] += 1.0;
    }
    for (size_t i = 0; i < regions.size(); ++i) {
        const auto& a = acc[regions[i]];
        for (int c = 0; c < 3; ++c)
            CHECK(got.data[i * 3 + c] ==
                  doctest::Approx(a[static_cast<size_t>(c)] / a[3]).epsilon(1e-7));
    }
}

TEST_CASE("greenness density closed forms") {
    green::GreennessParams params;  // defaults mu=[.3,.6,.8], sigma=[.1,.3,.5]

    // peak = 1/sqrt((2 pi)^3 det Sigma), det = 0.1*0.3*0.5 = 0.015
    const double peak = green::greenness_peak(params);
    CHECK(peak == doctest::Approx(0.518422827).epsilon(1e-6));
    CHECK(std::fabs(peak - 0.51846) < 1e-4);

    float at_mu[3] = {0.3f, 0.6f, 0.8f};
    CHECK(green::greenness(at_mu, params) == doctest::Approx(peak).epsilon(1e-7));

    // one sigma along a single axis -> peak * exp(-1/2)
    float one_sigma[3] = {0.3f + std::sqrt(0.1f), 0.6f, 0.8f};
    CHECK(green::greenness(one_sigma, params) ==
          doctest::Approx(peak * std::exp(-0.5)).epsilon(1e-5));

    // mode dominates every other point
    Rng rng(5);
    for (int i = 0; i < 500; ++i) {
        float v[3] = {static_cast<float>(rng.uniform()), static_cast<float>(rng.uniform()),
                      static_cast<float>(rng.uniform())};
        CHECK(green::greenness(v, params) <= peak + 1e-12);
    }
}

TEST_CASE("circular hue residual wraps") {
    green::GreennessParams params;
    float near_wrap[3] = {0.95f, 0.6f, 0.8f};  // circular distance to 0.3 is 0.35, not 0.65
    const double circular = green::greenness(near_wrap, params);
    params.circular_hue = false;
    const double linear = green::greenness(near_wrap, params);
    CHECK(circular > linear);
    params.circular_hue = true;
    const double expected =
        green::greenness_peak(params) * std::exp(-0.5 * (0.35 * 0.35 / 0.1));
    CHECK(circular == doctest::Approx(expected).epsilon(1e-5));
}

TEST_CASE("leaf_mask: mu-colored region against black is detected") {
    float mu_color[3] = {0.3f, 0.6f, 0.8f};
    float black[3] = {0.0f, 0.0f, 0.0f};
    RegionScene s = two_band_scene(4, 8, mu_color, black);
    green::GreennessParams params;
    green::LeafMask mask = green::leaf_mask(s.image, s.regions, params);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 8; ++x) {
            const size_t i = static_cast<size_t>(y) * 8 + x;
            if (x < 4) {
                CHECK(mask.mask[i] == 1);
                CHECK(mask.absolute[i] == doctest::Approx(1.0f).epsilon(1e-4));
                CHECK(mask.relative[i] == doctest::Approx(1.0f));
            } else {
                CHECK(mask.mask[i] == 0);
            }
        }
}

TEST_CASE("leaf_mask: no green content leaves the mask empty") {
    // two dark red-violet bands; the brighter one gets relative greenness 1
    // but fails the absolute threshold
    float a[3] = {0.82f, 0.2f, 0.10f};
    float b[3] = {0.86f, 0.25f, 0.06f};
    RegionScene s = two_band_scene(4, 8, a, b);
    green::GreennessParams params;
    green::LeafMask mask = green::leaf_mask(s.image, s.regions, params);
    float max_abs = 0.0f, max_rel = 0.0f;
    for (size_t i = 0; i < mask.mask.size(); ++i) {
        CHECK(mask.mask[i] == 0);
        max_abs = std::max(max_abs, mask.absolute[i]);
        max_rel = std::max(max_rel, mask.relative[i]);
    }
    CHECK(max_abs < params.gamma1);
    CHECK(max_rel == doctest::Approx(1.0f));  // relative alone never suffices
}

TEST_CASE("leaf_mask: slightly-green moss is excluded by relative greenness") {
    // three regions: leaf at mu, dark moss (absolute above gamma1), dark soil
    const int h = 3, w = 9;
    ImageF img(h, w, 3);
    std::vector<int32_t> regions(static_cast<size_t>(h) * w);
    const float leaf[3] = {0.3f, 0.6f, 0.8f};
    const float moss[3] = {0.27f, 0.2f, 0.1f};
    const float soil[3] = {0.08f, 0.5f, 0.3f};
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const float* c = x < 3 ? leaf : (x < 6 ? moss : soil);
            float* p = img.px(y, x);
            color::hsv_to_rgb(c[0], c[1], c[2], p[0], p[1], p[2]);
            regions[static_cast<size_t>(y) * w + x] = x < 3 ? 0 : (x < 6 ? 1 : 2);
        }
    green::GreennessParams params;
    green::LeafMask mask = green::leaf_mask(img, regions, params);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const size_t i = static_cast<size_t>(y) * w + x;
            if (x < 3) {
                CHECK(mask.mask[i] == 1);
            } else if (x < 6) {
                CHECK(mask.absolute[i] > params.gamma1);  // a real distractor
                CHECK(mask.relative[i] <= params.gamma2);
                CHECK(mask.mask[i] == 0);
            } else {
                CHECK(mask.mask[i] == 0);
            }
        }
}

TEST_CASE("leaf_mask: zero-contrast image yields no detection") {
    float mu_color[3] = {0.3f, 0.6f, 0.8f};
    RegionScene s = two_band_scene(4, 6, mu_color, mu_color);
    green::GreennessParams params;
    green::LeafMask mask = green::leaf_mask(s.image, s.regions, params);
    for (size_t i = 0; i < mask.mask.size(); ++i) {
        CHECK(mask.relative[i] == 0.0f);  // degenerate rule
        CHECK(mask.mask[i] == 0);
    }
}

TEST_CASE("fields bounded, id-permutation invariance, threshold monotonicity") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const int h = 6, w = 8;
        ImageF img(h, w, 3);
        for (auto& v : img.data) v = static_cast<float>(rng.uniform());
        std::vector<int32_t> labels(static_cast<size_t>(h) * w);
        for (auto& l : labels) l = static_cast<int32_t>(rng.uniform_int(0, 4));
        auto regions = seg::region_label_map(labels, h, w);

        green::GreennessParams params;
        green::LeafMask mask = green::leaf_mask(img, regions, params);
        for (size_t i = 0; i < mask.mask.size(); ++i) {
            CHECK(mask.absolute[i] >= 0.0f);
            CHECK(mask.absolute[i] <= 1.0f);
            CHECK(mask.relative[i] >= 0.0f);
            CHECK(mask.relative[i] <= 1.0f);
        }

        // permuting region ids must not change the mask
        int32_t nreg = 0;
        for (int32_t r : regions) nreg = std::max(nreg, r + 1);
        std::vector<int32_t> perm(static_cast<size_t>(nreg));
        for (int32_t i = 0; i < nreg; ++i) perm[static_cast<size_t>(i)] = nreg - 1 - i;
        std::vector<int32_t> permuted(regions.size());
        for (size_t i = 0; i < regions.size(); ++i)
            permuted[i] = perm[static_cast<size_t>(regions[i])];
        green::LeafMask mask2 = green::leaf_mask(img, permuted, params);
        CHECK(mask.mask == mask2.mask);

        // raising either threshold never adds pixels
        green::GreennessParams tighter = params;
        tighter.gamma1 = std::min(1.0f, params.gamma1 + 0.2f);
        green::LeafMask m3 = green::leaf_mask(img, regions, tighter);
        tighter = params;
        tighter.gamma2 = std::min(1.0f, params.gamma2 + 0.2f);
        green::LeafMask m4 = green::leaf_mask(img, regions, tighter);
        for (size_t i = 0; i < mask.mask.size(); ++i) {
            CHECK(m3.mask[i] <= mask.mask[i]);
            CHECK(m4.mask[i] <= mask.mask[i]);
        }

        // with both thresholds 0 every non-minimum pixel is selected
        green::GreennessParams zero = params;
        zero.gamma1 = 0.0f;
        zero.gamma2 = 0.0f;
        green::LeafMask m5 = green::leaf_mask(img, regions, zero);
        for (size_t i = 0; i < m5.mask.size(); ++i)
            CHECK(m5.mask[i] == ((m5.absolute[i] > 0.0f && m5.relative[i] > 0.0f) ? 1 : 0));
    }
}

TEST_CASE("overlay colors TP green, FP red, FN blue") {
    ImageF img(1, 4, 3, 0.5f);
    std::vector<uint8_t> pred = {1, 1, 0, 0};
    std::vector<uint8_t> truth = {1, 0, 1, 0};
    ImageF ov = green::render_overlay(img, pred, truth);
    CHECK(ov.at(0, 0, 1) > ov.at(0, 0, 0));  // TP: green dominates
    CHECK(ov.at(0, 1, 0) > ov.at(0, 1, 1));  // FP: red dominates
    CHECK(ov.at(0, 2, 2) > ov.at(0, 2, 0));  // FN: blue dominates
    CHECK(ov.at(0, 3, 0) == doctest::Approx(0.5f));  // TN: untouched
}
