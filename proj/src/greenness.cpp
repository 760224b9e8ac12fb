#include "leafseg/greenness.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "leafseg/colorspace.hpp"

namespace leafseg::green {

void GreennessParams::validate() const {
    for (float s : sigma)
        if (s <= 0.0f) throw std::invalid_argument("greenness: sigma entries must be > 0");
    if (gamma1 < 0.0f || gamma1 > 1.0f || gamma2 < 0.0f || gamma2 > 1.0f)
        throw std::invalid_argument("greenness: thresholds must be in [0,1]");
}

ImageF region_mean_colors(const ImageF& image, const std::vector<int32_t>& regions) {
    if (regions.size() != image.pixels())
        throw std::invalid_argument("region_mean_colors: region map does not cover the image");
    int32_t nreg = 0;
    for (int32_t r : regions) nreg = std::max(nreg, r + 1);
    std::vector<std::array<double, 3>> sum(static_cast<size_t>(nreg), {0.0, 0.0, 0.0});
    std::vector<int64_t> count(static_cast<size_t>(nreg), 0);
    const size_t n = image.pixels();
    for (size_t i = 0; i < n; ++i) {
        const float* p = image.data.data() + i * image.channels;
        auto& s = sum[static_cast<size_t>(regions[i])];
        for (int c = 0; c < 3; ++c) s[static_cast<size_t>(c)] += p[c];
        ++count[static_cast<size_t>(regions[i])];
    }
    ImageF out(image.height, image.width, 3);
    for (size_t i = 0; i < n; ++i) {
        const auto& s = sum[static_cast<size_t>(regions[i])];
        const double c = static_cast<double>(count[static_cast<size_t>(regions[i])]);
        float* p = out.data.data() + i * 3;
        for (int ch = 0; ch < 3; ++ch) p[ch] = static_cast<float>(s[static_cast<size_t>(ch)] / c);
    }
    return out;
}

double greenness(const float hsv[3], const GreennessParams& params) {
    double md = 0.0;
    for (int i = 0; i < 3; ++i) {
        double d = static_cast<double>(hsv[i]) - params.mu[static_cast<size_t>(i)];
        if (i == 0 && params.circular_hue) {
            d = std::fabs(d);
            d = std::min(d, 1.0 - d);
        }
        md += d * d / params.sigma[static_cast<size_t>(i)];
    }
    return greenness_peak(params) * std::exp(-0.5 * md);
}

double greenness_peak(const GreennessParams& params) {
    const double two_pi_cubed = 248.05021344239853;  // (2*pi)^3
    const double det = static_cast<double>(params.sigma[0]) * params.sigma[1] * params.sigma[2];
    return 1.0 / std::sqrt(two_pi_cubed * det);
}

LeafMask leaf_mask(const ImageF& image, const std::vector<int32_t>& regions,
                   const GreennessParams& params) {
    params.validate();
    ImageF mean = region_mean_colors(image, regions);
    const size_t n = image.pixels();
    LeafMask out;
    out.height = image.height;
    out.width = image.width;
    out.absolute.resize(n);
    out.relative.resize(n);
    out.mask.resize(n);

    const double peak = greenness_peak(params);
    std::vector<double> g(n);
    double gmin = 0.0, gmax = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const float* p = mean.data.data() + i * 3;
        float v[3];
        if (params.use_hsl)
            color::rgb_to_hsl(p[0], p[1], p[2], v[0], v[1], v[2]);
        else
            color::rgb_to_hsv(p[0], p[1], p[2], v[0], v[1], v[2]);
        g[i] = greenness(v, params);
        if (i == 0) {
            gmin = gmax = g[i];
        } else {
            gmin = std::min(gmin, g[i]);
            gmax = std::max(gmax, g[i]);
        }
    }
    const double span = gmax - gmin;
    for (size_t i = 0; i < n; ++i) {
        double abs_g = g[i] / peak;
        double rel_g = span > 0.0 ? (g[i] - gmin) / span : 0.0;
        out.absolute[i] = static_cast<float>(abs_g);
        out.relative[i] = static_cast<float>(rel_g);
        out.mask[i] = (abs_g > params.gamma1 && rel_g > params.gamma2) ? 1 : 0;
    }
    return out;
}

ImageF render_overlay(const ImageF& image, const std::vector<uint8_t>& predicted,
                      const std::vector<uint8_t>& truth) {
    if (predicted.size() != image.pixels() || truth.size() != image.pixels())
        throw std::invalid_argument("render_overlay: mask size mismatch");
    ImageF out(image.height, image.width, 3);
    const float alpha = 0.6f;
    for (size_t i = 0; i < image.pixels(); ++i) {
        const float* src = image.data.data() + i * image.channels;
        float* dst = out.data.data() + i * 3;
        float r = src[0], g = src[std::min(1, image.channels - 1)],
              b = src[std::min(2, image.channels - 1)];
        float cr = 0.0f, cg = 0.0f, cb = 0.0f;
        bool tinted = true;
        if (predicted[i] && truth[i]) {
            cg = 1.0f;  // true positive
        } else if (predicted[i] && !truth[i]) {
            cr = 1.0f;  // false positive
        } else if (!predicted[i] && truth[i]) {
            cb = 1.0f;  // false negative
        } else {
            tinted = false;
        }
        if (tinted) {
            dst[0] = (1.0f - alpha) * r + alpha * cr;
            dst[1] = (1.0f - alpha) * g + alpha * cg;
            dst[2] = (1.0f - alpha) * b + alpha * cb;
        } else {
            dst[0] = r;
            dst[1] = g;
            dst[2] = b;
        }
    }
    return out;
}

}  // namespace leafseg::green
