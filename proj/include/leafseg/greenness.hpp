#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "leafseg/image.hpp"

namespace leafseg::green {

struct GreennessParams {
    std::array<float, 3> mu = {0.3f, 0.6f, 0.8f};      // HSV mean color
    std::array<float, 3> sigma = {0.1f, 0.3f, 0.5f};   // diagonal covariance (variances)
    float gamma1 = 0.2f;  // absolute greenness threshold
    float gamma2 = 0.5f;  // relative greenness threshold
    bool circular_hue = true;
    bool use_hsl = false;  // measure in HSL instead of HSV

    void validate() const;
};

struct LeafMask {
    std::vector<uint8_t> mask;     // H x W binary
    std::vector<float> absolute;   // g~ in [0,1]
    std::vector<float> relative;   // g( in [0,1]
    int height = 0, width = 0;
};

/// Replace every pixel with the arithmetic mean RGB of its connected region.
ImageF region_mean_colors(const ImageF& image, const std::vector<int32_t>& regions);

/// Multivariate normal density of Eq. 3 at an HSV (or HSL) triple. With
/// circular_hue the hue residual is min(|h-mu_h|, 1-|h-mu_h|).
double greenness(const float hsv[3], const GreennessParams& params);

/// Density at the mode, 1/sqrt((2*pi)^3 det Sigma).
double greenness_peak(const GreennessParams& params);

/// Region-mean substitution, per-pixel greenness, absolute/relative
/// normalization and the dual-threshold mask. When the image has zero
/// greenness contrast the relative channel is defined as 0 everywhere.
LeafMask leaf_mask(const ImageF& image, const std::vector<int32_t>& regions,
                   const GreennessParams& params);

/// TP/FP/FN overlay (green/red/blue) of a predicted mask against ground
/// truth, blended over the source image.
ImageF render_overlay(const ImageF& image, const std::vector<uint8_t>& predicted,
                      const std::vector<uint8_t>& truth);

}  // namespace leafseg::green
