#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "leafseg/image.hpp"

namespace leafseg::metrics {

struct MaskPair {
    std::vector<uint8_t> predicted;
    std::vector<uint8_t> truth;
    int height = 0, width = 0;
};

/// Foreground-Background Dice of one mask pair: 2TP/(2TP+FP+FN).
/// Empty truth with empty prediction scores 1; with non-empty prediction 0.
double dice(const MaskPair& pair);

/// Mean per-image Dice over a non-empty list.
double fbd(const std::vector<MaskPair>& pairs);

/// PSNR over the pooled U and V channels (BT.601, chroma range 1.0).
/// Identical images return +infinity; text output caps at 99 dB.
double psnr_uv(const ImageF& a, const ImageF& b);

constexpr double kPsnrTextCap = 99.0;

/// Mean SSIM over the U and V channels; 11x11 Gaussian window, sigma 1.5,
/// C1=(0.01*L)^2, C2=(0.03*L)^2 with channel dynamic range L=1.
/// Rejects images smaller than the window.
double ssim_uv(const ImageF& a, const ImageF& b);

struct ImageMetrics {
    std::string id;
    double fbd = -1.0;      // negative = not applicable
    double psnr_uv = -1.0;
    double ssim_uv = -2.0;  // SSIM lives in [-1,1]
};

struct MetricReport {
    std::vector<ImageMetrics> per_image;
    double mean_fbd = -1.0;
    double mean_psnr_uv = -1.0;
    double mean_ssim_uv = -2.0;
};

MetricReport aggregate(std::vector<ImageMetrics> per_image);

void write_report_csv(const std::string& path, const MetricReport& report);
void write_report_json(const std::string& path, const MetricReport& report);

}  // namespace leafseg::metrics
