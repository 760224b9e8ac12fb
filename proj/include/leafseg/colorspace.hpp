#pragma once

#include <cstdint>

namespace leafseg::color {

enum class Space { RGB, HSV, HSL, LAB, YUV };

struct ColorPixel {
    float c0 = 0.0f, c1 = 0.0f, c2 = 0.0f;
    Space space = Space::RGB;
};

// Channel conventions:
//   RGB/HSV/HSL channels in [0,1], hue normalized to [0,1) with achromatic
//   pixels at hue 0. L* in [0,100], a*/b* roughly [-128,127] (D65, sRGB
//   companding). YUV uses BT.601 luma with chroma scaled to [-0.5,0.5],
//   i.e. U=(B-Y)/1.772, V=(R-Y)/1.402.
// Inputs outside their range are clamped and counted; see clamp_count().

void rgb_to_hsv(float r, float g, float b, float& h, float& s, float& v);
void hsv_to_rgb(float h, float s, float v, float& r, float& g, float& b);

void rgb_to_hsl(float r, float g, float b, float& h, float& s, float& l);
void hsl_to_rgb(float h, float s, float l, float& r, float& g, float& b);

void rgb_to_lab(float r, float g, float b, float& L, float& a, float& bb);
/// Out-of-gamut results are clipped to [0,1].
void lab_to_rgb(float L, float a, float bb, float& r, float& g, float& b);

void rgb_to_yuv(float r, float g, float b, float& y, float& u, float& v);

ColorPixel rgb_to_hsv(const ColorPixel& p);
ColorPixel hsv_to_rgb(const ColorPixel& p);
ColorPixel rgb_to_hsl(const ColorPixel& p);
ColorPixel hsl_to_rgb(const ColorPixel& p);
ColorPixel rgb_to_lab(const ColorPixel& p);
ColorPixel lab_to_rgb(const ColorPixel& p);
ColorPixel rgb_to_yuv(const ColorPixel& p);

/// Number of out-of-range inputs clamped since the last reset.
uint64_t clamp_count();
void reset_clamp_count();

}  // namespace leafseg::color
