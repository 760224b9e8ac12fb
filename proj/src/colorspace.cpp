#include "leafseg/colorspace.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

namespace leafseg::color {

namespace {

std::atomic<uint64_t> g_clamped{0};

double clamp_unit(double v) {
    if (v < 0.0 || v > 1.0) {
        if (v < -1e-6 || v > 1.0 + 1e-6) g_clamped.fetch_add(1, std::memory_order_relaxed);
        return std::min(std::max(v, 0.0), 1.0);
    }
    return v;
}

double wrap_hue(double h) {
    h -= std::floor(h);
    if (h >= 1.0) h = 0.0;
    return h;
}

// sRGB companding
double srgb_to_linear(double s) {
    return s <= 0.04045 ? s / 12.92 : std::pow((s + 0.055) / 1.055, 2.4);
}

double linear_to_srgb(double l) {
    return l <= 0.0031308 ? 12.92 * l : 1.055 * std::pow(l, 1.0 / 2.4) - 0.055;
}

constexpr double kXn = 0.95047, kYn = 1.0, kZn = 1.08883;  // D65

double lab_f(double t) {
    constexpr double d3 = (6.0 / 29.0) * (6.0 / 29.0) * (6.0 / 29.0);
    constexpr double k = 1.0 / (3.0 * (6.0 / 29.0) * (6.0 / 29.0));
    return t > d3 ? std::cbrt(t) : k * t + 4.0 / 29.0;
}

double lab_finv(double t) {
    constexpr double d = 6.0 / 29.0;
    return t > d ? t * t * t : 3.0 * d * d * (t - 4.0 / 29.0);
}

}  // namespace

void rgb_to_hsv(float r, float g, float b, float& h, float& s, float& v) {
    double rd = clamp_unit(r), gd = clamp_unit(g), bd = clamp_unit(b);
    double mx = std::max({rd, gd, bd});
    double mn = std::min({rd, gd, bd});
    double delta = mx - mn;
    double hue = 0.0;
    if (delta > 0.0) {
        if (mx == rd)
            hue = (gd - bd) / delta;
        else if (mx == gd)
            hue = 2.0 + (bd - rd) / delta;
        else
            hue = 4.0 + (rd - gd) / delta;
        hue = wrap_hue(hue / 6.0);
    }
    h = static_cast<float>(hue);
    s = static_cast<float>(mx > 0.0 ? delta / mx : 0.0);
    v = static_cast<float>(mx);
}

void hsv_to_rgb(float h, float s, float v, float& r, float& g, float& b) {
    double hd = wrap_hue(h);
    double sd = clamp_unit(s), vd = clamp_unit(v);
    double h6 = hd * 6.0;
    int i = static_cast<int>(h6) % 6;
    double f = h6 - std::floor(h6);
    double p = vd * (1.0 - sd);
    double q = vd * (1.0 - sd * f);
    double t = vd * (1.0 - sd * (1.0 - f));
    double rd, gd, bd;
    switch (i) {
        case 0: rd = vd; gd = t; bd = p; break;
        case 1: rd = q; gd = vd; bd = p; break;
        case 2: rd = p; gd = vd; bd = t; break;
        case 3: rd = p; gd = q; bd = vd; break;
        case 4: rd = t; gd = p; bd = vd; break;
        default: rd = vd; gd = p; bd = q; break;
    }
    r = static_cast<float>(rd);
    g = static_cast<float>(gd);
    b = static_cast<float>(bd);
}

void rgb_to_hsl(float r, float g, float b, float& h, float& s, float& l) {
    double rd = clamp_unit(r), gd = clamp_unit(g), bd = clamp_unit(b);
    double mx = std::max({rd, gd, bd});
    double mn = std::min({rd, gd, bd});
    double delta = mx - mn;
    double light = (mx + mn) / 2.0;
    double hue = 0.0, sat = 0.0;
    if (delta > 0.0) {
        sat = delta / (1.0 - std::fabs(2.0 * light - 1.0));
        if (mx == rd)
            hue = (gd - bd) / delta;
        else if (mx == gd)
            hue = 2.0 + (bd - rd) / delta;
        else
            hue = 4.0 + (rd - gd) / delta;
        hue = wrap_hue(hue / 6.0);
    }
    h = static_cast<float>(hue);
    s = static_cast<float>(sat);
    l = static_cast<float>(light);
}

void hsl_to_rgb(float h, float s, float l, float& r, float& g, float& b) {
    double hd = wrap_hue(h);
    double sd = clamp_unit(s), ld = clamp_unit(l);
    double c = (1.0 - std::fabs(2.0 * ld - 1.0)) * sd;
    double h6 = hd * 6.0;
    double x = c * (1.0 - std::fabs(std::fmod(h6, 2.0) - 1.0));
    double m = ld - c / 2.0;
    double rd, gd, bd;
    switch (static_cast<int>(h6) % 6) {
        case 0: rd = c; gd = x; bd = 0; break;
        case 1: rd = x; gd = c; bd = 0; break;
        case 2: rd = 0; gd = c; bd = x; break;
        case 3: rd = 0; gd = x; bd = c; break;
        case 4: rd = x; gd = 0; bd = c; break;
        default: rd = c; gd = 0; bd = x; break;
    }
    r = static_cast<float>(rd + m);
    g = static_cast<float>(gd + m);
    b = static_cast<float>(bd + m);
}

void rgb_to_lab(float r, float g, float b, float& L, float& a, float& bb) {
    double rl = srgb_to_linear(clamp_unit(r));
    double gl = srgb_to_linear(clamp_unit(g));
    double bl = srgb_to_linear(clamp_unit(b));
    double x = 0.4124564 * rl + 0.3575761 * gl + 0.1804375 * bl;
    double y = 0.2126729 * rl + 0.7151522 * gl + 0.0721750 * bl;
    double z = 0.0193339 * rl + 0.1191920 * gl + 0.9503041 * bl;
    double fx = lab_f(x / kXn), fy = lab_f(y / kYn), fz = lab_f(z / kZn);
    L = static_cast<float>(116.0 * fy - 16.0);
    a = static_cast<float>(500.0 * (fx - fy));
    bb = static_cast<float>(200.0 * (fy - fz));
}

void lab_to_rgb(float L, float a, float bb, float& r, float& g, float& b) {
    double Ld = L;
    if (Ld < 0.0 || Ld > 100.0) {
        g_clamped.fetch_add(1, std::memory_order_relaxed);
        Ld = std::min(std::max(Ld, 0.0), 100.0);
    }
    double fy = (Ld + 16.0) / 116.0;
    double fx = fy + a / 500.0;
    double fz = fy - bb / 200.0;
    double x = kXn * lab_finv(fx);
    double y = kYn * lab_finv(fy);
    double z = kZn * lab_finv(fz);
    double rl = 3.2404542 * x - 1.5371385 * y - 0.4985314 * z;
    double gl = -0.9692660 * x + 1.8760108 * y + 0.0415560 * z;
    double bl = 0.0556434 * x - 0.2040259 * y + 1.0572252 * z;
    // gamut clip
    r = static_cast<float>(std::min(std::max(linear_to_srgb(std::max(rl, 0.0)), 0.0), 1.0));
    g = static_cast<float>(std::min(std::max(linear_to_srgb(std::max(gl, 0.0)), 0.0), 1.0));
    b = static_cast<float>(std::min(std::max(linear_to_srgb(std::max(bl, 0.0)), 0.0), 1.0));
}

void rgb_to_yuv(float r, float g, float b, float& y, float& u, float& v) {
    double rd = clamp_unit(r), gd = clamp_unit(g), bd = clamp_unit(b);
    double yd = 0.299 * rd + 0.587 * gd + 0.114 * bd;
    y = static_cast<float>(yd);
    u = static_cast<float>((bd - yd) / 1.772);
    v = static_cast<float>((rd - yd) / 1.402);
}

namespace {
template <typename Fn>
ColorPixel apply(const ColorPixel& p, Space to, Fn fn) {
    ColorPixel out;
    fn(p.c0, p.c1, p.c2, out.c0, out.c1, out.c2);
    out.space = to;
    return out;
}
}  // namespace

ColorPixel rgb_to_hsv(const ColorPixel& p) {
    return apply(p, Space::HSV, [](float a, float b, float c, float& x, float& y, float& z) {
        rgb_to_hsv(a, b, c, x, y, z);
    });
}
ColorPixel hsv_to_rgb(const ColorPixel& p) {
    return apply(p, Space::RGB, [](float a, float b, float c, float& x, float& y, float& z) {
        hsv_to_rgb(a, b, c, x, y, z);
    });
}
ColorPixel rgb_to_hsl(const ColorPixel& p) {
    return apply(p, Space::HSL, [](float a, float b, float c, float& x, float& y, float& z) {
        rgb_to_hsl(a, b, c, x, y, z);
    });
}
ColorPixel hsl_to_rgb(const ColorPixel& p) {
    return apply(p, Space::RGB, [](float a, float b, float c, float& x, float& y, float& z) {
        hsl_to_rgb(a, b, c, x, y, z);
    });
}
ColorPixel rgb_to_lab(const ColorPixel& p) {
    return apply(p, Space::LAB, [](float a, float b, float c, float& x, float& y, float& z) {
        rgb_to_lab(a, b, c, x, y, z);
    });
}
ColorPixel lab_to_rgb(const ColorPixel& p) {
    return apply(p, Space::RGB, [](float a, float b, float c, float& x, float& y, float& z) {
        lab_to_rgb(a, b, c, x, y, z);
    });
}
ColorPixel rgb_to_yuv(const ColorPixel& p) {
    return apply(p, Space::YUV, [](float a, float b, float c, float& x, float& y, float& z) {
        rgb_to_yuv(a, b, c, x, y, z);
    });
}

uint64_t clamp_count() { return g_clamped.load(std::memory_order_relaxed); }
void reset_clamp_count() { g_clamped.store(0, std::memory_order_relaxed); }

}  // namespace leafseg::color
