#include "leafseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "leafseg/colorspace.hpp"

namespace leafseg::metrics {

namespace {

// U and V planes of an RGB image.
void uv_planes(const ImageF& img, std::vector<float>& u, std::vector<float>& v) {
    const size_t n = img.pixels();
    u.resize(n);
    v.resize(n);
    for (size_t i = 0; i < n; ++i) {
        const float* p = img.data.data() + i * img.channels;
        float y, uu, vv;
        color::rgb_to_yuv(p[0], p[1], p[2], y, uu, vv);
        u[i] = uu;
        v[i] = vv;
    }
}

constexpr int kWin = 11;
constexpr double kC1 = 0.01 * 0.01;  // (0.01 * L)^2, L = 1
constexpr double kC2 = 0.03 * 0.03;

std::vector<double> gaussian_window() {
    std::vector<double> w(kWin * kWin);
    const double sigma = 1.5;
    double sum = 0.0;
    for (int y = 0; y < kWin; ++y)
        for (int x = 0; x < kWin; ++x) {
            double dy = y - kWin / 2, dx = x - kWin / 2;
            w[static_cast<size_t>(y) * kWin + x] = std::exp(-(dy * dy + dx * dx) / (2 * sigma * sigma));
            sum += w[static_cast<size_t>(y) * kWin + x];
        }
    for (double& v : w) v /= sum;
    return w;
}

// Mean SSIM of one channel over all valid (fully inside) window positions.
double ssim_channel(const std::vector<float>& a, const std::vector<float>& b, int h, int w) {
    static const std::vector<double> win = gaussian_window();
    double total = 0.0;
    int64_t count = 0;
    for (int y = 0; y + kWin <= h; ++y) {
        for (int x = 0; x + kWin <= w; ++x) {
            double mu_a = 0.0, mu_b = 0.0;
            for (int wy = 0; wy < kWin; ++wy)
                for (int wx = 0; wx < kWin; ++wx) {
                    const double g = win[static_cast<size_t>(wy) * kWin + wx];
                    const size_t i = static_cast<size_t>(y + wy) * w + (x + wx);
                    mu_a += g * a[i];
                    mu_b += g * b[i];
                }
            double var_a = 0.0, var_b = 0.0, cov = 0.0;
            for (int wy = 0; wy < kWin; ++wy)
                for (int wx = 0; wx < kWin; ++wx) {
                    const double g = win[static_cast<size_t>(wy) * kWin + wx];
                    const size_t i = static_cast<size_t>(y + wy) * w + (x + wx);
                    const double da = a[i] - mu_a, db = b[i] - mu_b;
                    var_a += g * da * da;
                    var_b += g * db * db;
                    cov += g * da * db;
                }
            total += ((2 * mu_a * mu_b + kC1) * (2 * cov + kC2)) /
                     ((mu_a * mu_a + mu_b * mu_b + kC1) * (var_a + var_b + kC2));
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

}  // namespace

double dice(const MaskPair& pair) {
    if (pair.predicted.size() != pair.truth.size())
        throw std::invalid_argument("fbd: mask shape mismatch");
    int64_t tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < pair.predicted.size(); ++i) {
        const bool p = pair.predicted[i] != 0, t = pair.truth[i] != 0;
        tp += p && t;
        fp += p && !t;
        fn += !p && t;
    }
    if (tp == 0 && fp == 0 && fn == 0) return 1.0;  // empty truth, empty prediction
    return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

double fbd(const std::vector<MaskPair>& pairs) {
    if (pairs.empty()) throw std::invalid_argument("fbd: empty mask list");
    double s = 0.0;
    for (const auto& p : pairs) s += dice(p);
    return s / static_cast<double>(pairs.size());
}

double psnr_uv(const ImageF& a, const ImageF& b) {
    if (a.height != b.height || a.width != b.width)
        throw std::invalid_argument("psnr_uv: image shape mismatch");
    std::vector<float> ua, va, ub, vb;
    uv_planes(a, ua, va);
    uv_planes(b, ub, vb);
    double se = 0.0;
    for (size_t i = 0; i < ua.size(); ++i) {
        const double du = static_cast<double>(ua[i]) - ub[i];
        const double dv = static_cast<double>(va[i]) - vb[i];
        se += du * du + dv * dv;
    }
    const double mse = se / (2.0 * static_cast<double>(ua.size()));
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);  // peak = full chroma range = 1
}

double ssim_uv(const ImageF& a, const ImageF& b) {
    if (a.height != b.height || a.width != b.width)
        throw std::invalid_argument("ssim_uv: image shape mismatch");
    if (a.height < kWin || a.width < kWin)
        throw std::invalid_argument("ssim_uv: images must be at least 11x11");
    std::vector<float> ua, va, ub, vb;
    uv_planes(a, ua, va);
    uv_planes(b, ub, vb);
    const double su = ssim_channel(ua, ub, a.height, a.width);
    const double sv = ssim_channel(va, vb, a.height, a.width);
    return 0.5 * (su + sv);
}

MetricReport aggregate(std::vector<ImageMetrics> per_image) {
    MetricReport r;
    r.per_image = std::move(per_image);
    double sf = 0.0, sp = 0.0, ss = 0.0;
    int nf = 0, np = 0, ns = 0;
    for (const auto& m : r.per_image) {
        if (m.fbd >= 0.0) {
            sf += m.fbd;
            ++nf;
        }
        if (m.psnr_uv >= 0.0) {
            sp += std::min(m.psnr_uv, kPsnrTextCap);
            ++np;
        }
        if (m.ssim_uv >= -1.0) {
            ss += m.ssim_uv;
            ++ns;
        }
    }
    if (nf) r.mean_fbd = sf / nf;
    if (np) r.mean_psnr_uv = sp / np;
    if (ns) r.mean_ssim_uv = ss / ns;
    return r;
}

void write_report_csv(const std::string& path, const MetricReport& report) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("metrics: cannot write " + path);
    os << "image_id,fbd,psnr_uv,ssim_uv\n";
    for (const auto& m : report.per_image) {
        os << m.id << ",";
        if (m.fbd >= 0.0) os << m.fbd;
        os << ",";
        if (m.psnr_uv >= 0.0) os << std::min(m.psnr_uv, kPsnrTextCap);
        os << ",";
        if (m.ssim_uv >= -1.0) os << m.ssim_uv;
        os << "\n";
    }
}

void write_report_json(const std::string& path, const MetricReport& report) {
    nlohmann::json j;
    if (report.mean_fbd >= 0.0) j["fbd"] = report.mean_fbd;
    if (report.mean_psnr_uv >= 0.0) j["psnr_uv"] = report.mean_psnr_uv;
    if (report.mean_ssim_uv >= -1.0) j["ssim_uv"] = report.mean_ssim_uv;
    j["num_images"] = report.per_image.size();
    auto arr = nlohmann::json::array();
    for (const auto& m : report.per_image) {
        nlohmann::json e;
        e["image_id"] = m.id;
        if (m.fbd >= 0.0) e["fbd"] = m.fbd;
        if (m.psnr_uv >= 0.0) e["psnr_uv"] = std::min(m.psnr_uv, kPsnrTextCap);
        if (m.ssim_uv >= -1.0) e["ssim_uv"] = m.ssim_uv;
        arr.push_back(e);
    }
    j["per_image"] = arr;
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("metrics: cannot write " + path);
    os << j.dump(2) << "\n";
}

}  // namespace leafseg::metrics
