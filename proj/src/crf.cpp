#include "leafseg/crf.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <stdexcept>

#include "leafseg/ops.hpp"

namespace leafseg::crf {

namespace {

std::atomic<uint64_t> g_renormalized{0};

using Impl = std::shared_ptr<ad::TensorImpl>;

// q_out[p,:] = sum_o w[p,o] * q[p+off_o,:]. The kernel is symmetric in
// (i,j) and the offset set is symmetric under negation, so the operator is
// self-adjoint and the backward pass is the same gather applied to the
// output gradient.
void gather_apply(const BilateralWindow& win, int k, const float* q, float* out) {
    const int h = win.height, w = win.width;
    const int noff = static_cast<int>(win.offsets.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int p = y * w + x;
            float* acc = out + static_cast<size_t>(p) * k;
            for (int c = 0; c < k; ++c) acc[c] = 0.0f;
            const float* wrow = win.weights.data() + static_cast<size_t>(p) * noff;
            for (int o = 0; o < noff; ++o) {
                const float wv = wrow[o];
                if (wv == 0.0f) continue;
                const int q_index = p + win.offsets[static_cast<size_t>(o)].first * w +
                                    win.offsets[static_cast<size_t>(o)].second;
                const float* src = q + static_cast<size_t>(q_index) * k;
                for (int c = 0; c < k; ++c) acc[c] += wv * src[c];
            }
        }
    }
}

ad::Tensor bilateral_gather(const ad::Tensor& q, std::shared_ptr<const BilateralWindow> win,
                            ad::Tape* tape) {
    const int k = q.dim(2);
    ad::Tensor out(q.shape());
    gather_apply(*win, k, q.data(), out.data());
    if (ad::track(tape, {&q})) {
        out.set_requires_grad(true);
        Impl qi = q.impl(), oi = out.impl();
        tape->record([qi, oi, win, k] {
            if (oi->grad.empty()) return;
            if (qi->grad.empty()) qi->grad.assign(qi->data.size(), 0.0f);
            std::vector<float> tmp(qi->data.size());
            gather_apply(*win, k, oi->grad.data(), tmp.data());
            for (size_t i = 0; i < tmp.size(); ++i) qi->grad[i] += tmp[i];
        });
    }
    return out;
}

// Potts compatibility transform: out[p,l] = sum_{l' != l} in[p,l'].
ad::Tensor potts_compat(const ad::Tensor& in, ad::Tape* tape) {
    const int p = in.dim(0) * in.dim(1);
    const int k = in.dim(2);
    ad::Tensor out(in.shape());
    const float* xd = in.data();
    float* od = out.data();
    for (int i = 0; i < p; ++i) {
        const float* xr = xd + static_cast<size_t>(i) * k;
        float* orow = od + static_cast<size_t>(i) * k;
        double s = 0.0;
        for (int c = 0; c < k; ++c) s += xr[c];
        for (int c = 0; c < k; ++c) orow[c] = static_cast<float>(s - xr[c]);
    }
    if (ad::track(tape, {&in})) {
        out.set_requires_grad(true);
        Impl xi = in.impl(), oi = out.impl();
        tape->record([xi, oi, p, k] {
            if (oi->grad.empty()) return;
            if (xi->grad.empty()) xi->grad.assign(xi->data.size(), 0.0f);
            const float* go = oi->grad.data();
            float* gx = xi->grad.data();
            for (int i = 0; i < p; ++i) {
                const float* gr = go + static_cast<size_t>(i) * k;
                float* gxr = gx + static_cast<size_t>(i) * k;
                double s = 0.0;
                for (int c = 0; c < k; ++c) s += gr[c];
                for (int c = 0; c < k; ++c) gxr[c] += static_cast<float>(s - gr[c]);
            }
        });
    }
    return out;
}

}  // namespace

void CrfParams::validate() const {
    if (eta < 0.0f) throw std::invalid_argument("crf: eta must be >= 0");
    if (sigma_alpha <= 0.0f || sigma_beta <= 0.0f)
        throw std::invalid_argument("crf: bandwidths must be > 0");
    if (window < 3 || window % 2 == 0)
        throw std::invalid_argument("crf: window must be odd and >= 3");
    if (mf_iters < 1) throw std::invalid_argument("crf: mf_iters must be >= 1");
}

float appearance_kernel(int yi, int xi, int yj, int xj, const float* rgb_i, const float* rgb_j,
                        const CrfParams& params) {
    const int radius = (params.window - 1) / 2;
    if (std::abs(yi - yj) + std::abs(xi - xj) > radius) return 0.0f;
    const double dy = yi - yj, dx = xi - xj;
    double spatial = (dy * dy + dx * dx) / (2.0 * params.sigma_alpha * params.sigma_alpha);
    double col = 0.0;
    for (int c = 0; c < 3; ++c) {
        double d = static_cast<double>(rgb_i[c]) - rgb_j[c];
        col += d * d;
    }
    col /= 2.0 * params.sigma_beta * params.sigma_beta;
    return static_cast<float>(std::exp(-spatial - col));
}

BilateralWindow BilateralWindow::build(const ImageF& rgb, const CrfParams& params) {
    params.validate();
    if (rgb.channels != 3) throw std::invalid_argument("crf: expected RGB image");
    BilateralWindow win;
    win.height = rgb.height;
    win.width = rgb.width;
    const int radius = (params.window - 1) / 2;
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx) {
            if (dy == 0 && dx == 0) continue;  // i != j
            if (std::abs(dy) + std::abs(dx) > radius) continue;
            win.offsets.emplace_back(dy, dx);
        }
    const int noff = static_cast<int>(win.offsets.size());
    win.weights.assign(rgb.pixels() * static_cast<size_t>(noff), 0.0f);
    const double inv2sa = 1.0 / (2.0 * params.sigma_alpha * params.sigma_alpha);
    const double inv2sb = 1.0 / (2.0 * params.sigma_beta * params.sigma_beta);
    for (int y = 0; y < rgb.height; ++y) {
        for (int x = 0; x < rgb.width; ++x) {
            const float* ci = rgb.px(y, x);
            float* wrow = win.weights.data() +
                          (static_cast<size_t>(y) * rgb.width + x) * noff;
            for (int o = 0; o < noff; ++o) {
                const int yy = y + win.offsets[static_cast<size_t>(o)].first;
                const int xx = x + win.offsets[static_cast<size_t>(o)].second;
                if (yy < 0 || yy >= rgb.height || xx < 0 || xx >= rgb.width) continue;
                const float* cj = rgb.px(yy, xx);
                const double dy = win.offsets[static_cast<size_t>(o)].first;
                const double dx = win.offsets[static_cast<size_t>(o)].second;
                double col = 0.0;
                for (int c = 0; c < 3; ++c) {
                    double d = static_cast<double>(ci[c]) - cj[c];
                    col += d * d;
                }
                // eta folded in here; message passing is then a plain gather
                wrow[o] = params.eta * static_cast<float>(std::exp(
                                           -(dy * dy + dx * dx) * inv2sa - col * inv2sb));
            }
        }
    }
    return win;
}

std::vector<int32_t> argmax_labels(const ad::Tensor& probs) {
    const int p = probs.dim(0) * probs.dim(1);
    const int k = probs.dim(2);
    std::vector<int32_t> labels(static_cast<size_t>(p));
    const float* q = probs.data();
    for (int i = 0; i < p; ++i) {
        const float* row = q + static_cast<size_t>(i) * k;
        int best = 0;
        for (int c = 1; c < k; ++c)
            if (row[c] > row[best]) best = c;
        labels[static_cast<size_t>(i)] = best;
    }
    return labels;
}

namespace {
LabelField meanfield_impl(const LabelField& field, std::shared_ptr<const BilateralWindow> window,
                          const CrfParams& params, ad::Tape* tape);
}

LabelField meanfield_refine(const LabelField& field, const ImageF& rgb, const CrfParams& params,
                            ad::Tape* tape) {
    auto win = std::make_shared<BilateralWindow>(BilateralWindow::build(rgb, params));
    return meanfield_impl(field, std::move(win), params, tape);
}

LabelField meanfield_refine(const LabelField& field, const BilateralWindow& window,
                            const CrfParams& params, ad::Tape* tape) {
    // Caller keeps `window` alive for the tape's lifetime (the segmenter
    // builds it once per image and clears the tape every iteration).
    return meanfield_impl(field,
                          std::shared_ptr<const BilateralWindow>(&window, [](auto*) {}), params,
                          tape);
}

namespace {
LabelField meanfield_impl(const LabelField& field, std::shared_ptr<const BilateralWindow> window,
                          const CrfParams& params, ad::Tape* tape) {
    params.validate();
    ad::Tensor z = field.unary;
    if (!z.defined() || z.rank() != 3)
        throw std::invalid_argument("crf: unary field must be H x W x K");
    if (z.dim(0) != window->height || z.dim(1) != window->width)
        throw std::invalid_argument("crf: unary field does not match window dims");

    // Re-normalize defective inputs (diagnostic, not an error).
    {
        const int p = z.dim(0) * z.dim(1), k = z.dim(2);
        const float* q = z.data();
        bool bad = false;
        for (int i = 0; i < p && !bad; ++i) {
            double s = 0.0;
            for (int c = 0; c < k; ++c) s += q[static_cast<size_t>(i) * k + c];
            if (std::fabs(s - 1.0) > 1e-4) bad = true;
        }
        if (bad) {
            g_renormalized.fetch_add(1, std::memory_order_relaxed);
            ad::Tensor fixed = z.detached_copy();
            float* qd = fixed.data();
            for (int i = 0; i < p; ++i) {
                double s = 0.0;
                for (int c = 0; c < k; ++c) s += qd[static_cast<size_t>(i) * k + c];
                float inv = s > 0.0 ? static_cast<float>(1.0 / s) : 0.0f;
                for (int c = 0; c < k; ++c) qd[static_cast<size_t>(i) * k + c] *= inv;
            }
            fixed.set_requires_grad(z.requires_grad());
            z = fixed;
        }
    }

    ad::Tensor log_z = ad::log_clamped(z, 1e-12f, tape);
    ad::Tensor q = z;
    for (int it = 0; it < params.mf_iters; ++it) {
        ad::Tensor msg = bilateral_gather(q, window, tape);     // message passing (eta folded)
        ad::Tensor compat = potts_compat(msg, tape);            // Potts compatibility transform
        ad::Tensor combined = ad::sub(log_z, compat, tape);     // unary minus pairwise cost
        q = ad::channel_softmax(combined, tape);
    }

    LabelField out;
    out.probs = q;
    out.unary = field.unary;
    out.labels = argmax_labels(q);
    return out;
}
}  // namespace

double gibbs_energy(const std::vector<int32_t>& labels, const ad::Tensor& unary,
                    const ImageF& rgb, const CrfParams& params) {
    params.validate();
    const int h = unary.dim(0), w = unary.dim(1), k = unary.dim(2);
    if (static_cast<int>(labels.size()) != h * w)
        throw std::invalid_argument("gibbs_energy: labeling size mismatch");
    const float* z = unary.data();
    double energy = 0.0;
    for (int i = 0; i < h * w; ++i) {
        float v = z[static_cast<size_t>(i) * k + labels[static_cast<size_t>(i)]];
        energy -= std::log(static_cast<double>(v < 1e-12f ? 1e-12f : v));
    }
    const int radius = (params.window - 1) / 2;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int32_t li = labels[static_cast<size_t>(y) * w + x];
            for (int dy = -radius; dy <= radius; ++dy) {
                for (int dx = -radius; dx <= radius; ++dx) {
                    if (dy == 0 && dx == 0) continue;
                    if (std::abs(dy) + std::abs(dx) > radius) continue;
                    const int yy = y + dy, xx = x + dx;
                    if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                    const int32_t lj = labels[static_cast<size_t>(yy) * w + xx];
                    if (potts(li, lj) == 0) continue;
                    energy += params.eta *
                              appearance_kernel(y, x, yy, xx, rgb.px(y, x), rgb.px(yy, xx), params);
                }
            }
        }
    }
    return energy;
}

uint64_t renormalize_count() { return g_renormalized.load(std::memory_order_relaxed); }
void reset_renormalize_count() { g_renormalized.store(0, std::memory_order_relaxed); }

}  // namespace leafseg::crf
