#include "leafseg/ops.hpp"

#include <cblas.h>

#include <cfloat>
#include <cmath>
#include <cstring>
#include <stdexcept>

extern "C" void openblas_set_num_threads(int);

namespace leafseg::ad {

namespace {

void blas_init() {
    static bool done = [] {
        openblas_set_num_threads(1);  // keeps GEMM deterministic
        return true;
    }();
    (void)done;
}

// C[MxN] (+)= op(A) * op(B); row-major.
void sgemm(bool ta, bool tb, int m, int n, int k, const float* a, int lda, const float* b,
           int ldb, float beta, float* c, int ldc) {
    blas_init();
    cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans,
                m, n, k, 1.0f, a, lda, b, ldb, beta, c, ldc);
}

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

void require_image(const Tensor& t, const char* what) {
    require(t.defined() && t.rank() == 3, std::string(what) + ": expected H x W x C tensor");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    require(a.shape() == b.shape(), std::string(what) + ": shape mismatch " +
                                        shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

using Impl = std::shared_ptr<TensorImpl>;

// Elementwise unary op: ValFn float->float, GradFn (x, y, g)->dx.
template <typename ValFn, typename GradFn>
Tensor unary_op(const Tensor& x, Tape* tape, ValFn val, GradFn dgrad) {
    Tensor out(x.shape());
    const float* xd = x.data();
    float* od = out.data();
    size_t n = x.size();
    for (size_t i = 0; i < n; ++i) od[i] = val(xd[i]);
    if (track(tape, {&x})) {
        out.set_requires_grad(true);
        Impl xi = x.impl(), oi = out.impl();
        tape->record([xi, oi, dgrad] {
            if (oi->grad.empty()) return;
            if (xi->grad.empty()) xi->grad.assign(xi->data.size(), 0.0f);
            size_t n = xi->data.size();
            for (size_t i = 0; i < n; ++i)
                xi->grad[i] += dgrad(xi->data[i], oi->data[i], oi->grad[i]);
        });
    }
    return out;
}

// im2col for k x k x Ci kernels: one row of length k*k*Ci per output pixel,
// entries ordered (ky, kx, ci) to match the kernel's natural reshape.
void im2col(const float* in, int h, int w, int ci, int k, int stride, int pad, int oh, int ow,
            std::vector<float>& col) {
    col.assign(static_cast<size_t>(oh) * ow * k * k * ci, 0.0f);
    const size_t row_len = static_cast<size_t>(k) * k * ci;
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            float* row = col.data() + (static_cast<size_t>(oy) * ow + ox) * row_len;
            for (int ky = 0; ky < k; ++ky) {
                int iy = oy * stride - pad + ky;
                if (iy < 0 || iy >= h) continue;
                for (int kx = 0; kx < k; ++kx) {
                    int ix = ox * stride - pad + kx;
                    if (ix < 0 || ix >= w) continue;
                    std::memcpy(row + (static_cast<size_t>(ky) * k + kx) * ci,
                                in + (static_cast<size_t>(iy) * w + ix) * ci,
                                static_cast<size_t>(ci) * sizeof(float));
                }
            }
        }
    }
}

// Transpose of im2col: scatter-add column gradients back onto the input grid.
void col2im_add(const float* col, int h, int w, int ci, int k, int stride, int pad, int oh,
                int ow, float* gin) {
    const size_t row_len = static_cast<size_t>(k) * k * ci;
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            const float* row = col + (static_cast<size_t>(oy) * ow + ox) * row_len;
            for (int ky = 0; ky < k; ++ky) {
                int iy = oy * stride - pad + ky;
                if (iy < 0 || iy >= h) continue;
                for (int kx = 0; kx < k; ++kx) {
                    int ix = ox * stride - pad + kx;
                    if (ix < 0 || ix >= w) continue;
                    const float* src = row + (static_cast<size_t>(ky) * k + kx) * ci;
                    float* dst = gin + (static_cast<size_t>(iy) * w + ix) * ci;
                    for (int c = 0; c < ci; ++c) dst[c] += src[c];
                }
            }
        }
    }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b, Tape* tape) {
    require_same_shape(a, b, "add");
    Tensor out(a.shape());
    const float* ad = a.data();
    const float* bd = b.data();
    float* od = out.data();
    for (size_t i = 0; i < out.size(); ++i) od[i] = ad[i] + bd[i];
    if (track(tape, {&a, &b})) {
        out.set_requires_grad(true);
        Impl ai = a.impl(), bi = b.impl(), oi = out.impl();
        tape->record([ai, bi, oi] {
            if (oi->grad.empty()) return;
            size_t n = oi->grad.size();
            if (ai->requires_grad) {
                if (ai->grad.empty()) ai->grad.assign(n, 0.0f);
                for (size_t i = 0; i < n; ++i) ai->grad[i] += oi->grad[i];
            }
            if (bi->requires_grad) {
                if (bi->grad.empty()) bi->grad.assign(n, 0.0f);
                for (size_t i = 0; i < n; ++i) bi->grad[i] += oi->grad[i];
            }
        });
    }
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b, Tape* tape) {
    require_same_shape(a, b, "sub");
    Tensor out(a.shape());
    const float* ad = a.data();
    const float* bd = b.data();
    float* od = out.data();
    for (size_t i = 0; i < out.size(); ++i) od[i] = ad[i] - bd[i];
    if (track(tape, {&a, &b})) {
        out.set_requires_grad(true);
        Impl ai = a.impl(), bi = b.impl(), oi = out.impl();
        tape->record([ai, bi, oi] {
            if (oi->grad.empty()) return;
            size_t n = oi->grad.size();
            if (ai->requires_grad) {
                if (ai->grad.empty()) ai->grad.assign(n, 0.0f);
                for (size_t i = 0; i < n; ++i) ai->grad[i] += oi->grad[i];
            }
            if (bi->requires_grad) {
                if (bi->grad.empty()) bi->grad.assign(n, 0.0f);
                for (size_t i = 0; i < n; ++i) bi->grad[i] -= oi->grad[i];
            }
        });
    }
    return out;
}

Tensor scale(const Tensor& x, float c, Tape* tape) {
    return unary_op(
        x, tape, [c](float v) { return c * v; },
        [c](float, float, float g) { return c * g; });
}

Tensor log_clamped(const Tensor& x, float eps, Tape* tape) {
    return unary_op(
        x, tape, [eps](float v) { return std::log(v < eps ? eps : v); },
        [eps](float v, float, float g) { return v > eps ? g / v : 0.0f; });
}

Tensor relu(const Tensor& x, Tape* tape) {
    return unary_op(
        x, tape, [](float v) { return v > 0.0f ? v : 0.0f; },
        [](float v, float, float g) { return v > 0.0f ? g : 0.0f; });
}

Tensor leaky_relu(const Tensor& x, float slope, Tape* tape) {
    return unary_op(
        x, tape, [slope](float v) { return v > 0.0f ? v : slope * v; },
        [slope](float v, float, float g) { return v > 0.0f ? g : slope * g; });
}

Tensor tanh_op(const Tensor& x, Tape* tape) {
    return unary_op(
        x, tape, [](float v) { return std::tanh(v); },
        [](float, float y, float g) { return g * (1.0f - y * y); });
}

Tensor sigmoid(const Tensor& x, Tape* tape) {
    return unary_op(
        x, tape, [](float v) { return 1.0f / (1.0f + std::exp(-v)); },
        [](float, float y, float g) { return g * y * (1.0f - y); });
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int pad, Tape* tape) {
    require_image(input, "conv2d");
    require(kernel.defined() && kernel.rank() == 4, "conv2d: kernel must be k x k x Cin x Cout");
    const int h = input.dim(0), w = input.dim(1), ci = input.dim(2);
    const int k = kernel.dim(0);
    require(kernel.dim(1) == k, "conv2d: kernel must be square");
    require(k % 2 == 1, "conv2d: kernel size must be odd");
    require(stride >= 1 && pad >= 0, "conv2d: bad stride/pad");
    require(kernel.dim(2) == ci, "conv2d: input channels " + std::to_string(ci) +
                                     " vs kernel Cin " + std::to_string(kernel.dim(2)));
    const int co = kernel.dim(3);
    const int oh = (h + 2 * pad - k) / stride + 1;
    const int ow = (w + 2 * pad - k) / stride + 1;
    require(oh >= 1 && ow >= 1, "conv2d: kernel larger than padded input");

    const int kk = k * k * ci;
    thread_local std::vector<float> col;
    im2col(input.data(), h, w, ci, k, stride, pad, oh, ow, col);

    Tensor out(Shape{oh, ow, co});
    sgemm(false, false, oh * ow, co, kk, col.data(), kk, kernel.data(), co, 0.0f, out.data(), co);

    if (track(tape, {&input, &kernel})) {
        out.set_requires_grad(true);
        Impl ii = input.impl(), ki = kernel.impl(), oi = out.impl();
        tape->record([ii, ki, oi, h, w, ci, k, co, stride, pad, oh, ow, kk] {
            if (oi->grad.empty()) return;
            thread_local std::vector<float> bcol;
            if (ki->requires_grad) {
                // gW = col^T * gOut; the column matrix is recomputed rather
                // than held from the forward pass to bound peak memory.
                im2col(ii->data.data(), h, w, ci, k, stride, pad, oh, ow, bcol);
                if (ki->grad.empty()) ki->grad.assign(ki->data.size(), 0.0f);
                sgemm(true, false, kk, co, oh * ow, bcol.data(), kk, oi->grad.data(), co, 1.0f,
                      ki->grad.data(), co);
            }
            if (ii->requires_grad) {
                thread_local std::vector<float> gcol;
                gcol.assign(static_cast<size_t>(oh) * ow * kk, 0.0f);
                sgemm(false, true, oh * ow, kk, co, oi->grad.data(), co, ki->data.data(), co,
                      0.0f, gcol.data(), kk);
                if (ii->grad.empty()) ii->grad.assign(ii->data.size(), 0.0f);
                col2im_add(gcol.data(), h, w, ci, k, stride, pad, oh, ow, ii->grad.data());
            }
        });
    }
    return out;
}

namespace {
// reflect-101 fold into [0, n)
inline int reflect_idx(int p, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    p = std::abs(p) % period;
    return p < n ? p : period - p;
}
}  // namespace

// Depthwise convolution pads by reflection so that a constant field stays
// constant through the op (the embedding net's constancy and translation
// oracles depend on it).
Tensor depthwise_conv2d(const Tensor& input, const Tensor& kernel, int pad, Tape* tape) {
    require_image(input, "depthwise_conv2d");
    require(kernel.defined() && kernel.rank() == 3 && kernel.dim(0) == 3 && kernel.dim(1) == 3,
            "depthwise_conv2d: kernel must be 3 x 3 x C");
    const int h = input.dim(0), w = input.dim(1), c = input.dim(2);
    require(kernel.dim(2) == c, "depthwise_conv2d: channel count mismatch, input " +
                                    std::to_string(c) + " vs kernel " +
                                    std::to_string(kernel.dim(2)));
    require(pad >= 0, "depthwise_conv2d: bad pad");
    const int oh = h + 2 * pad - 2, ow = w + 2 * pad - 2;
    require(oh >= 1 && ow >= 1, "depthwise_conv2d: input too small");

    Tensor out(Shape{oh, ow, c});
    const float* in = input.data();
    const float* kd = kernel.data();
    float* od = out.data();
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            float* acc = od + (static_cast<size_t>(oy) * ow + ox) * c;
            for (int ky = 0; ky < 3; ++ky) {
                const int iy = reflect_idx(oy - pad + ky, h);
                for (int kx = 0; kx < 3; ++kx) {
                    const int ix = reflect_idx(ox - pad + kx, w);
                    const float* kr = kd + (static_cast<size_t>(ky) * 3 + kx) * c;
                    const float* ir = in + (static_cast<size_t>(iy) * w + ix) * c;
                    for (int ch = 0; ch < c; ++ch) acc[ch] += kr[ch] * ir[ch];
                }
            }
        }
    }

    if (track(tape, {&input, &kernel})) {
        out.set_requires_grad(true);
        Impl ii = input.impl(), ki = kernel.impl(), oi = out.impl();
        tape->record([ii, ki, oi, h, w, c, pad, oh, ow] {
            if (oi->grad.empty()) return;
            const float* go = oi->grad.data();
            if (ii->requires_grad) {
                if (ii->grad.empty()) ii->grad.assign(ii->data.size(), 0.0f);
                float* gi = ii->grad.data();
                const float* kd = ki->data.data();
                for (int oy = 0; oy < oh; ++oy) {
                    for (int ox = 0; ox < ow; ++ox) {
                        const float* gr = go + (static_cast<size_t>(oy) * ow + ox) * c;
                        for (int ky = 0; ky < 3; ++ky) {
                            const int iy = reflect_idx(oy - pad + ky, h);
                            for (int kx = 0; kx < 3; ++kx) {
                                const int ix = reflect_idx(ox - pad + kx, w);
                                const float* kr = kd + (static_cast<size_t>(ky) * 3 + kx) * c;
                                float* gd = gi + (static_cast<size_t>(iy) * w + ix) * c;
                                for (int ch = 0; ch < c; ++ch) gd[ch] += kr[ch] * gr[ch];
                            }
                        }
                    }
                }
            }
            if (ki->requires_grad) {
                if (ki->grad.empty()) ki->grad.assign(ki->data.size(), 0.0f);
                const float* in = ii->data.data();
                std::vector<double> acc(static_cast<size_t>(c));
                for (int ky = 0; ky < 3; ++ky) {
                    for (int kx = 0; kx < 3; ++kx) {
                        std::fill(acc.begin(), acc.end(), 0.0);
                        for (int oy = 0; oy < oh; ++oy) {
                            const int iy = reflect_idx(oy - pad + ky, h);
                            for (int ox = 0; ox < ow; ++ox) {
                                const int ix = reflect_idx(ox - pad + kx, w);
                                const float* gr = go + (static_cast<size_t>(oy) * ow + ox) * c;
                                const float* ir = in + (static_cast<size_t>(iy) * w + ix) * c;
                                for (int ch = 0; ch < c; ++ch)
                                    acc[ch] += static_cast<double>(gr[ch]) * ir[ch];
                            }
                        }
                        float* gk = ki->grad.data() + (static_cast<size_t>(ky) * 3 + kx) * c;
                        for (int ch = 0; ch < c; ++ch) gk[ch] += static_cast<float>(acc[ch]);
                    }
                }
            }
        });
    }
    return out;
}

Tensor pointwise_conv2d(const Tensor& input, const Tensor& weights, Tape* tape) {
    require_image(input, "pointwise_conv2d");
    require(weights.defined() && weights.rank() == 2, "pointwise_conv2d: weights must be Cin x Cout");
    const int h = input.dim(0), w = input.dim(1), ci = input.dim(2);
    require(weights.dim(0) == ci, "pointwise_conv2d: input channels " + std::to_string(ci) +
                                      " vs weights Cin " + std::to_string(weights.dim(0)));
    const int co = weights.dim(1);
    const int p = h * w;

    Tensor out(Shape{h, w, co});
    sgemm(false, false, p, co, ci, input.data(), ci, weights.data(), co, 0.0f, out.data(), co);

    if (track(tape, {&input, &weights})) {
        out.set_requires_grad(true);
        Impl ii = input.impl(), wi = weights.impl(), oi = out.impl();
        tape->record([ii, wi, oi, p, ci, co] {
            if (oi->grad.empty()) return;
            if (wi->requires_grad) {
                if (wi->grad.empty()) wi->grad.assign(wi->data.size(), 0.0f);
                sgemm(true, false, ci, co, p, ii->data.data(), ci, oi->grad.data(), co, 1.0f,
                      wi->grad.data(), co);
            }
            if (ii->requires_grad) {
                if (ii->grad.empty()) ii->grad.assign(ii->data.size(), 0.0f);
                sgemm(false, true, p, ci, co, oi->grad.data(), co, wi->data.data(), co, 1.0f,
                      ii->grad.data(), ci);
            }
        });
    }
    return out;
}

BatchNormState BatchNormState::init(int channels) {
    BatchNormState s;
    s.running_mean = Tensor(Shape{channels}, 0.0f);
    s.running_var = Tensor(Shape{channels}, 1.0f);
    return s;
}

Tensor batchnorm2d(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                   BatchNormState& state, bool training, Tape* tape) {
    require_image(input, "batchnorm2d");
    const int h = input.dim(0), w = input.dim(1), c = input.dim(2);
    require(gamma.defined() && gamma.rank() == 1 && gamma.dim(0) == c, "batchnorm2d: gamma must be [C]");
    require(beta.defined() && beta.rank() == 1 && beta.dim(0) == c, "batchnorm2d: beta must be [C]");
    const int p = h * w;
    require(!training || p >= 2, "batchnorm2d: train mode needs at least 2 spatial elements");

    // Per-channel mean/invstd actually used at this forward pass. Copied out
    // so the backward closure is immune to later running-stat updates.
    auto mean = std::make_shared<std::vector<float>>(static_cast<size_t>(c));
    auto invstd = std::make_shared<std::vector<float>>(static_cast<size_t>(c));
    const float* in = input.data();

    if (training) {
        for (int ch = 0; ch < c; ++ch) {
            double s = 0.0;
            for (int i = 0; i < p; ++i) s += in[static_cast<size_t>(i) * c + ch];
            double m = s / p;
            double v = 0.0;
            for (int i = 0; i < p; ++i) {
                double d = in[static_cast<size_t>(i) * c + ch] - m;
                v += d * d;
            }
            v /= p;
            (*mean)[ch] = static_cast<float>(m);
            (*invstd)[ch] = static_cast<float>(1.0 / std::sqrt(v + state.eps));
            float* rm = state.running_mean.data();
            float* rv = state.running_var.data();
            rm[ch] = (1.0f - state.momentum) * rm[ch] + state.momentum * static_cast<float>(m);
            rv[ch] = (1.0f - state.momentum) * rv[ch] + state.momentum * static_cast<float>(v);
        }
    } else {
        const float* rm = state.running_mean.data();
        const float* rv = state.running_var.data();
        for (int ch = 0; ch < c; ++ch) {
            (*mean)[ch] = rm[ch];
            (*invstd)[ch] = 1.0f / std::sqrt(rv[ch] + state.eps);
        }
    }

    Tensor out(input.shape());
    auto xhat = std::make_shared<std::vector<float>>(input.size());
    const float* gd = gamma.data();
    const float* bd = beta.data();
    float* od = out.data();
    for (int i = 0; i < p; ++i) {
        const float* xr = in + static_cast<size_t>(i) * c;
        float* orow = od + static_cast<size_t>(i) * c;
        float* xh = xhat->data() + static_cast<size_t>(i) * c;
        for (int ch = 0; ch < c; ++ch) {
            xh[ch] = (xr[ch] - (*mean)[ch]) * (*invstd)[ch];
            orow[ch] = gd[ch] * xh[ch] + bd[ch];
        }
    }

    if (track(tape, {&input, &gamma, &beta})) {
        out.set_requires_grad(true);
        Impl ii = input.impl(), gi = gamma.impl(), bi = beta.impl(), oi = out.impl();
        tape->record([ii, gi, bi, oi, xhat, invstd, p, c, training] {
            if (oi->grad.empty()) return;
            const float* go = oi->grad.data();
            const float* xh = xhat->data();
            std::vector<double> sum_g(static_cast<size_t>(c), 0.0);
            std::vector<double> sum_gx(static_cast<size_t>(c), 0.0);
            for (int i = 0; i < p; ++i) {
                const float* gr = go + static_cast<size_t>(i) * c;
                const float* xr = xh + static_cast<size_t>(i) * c;
                for (int ch = 0; ch < c; ++ch) {
                    sum_g[ch] += gr[ch];
                    sum_gx[ch] += static_cast<double>(gr[ch]) * xr[ch];
                }
            }
            if (gi->requires_grad) {
                if (gi->grad.empty()) gi->grad.assign(gi->data.size(), 0.0f);
                for (int ch = 0; ch < c; ++ch) gi->grad[ch] += static_cast<float>(sum_gx[ch]);
            }
            if (bi->requires_grad) {
                if (bi->grad.empty()) bi->grad.assign(bi->data.size(), 0.0f);
                for (int ch = 0; ch < c; ++ch) bi->grad[ch] += static_cast<float>(sum_g[ch]);
            }
            if (ii->requires_grad) {
                if (ii->grad.empty()) ii->grad.assign(ii->data.size(), 0.0f);
                float* gx = ii->grad.data();
                const float* gd = gi->data.data();
                if (training) {
                    for (int i = 0; i < p; ++i) {
                        const float* gr = go + static_cast<size_t>(i) * c;
                        const float* xr = xh + static_cast<size_t>(i) * c;
                        float* gxr = gx + static_cast<size_t>(i) * c;
                        for (int ch = 0; ch < c; ++ch) {
                            double t = gr[ch] - sum_g[ch] / p - xr[ch] * sum_gx[ch] / p;
                            gxr[ch] += static_cast<float>(gd[ch] * (*invstd)[ch] * t);
                        }
                    }
                } else {
                    for (int i = 0; i < p; ++i) {
                        const float* gr = go + static_cast<size_t>(i) * c;
                        float* gxr = gx + static_cast<size_t>(i) * c;
                        for (int ch = 0; ch < c; ++ch)
                            gxr[ch] += gd[ch] * (*invstd)[ch] * gr[ch];
                    }
                }
            }
        });
    }
    return out;
}

Tensor channel_softmax(const Tensor& input, Tape* tape) {
    require_image(input, "channel_softmax");
    const int p = input.dim(0) * input.dim(1);
    const int k = input.dim(2);
    Tensor out(input.shape());
    const float* in = input.data();
    float* od = out.data();
    for (int i = 0; i < p; ++i) {
        const float* xr = in + static_cast<size_t>(i) * k;
        float* yr = od + static_cast<size_t>(i) * k;
        float m = xr[0];
        for (int j = 1; j < k; ++j) m = std::max(m, xr[j]);
        double s = 0.0;
        for (int j = 0; j < k; ++j) {
            yr[j] = std::exp(xr[j] - m);
            s += yr[j];
        }
        float inv = static_cast<float>(1.0 / s);
        for (int j = 0; j < k; ++j) {
            yr[j] *= inv;
            // keep entries strictly inside (0,1) even under saturation
            if (yr[j] < FLT_MIN) yr[j] = FLT_MIN;
            else if (yr[j] >= 1.0f) yr[j] = 1.0f - FLT_EPSILON;
        }
    }
    if (track(tape, {&input})) {
        out.set_requires_grad(true);
        Impl ii = input.impl(), oi = out.impl();
        tape->record([ii, oi, p, k] {
            if (oi->grad.empty()) return;
            if (ii->grad.empty()) ii->grad.assign(ii->data.size(), 0.0f);
            const float* go = oi->grad.data();
            const float* y = oi->data.data();
            float* gx = ii->grad.data();
            for (int i = 0; i < p; ++i) {
                const float* gr = go + static_cast<size_t>(i) * k;
                const float* yr = y + static_cast<size_t>(i) * k;
                float* gxr = gx + static_cast<size_t>(i) * k;
                double dot = 0.0;
                for (int j = 0; j < k; ++j) dot += static_cast<double>(gr[j]) * yr[j];
                for (int j = 0; j < k; ++j)
                    gxr[j] += yr[j] * (gr[j] - static_cast<float>(dot));
            }
        });
    }
    return out;
}

Tensor cross_entropy(const Tensor& probs, const std::vector<int32_t>& labels, Tape* tape) {
    require_image(probs, "cross_entropy");
    const int p = probs.dim(0) * probs.dim(1);
    const int k = probs.dim(2);
    require(static_cast<int>(labels.size()) == p,
            "cross_entropy: labels length " + std::to_string(labels.size()) + " vs " +
                std::to_string(p) + " pixels");
    constexpr float kEps = 1e-12f;
    const float* pd = probs.data();
    double loss = 0.0;
    for (int i = 0; i < p; ++i) {
        int32_t l = labels[static_cast<size_t>(i)];
        require(l >= 0 && l < k, "cross_entropy: label " + std::to_string(l) + " out of [0," +
                                     std::to_string(k) + ")");
        float v = pd[static_cast<size_t>(i) * k + l];
        loss -= std::log(static_cast<double>(v < kEps ? kEps : v));
    }
    Tensor out = Tensor::scalar(static_cast<float>(loss / p));
    if (track(tape, {&probs})) {
        out.set_requires_grad(true);
        Impl pi = probs.impl(), oi = out.impl();
        auto lab = std::make_shared<std::vector<int32_t>>(labels);
        tape->record([pi, oi, lab, p, k] {
            if (oi->grad.empty()) return;
            if (pi->grad.empty()) pi->grad.assign(pi->data.size(), 0.0f);
            const float go = oi->grad[0];
            for (int i = 0; i < p; ++i) {
                size_t idx = static_cast<size_t>(i) * k + (*lab)[static_cast<size_t>(i)];
                float v = pi->data[idx];
                if (v >= kEps) pi->grad[idx] -= go / (static_cast<float>(p) * v);
            }
        });
    }
    return out;
}

Tensor l1_loss(const Tensor& a, const Tensor& b, Tape* tape) {
    require_same_shape(a, b, "l1_loss");
    const size_t n = a.size();
    const float* ad = a.data();
    const float* bd = b.data();
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) s += std::fabs(static_cast<double>(ad[i]) - bd[i]);
    Tensor out = Tensor::scalar(static_cast<float>(s / n));
    if (track(tape, {&a, &b})) {
        out.set_requires_grad(true);
        Impl ai = a.impl(), bi = b.impl(), oi = out.impl();
        tape->record([ai, bi, oi, n] {
            if (oi->grad.empty()) return;
            const float go = oi->grad[0] / static_cast<float>(n);
            for (size_t i = 0; i < n; ++i) {
                float d = ai->data[i] - bi->data[i];
                float s = d > 0.0f ? go : (d < 0.0f ? -go : 0.0f);
                if (ai->requires_grad) {
                    if (ai->grad.empty()) ai->grad.assign(n, 0.0f);
                    ai->grad[i] += s;
                }
                if (bi->requires_grad) {
                    if (bi->grad.empty()) bi->grad.assign(n, 0.0f);
                    bi->grad[i] -= s;
                }
            }
        });
    }
    return out;
}

Tensor bce_loss(const Tensor& pred, const Tensor& target, Tape* tape) {
    require_same_shape(pred, target, "bce_loss");
    constexpr float kEps = 1e-7f;
    const size_t n = pred.size();
    const float* pd = pred.data();
    const float* td = target.data();
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double p = std::min(std::max(pd[i], kEps), 1.0f - kEps);
        s -= td[i] * std::log(p) + (1.0 - td[i]) * std::log(1.0 - p);
    }
    Tensor out = Tensor::scalar(static_cast<float>(s / n));
    if (track(tape, {&pred})) {
        out.set_requires_grad(true);
        Impl pi = pred.impl(), ti = target.impl(), oi = out.impl();
        tape->record([pi, ti, oi, n] {
            if (oi->grad.empty()) return;
            if (pi->grad.empty()) pi->grad.assign(n, 0.0f);
            const float go = oi->grad[0] / static_cast<float>(n);
            for (size_t i = 0; i < n; ++i) {
                float p = pi->data[i];
                if (p <= kEps || p >= 1.0f - kEps) continue;  // clamped region
                pi->grad[i] += go * (p - ti->data[i]) / (p * (1.0f - p));
            }
        });
    }
    return out;
}

Tensor upsample2x(const Tensor& input, Tape* tape) {
    require_image(input, "upsample2x");
    const int h = input.dim(0), w = input.dim(1), c = input.dim(2);
    Tensor out(Shape{2 * h, 2 * w, c});
    const float* in = input.data();
    float* od = out.data();
    for (int y = 0; y < 2 * h; ++y) {
        for (int x = 0; x < 2 * w; ++x) {
            const float* src = in + (static_cast<size_t>(y / 2) * w + x / 2) * c;
            float* dst = od + (static_cast<size_t>(y) * 2 * w + x) * c;
            std::memcpy(dst, src, static_cast<size_t>(c) * sizeof(float));
        }
    }
    if (track(tape, {&input})) {
        out.set_requires_grad(true);
        Impl ii = input.impl(), oi = out.impl();
        tape->record([ii, oi, h, w, c] {
            if (oi->grad.empty()) return;
            if (ii->grad.empty()) ii->grad.assign(ii->data.size(), 0.0f);
            const float* go = oi->grad.data();
            float* gi = ii->grad.data();
            for (int y = 0; y < 2 * h; ++y) {
                for (int x = 0; x < 2 * w; ++x) {
                    const float* src = go + (static_cast<size_t>(y) * 2 * w + x) * c;
                    float* dst = gi + (static_cast<size_t>(y / 2) * w + x / 2) * c;
                    for (int ch = 0; ch < c; ++ch) dst[ch] += src[ch];
                }
            }
        });
    }
    return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b, Tape* tape) {
    require_image(a, "concat_channels");
    require_image(b, "concat_channels");
    require(a.dim(0) == b.dim(0) && a.dim(1) == b.dim(1),
            "concat_channels: spatial dims differ, " + shape_str(a.shape()) + " vs " +
                shape_str(b.shape()));
    const int h = a.dim(0), w = a.dim(1), ca = a.dim(2), cb = b.dim(2);
    Tensor out(Shape{h, w, ca + cb});
    const float* ad = a.data();
    const float* bd = b.data();
    float* od = out.data();
    const int p = h * w;
    for (int i = 0; i < p; ++i) {
        std::memcpy(od + static_cast<size_t>(i) * (ca + cb), ad + static_cast<size_t>(i) * ca,
                    static_cast<size_t>(ca) * sizeof(float));
        std::memcpy(od + static_cast<size_t>(i) * (ca + cb) + ca,
                    bd + static_cast<size_t>(i) * cb, static_cast<size_t>(cb) * sizeof(float));
    }
    if (track(tape, {&a, &b})) {
        out.set_requires_grad(true);
        Impl ai = a.impl(), bi = b.impl(), oi = out.impl();
        tape->record([ai, bi, oi, p, ca, cb] {
            if (oi->grad.empty()) return;
            const float* go = oi->grad.data();
            if (ai->requires_grad) {
                if (ai->grad.empty()) ai->grad.assign(ai->data.size(), 0.0f);
                for (int i = 0; i < p; ++i)
                    for (int ch = 0; ch < ca; ++ch)
                        ai->grad[static_cast<size_t>(i) * ca + ch] +=
                            go[static_cast<size_t>(i) * (ca + cb) + ch];
            }
            if (bi->requires_grad) {
                if (bi->grad.empty()) bi->grad.assign(bi->data.size(), 0.0f);
                for (int i = 0; i < p; ++i)
                    for (int ch = 0; ch < cb; ++ch)
                        bi->grad[static_cast<size_t>(i) * cb + ch] +=
                            go[static_cast<size_t>(i) * (ca + cb) + ca + ch];
            }
        });
    }
    return out;
}

Tensor global_avg_pool(const Tensor& input, Tape* tape) {
    require_image(input, "global_avg_pool");
    const int p = input.dim(0) * input.dim(1);
    const int c = input.dim(2);
    Tensor out(Shape{1, 1, c});
    const float* in = input.data();
    float* od = out.data();
    for (int ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (int i = 0; i < p; ++i) s += in[static_cast<size_t>(i) * c + ch];
        od[ch] = static_cast<float>(s / p);
    }
    if (track(tape, {&input})) {
        out.set_requires_grad(true);
        Impl ii = input.impl(), oi = out.impl();
        tape->record([ii, oi, p, c] {
            if (oi->grad.empty()) return;
            if (ii->grad.empty()) ii->grad.assign(ii->data.size(), 0.0f);
            for (int ch = 0; ch < c; ++ch) {
                float g = oi->grad[static_cast<size_t>(ch)] / static_cast<float>(p);
                for (int i = 0; i < p; ++i) ii->grad[static_cast<size_t>(i) * c + ch] += g;
            }
        });
    }
    return out;
}

}  // namespace leafseg::ad
