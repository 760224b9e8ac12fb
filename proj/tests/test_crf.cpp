#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "leafseg/crf.hpp"
#include "leafseg/ops.hpp"
#include "leafseg/rng.hpp"
#include "support/gradcheck.hpp"

using namespace leafseg;

namespace {

// Direct evaluation of the Gibbs energy (unary -log z plus eta-weighted
// Potts/appearance pairwise over ordered in-window pairs), written from the
// definition and independent of crf::gibbs_energy.
double direct_energy(const std::vector<int32_t>& labels, const ad::Tensor& z, const ImageF& img,
                     const crf::CrfParams& p) {
    const int h = z.dim(0), w = z.dim(1), k = z.dim(2);
    double e = 0.0;
    for (int i = 0; i < h * w; ++i) {
        double v = z.data()[static_cast<size_t>(i) * k + labels[static_cast<size_t>(i)]];
        e -= std::log(std::max(v, 1e-12));
    }
    const int radius = (p.window - 1) / 2;
    for (int yi = 0; yi < h; ++yi)
        for (int xi = 0; xi < w; ++xi)
            for (int yj = 0; yj < h; ++yj)
                for (int xj = 0; xj < w; ++xj) {
                    if (yi == yj && xi == xj) continue;
                    if (std::abs(yi - yj) + std::abs(xi - xj) > radius) continue;
                    if (labels[static_cast<size_t>(yi) * w + xi] ==
                        labels[static_cast<size_t>(yj) * w + xj])
                        continue;
                    const double dy = yi - yj, dx = xi - xj;
                    double col = 0.0;
                    for (int c = 0; c < 3; ++c) {
                        double d = static_cast<double>(img.at(yi, xi, c)) - img.at(yj, xj, c);
                        col += d * d;
                    }
                    e += p.eta * std::exp(-(dy * dy + dx * dx) /
                                              (2.0 * p.sigma_alpha * p.sigma_alpha) -
                                          col / (2.0 * p.sigma_beta * p.sigma_beta));
                }
    return e;
}

// Exhaustive MAP over all K^N labelings.
std::vector<int32_t> brute_force_map(const ad::Tensor& z, const ImageF& img,
                                     const crf::CrfParams& p) {
    const int n = z.dim(0) * z.dim(1);
    const int k = z.dim(2);
    std::vector<int32_t> best(static_cast<size_t>(n), 0), cur(static_cast<size_t>(n), 0);
    double best_e = direct_energy(best, z, img, p);
    int64_t total = 1;
    for (int i = 0; i < n; ++i) total *= k;
    for (int64_t code = 1; code < total; ++code) {
        int64_t c = code;
        for (int i = 0; i < n; ++i) {
            cur[static_cast<size_t>(i)] = static_cast<int32_t>(c % k);
            c /= k;
        }
        double e = direct_energy(cur, z, img, p);
        if (e < best_e) {
            best_e = e;
            best = cur;
        }
    }
    return best;
}

// Unary field with per-pixel log-odds margins >= margin_lo nats.
ad::Tensor make_unary(int h, int w, Rng& rng, double margin_lo, double margin_hi) {
    ad::Tensor z(ad::Shape{h, w, 2});
    for (int i = 0; i < h * w; ++i) {
        const double m = rng.uniform(margin_lo, margin_hi);
        const int pref = rng.uniform_int(0, 1);
        const double p1 = std::exp(m) / (std::exp(m) + 1.0);
        z.data()[static_cast<size_t>(i) * 2 + pref] = static_cast<float>(p1);
        z.data()[static_cast<size_t>(i) * 2 + (1 - pref)] = static_cast<float>(1.0 - p1);
    }
    return z;
}

ImageF clustered_image(int h, int w, Rng& rng, double spread) {
    ImageF img(h, w, 3);
    const float base[3] = {static_cast<float>(rng.uniform(0.2, 0.8)),
                           static_cast<float>(rng.uniform(0.2, 0.8)),
                           static_cast<float>(rng.uniform(0.2, 0.8))};
    for (size_t i = 0; i < img.pixels(); ++i)
        for (int c = 0; c < 3; ++c)
            img.data[i * 3 + c] = std::clamp(
                base[c] + static_cast<float>(rng.uniform(-spread, spread)), 0.0f, 1.0f);
    return img;
}

}  // namespace

TEST_CASE("appearance kernel closed forms and truncation") {
    crf::CrfParams p;
    p.sigma_alpha = 1.0f;
    p.sigma_beta = 0.1f;
    p.window = 11;
    float white[3] = {1.0f, 1.0f, 1.0f};
    // zero distances -> 1
    CHECK(crf::appearance_kernel(3, 3, 3, 3, white, white, p) == doctest::Approx(1.0f));
    // identical colors at distance d -> exp(-d^2 / (2 sigma_a^2))
    CHECK(crf::appearance_kernel(0, 0, 0, 2, white, white, p) ==
          doctest::Approx(std::exp(-2.0)).epsilon(1e-6));
    // d=1 spatial, color diff norm 0.1 -> exp(-0.5 - 0.5) = 1/e
    float other[3] = {1.0f - 0.1f, 1.0f, 1.0f};
    CHECK(crf::appearance_kernel(0, 0, 0, 1, white, other, p) ==
          doctest::Approx(std::exp(-1.0)).epsilon(1e-6));
    // beyond the Manhattan truncation radius -> exactly 0
    CHECK(crf::appearance_kernel(0, 0, 3, 3, white, white, p) == 0.0f);
}

TEST_CASE("potts model") {
    CHECK(crf::potts(3, 3) == 0);
    CHECK(crf::potts(3, 4) == 1);
    for (int a = 0; a < 5; ++a)
        for (int b = 0; b < 5; ++b) CHECK(crf::potts(a, b) == crf::potts(b, a));
}

TEST_CASE("meanfield with eta=0 is the identity on the unary softmax") {
    Rng rng(7);
    ImageF img = clustered_image(4, 5, rng, 0.3);
    ad::Tensor z = make_unary(4, 5, rng, 0.5, 3.0);
    crf::CrfParams p;
    p.eta = 0.0f;
    crf::LabelField in;
    in.unary = z;
    crf::LabelField out = crf::meanfield_refine(in, img, p);
    float max_err = 0.0f;
    for (size_t i = 0; i < z.size(); ++i)
        max_err = std::max(max_err, std::fabs(out.probs.data()[i] - z.data()[i]));
    CHECK(max_err < 1e-6f);
}

TEST_CASE("meanfield on a 1x1 image returns the unary") {
    ImageF img(1, 1, 3, 0.5f);
    ad::Tensor z(ad::Shape{1, 1, 3}, {0.6f, 0.3f, 0.1f});
    crf::LabelField in;
    in.unary = z;
    crf::CrfParams p;  // eta = 10 but there is no j != i
    crf::LabelField out = crf::meanfield_refine(in, img, p);
    for (int c = 0; c < 3; ++c)
        CHECK(out.probs.data()[c] == doctest::Approx(z.data()[c]).epsilon(1e-6));
    CHECK(out.labels[0] == 0);
}

TEST_CASE("meanfield argmax equals brute-force MAP when unaries dominate") {
    Rng rng(11);
    crf::CrfParams p;
    p.eta = 10.0f;
    for (int inst = 0; inst < 20; ++inst) {
        // a color ramp keeps every pairwise kernel weak by construction, so
        // the strong unaries decide every pixel and mean field must match
        // the exact MAP
        ImageF img(2, 2, 3);
        for (int i = 0; i < 4; ++i)
            for (int c = 0; c < 3; ++c)
                img.data[static_cast<size_t>(i) * 3 + c] =
                    0.1f + 0.25f * static_cast<float>(i) +
                    0.02f * static_cast<float>(rng.uniform());
        ad::Tensor z = make_unary(2, 2, rng, 3.0, 5.0);
        std::vector<int32_t> map = brute_force_map(z, img, p);
        crf::LabelField in;
        in.unary = z;
        crf::LabelField mf = crf::meanfield_refine(in, img, p);
        INFO("instance ", inst);
        CHECK(mf.labels == map);
    }
}

TEST_CASE("randomized 2x2 and 2x3 suite: meanfield vs exhaustive MAP") {
    Rng rng(99);
    int total = 0, agree = 0, low_eta_total = 0, low_eta_agree = 0;
    const float etas[] = {0.0f, 0.5f, 1.0f, 2.0f, 5.0f, 10.0f};
    for (int inst = 0; inst < 200; ++inst) {
        const int h = 2, w = (inst % 2) ? 3 : 2;
        crf::CrfParams p;
        p.eta = etas[rng.uniform_int(0, 5)];
        const double spread = 0.28 * std::pow(0.8 / 0.28, rng.uniform());
        ImageF img = clustered_image(h, w, rng, spread);
        ad::Tensor z = make_unary(h, w, rng, 2.5, 6.0);
        std::vector<int32_t> map = brute_force_map(z, img, p);
        crf::LabelField in;
        in.unary = z;
        crf::LabelField mf = crf::meanfield_refine(in, img, p);
        const bool eq = mf.labels == map;
        ++total;
        agree += eq;
        if (p.eta <= 1.0f) {
            ++low_eta_total;
            low_eta_agree += eq;
        }
    }
    CHECK(static_cast<double>(agree) / total >= 0.95);
    CHECK(low_eta_agree == low_eta_total);
}

TEST_CASE("gibbs energy closed forms") {
    Rng rng(21);
    crf::CrfParams p;

    // eta=0: energy of argmax labeling is minimal over all labelings
    {
        p.eta = 0.0f;
        ImageF img = clustered_image(2, 2, rng, 0.1);
        ad::Tensor z = make_unary(2, 2, rng, 1.0, 3.0);
        std::vector<int32_t> am = crf::argmax_labels(z);
        const double e_am = crf::gibbs_energy(am, z, img, p);
        std::vector<int32_t> cur(4, 0);
        for (int code = 0; code < 16; ++code) {
            for (int i = 0; i < 4; ++i) cur[static_cast<size_t>(i)] = (code >> i) & 1;
            CHECK(crf::gibbs_energy(cur, z, img, p) >= e_am - 1e-9);
        }
    }

    // uniform unaries, all-same labels: pairwise 0, unary N ln K
    {
        p.eta = 10.0f;
        const int k = 4;
        ImageF img = clustered_image(2, 3, rng, 0.05);
        ad::Tensor z(ad::Shape{2, 3, k}, 1.0f / k);
        std::vector<int32_t> same(6, 2);
        CHECK(crf::gibbs_energy(same, z, img, p) ==
              doctest::Approx(6.0 * std::log(static_cast<double>(k))).epsilon(1e-5));
    }

    // gibbs_energy agrees with the independent direct evaluation on all
    // 2x2 labelings (values within float32 kernel precision, ranking exact)
    {
        p.eta = 10.0f;
        ImageF img = clustered_image(2, 2, rng, 0.05);
        ad::Tensor z = make_unary(2, 2, rng, 0.5, 3.0);
        std::vector<int32_t> cur(4, 0);
        std::vector<std::pair<double, int>> module_ranked, direct_ranked;
        for (int code = 0; code < 16; ++code) {
            for (int i = 0; i < 4; ++i) cur[static_cast<size_t>(i)] = (code >> i) & 1;
            const double em = crf::gibbs_energy(cur, z, img, p);
            const double ed = direct_energy(cur, z, img, p);
            CHECK(em == doctest::Approx(ed).epsilon(1e-5));
            module_ranked.emplace_back(em, code);
            direct_ranked.emplace_back(ed, code);
        }
        std::sort(module_ranked.begin(), module_ranked.end());
        std::sort(direct_ranked.begin(), direct_ranked.end());
        for (int i = 0; i < 16; ++i)
            CHECK(module_ranked[static_cast<size_t>(i)].second ==
                  direct_ranked[static_cast<size_t>(i)].second);
    }
}

TEST_CASE("refined distributions stay normalized and in (0,1)") {
    Rng rng(31);
    ImageF img = clustered_image(6, 7, rng, 0.1);
    ad::Tensor logits = testsupport::random_tensor({6, 7, 8}, 77, -3.0, 3.0, false);
    ad::Tensor z = ad::channel_softmax(logits);
    crf::LabelField in;
    in.unary = z;
    crf::CrfParams p;
    crf::LabelField out = crf::meanfield_refine(in, img, p);
    for (int i = 0; i < 42; ++i) {
        double s = 0.0;
        for (int c = 0; c < 8; ++c) {
            const float v = out.probs.data()[static_cast<size_t>(i) * 8 + c];
            CHECK(v > 0.0f);
            CHECK(v < 1.0f);
            s += v;
        }
        CHECK(std::fabs(s - 1.0) < 1e-5);
    }
}

TEST_CASE("monotone smoothing: higher eta never decreases neighbor agreement") {
    Rng rng(41);
    ImageF img = clustered_image(8, 8, rng, 0.15);
    ad::Tensor logits = testsupport::random_tensor({8, 8, 6}, 88, -2.0, 2.0, false);
    ad::Tensor z = ad::channel_softmax(logits);
    auto agreement = [&](float eta) {
        crf::CrfParams p;
        p.eta = eta;
        crf::LabelField in;
        in.unary = z;
        crf::LabelField out = crf::meanfield_refine(in, img, p);
        int agree = 0;
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x) {
                if (x + 1 < 8 && out.labels[static_cast<size_t>(y) * 8 + x] ==
                                     out.labels[static_cast<size_t>(y) * 8 + x + 1])
                    ++agree;
                if (y + 1 < 8 && out.labels[static_cast<size_t>(y) * 8 + x] ==
                                     out.labels[static_cast<size_t>(y + 1) * 8 + x])
                    ++agree;
            }
        return agree;
    };
    const int a0 = agreement(0.0f);
    const int a1 = agreement(1.0f);
    const int a10 = agreement(10.0f);
    CHECK(a1 >= a0);
    CHECK(a10 >= a1);
}

TEST_CASE("non-normalized input is renormalized with a diagnostic") {
    crf::reset_renormalize_count();
    ImageF img(2, 2, 3, 0.5f);
    ad::Tensor bad(ad::Shape{2, 2, 2}, 3.0f);  // rows sum to 6
    crf::LabelField in;
    in.unary = bad;
    crf::CrfParams p;
    p.eta = 0.0f;
    crf::LabelField out = crf::meanfield_refine(in, img, p);
    CHECK(crf::renormalize_count() == 1);
    for (int i = 0; i < 4; ++i) {
        const float* row = out.probs.data() + static_cast<size_t>(i) * 2;
        CHECK(row[0] == doctest::Approx(0.5f).epsilon(1e-5));
        CHECK(row[1] == doctest::Approx(0.5f).epsilon(1e-5));
    }
    crf::reset_renormalize_count();
}

TEST_CASE("meanfield is differentiable w.r.t. the unary field") {
    Rng rng(51);
    ImageF img = clustered_image(3, 3, rng, 0.3);
    crf::CrfParams p;
    p.eta = 1.0f;
    p.mf_iters = 2;
    ad::Tensor logits = testsupport::random_tensor({3, 3, 3}, 99, -1.0, 1.0);
    auto forward = [&](ad::Tape* tape) {
        ad::Tensor z = ad::channel_softmax(logits, tape);
        crf::LabelField in;
        in.unary = z;
        crf::LabelField out = crf::meanfield_refine(in, img, p, tape);
        return out.probs;
    };
    auto elem = testsupport::check_gradients(forward, {logits});
    CHECK(elem.max_rel_err < 2e-2);
    CHECK(testsupport::check_gradients_directional(forward, {logits}) < 1e-3);
}
