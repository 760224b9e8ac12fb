#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "leafseg/adam.hpp"
#include "leafseg/colorcorrect.hpp"
#include "leafseg/colorspace.hpp"
#include "leafseg/rng.hpp"

using namespace leafseg;
namespace fs = std::filesystem;

namespace {

ImageF random_rgb(int h, int w, uint64_t seed) {
    Rng rng(seed);
    ImageF img(h, w, 3);
    for (auto& v : img.data) v = static_cast<float>(rng.uniform(0.05, 0.95));
    return img;
}

// Greenish scene whose chroma is predictable from lightness.
ImageF green_scene(int h, int w, uint64_t seed) {
    Rng rng(seed);
    ImageF img(h, w, 3);
    for (size_t i = 0; i < img.pixels(); ++i) {
        const bool leaf = rng.uniform() < 0.5;
        float hh = leaf ? 0.3f : 0.08f;
        float ss = leaf ? 0.65f : 0.5f;
        float vv = leaf ? static_cast<float>(rng.uniform(0.6, 0.85))
                        : static_cast<float>(rng.uniform(0.2, 0.4));
        color::hsv_to_rgb(hh, ss, vv, img.data[i * 3], img.data[i * 3 + 1], img.data[i * 3 + 2]);
    }
    return img;
}

}  // namespace

TEST_CASE("split_lab known points and round trip") {
    ImageF white(2, 2, 3, 1.0f);
    auto [lw, abw] = cc::split_lab(white);
    CHECK(lw.data[0] == doctest::Approx(1.0f).epsilon(1e-4));
    CHECK(std::fabs(abw.data[0]) < 1e-3f);
    CHECK(std::fabs(abw.data[1]) < 1e-3f);

    ImageF black(2, 2, 3, 0.0f);
    auto [lb, abb] = cc::split_lab(black);
    CHECK(lb.data[0] == doctest::Approx(-1.0f).epsilon(1e-5));

    ImageF img = random_rgb(9, 7, 5);
    auto [l, ab] = cc::split_lab(img);
    ImageF back = cc::merge_lab(l, ab);
    float max_err = 0.0f;
    for (size_t i = 0; i < img.data.size(); ++i)
        max_err = std::max(max_err, std::fabs(img.data[i] - back.data[i]));
    CHECK(max_err < 2e-3f);
}

TEST_CASE("merge_lab: achromatic, warm tone, constant fields") {
    // all-zero ab -> grayscale
    ImageF l(4, 4, 1);
    for (size_t i = 0; i < l.data.size(); ++i) l.data[i] = -0.5f + 0.06f * static_cast<float>(i);
    ImageF ab0(4, 4, 2, 0.0f);
    ImageF gray = cc::merge_lab(l, ab0);
    for (size_t i = 0; i < gray.pixels(); ++i) {
        CHECK(std::fabs(gray.data[i * 3] - gray.data[i * 3 + 1]) < 1e-2f);
        CHECK(std::fabs(gray.data[i * 3 + 1] - gray.data[i * 3 + 2]) < 1e-2f);
    }

    // strongly positive a*b* -> warm tone with R > B
    ImageF lmid(2, 2, 1, 0.0f);  // L* = 50
    ImageF abmax(2, 2, 2, 0.6f);
    ImageF warm = cc::merge_lab(lmid, abmax);
    CHECK(warm.data[0] > warm.data[2]);

    // constant fields -> constant RGB
    for (size_t i = 3; i < warm.data.size(); i += 3) {
        CHECK(warm.data[i] == warm.data[0]);
        CHECK(warm.data[i + 1] == warm.data[1]);
        CHECK(warm.data[i + 2] == warm.data[2]);
    }
}

TEST_CASE("generator shape, bounds, and init determinism") {
    cc::GeneratorNet g1 = cc::GeneratorNet::init(7, 8);
    cc::GeneratorNet g2 = cc::GeneratorNet::init(7, 8);
    auto p1 = g1.parameters();
    auto p2 = g2.parameters();
    for (size_t i = 0; i < p1.size(); ++i) CHECK(p1[i].second.values() == p2[i].second.values());

    ad::Tensor l(ad::Shape{32, 24, 1}, 0.1f);
    ad::Tensor out = g1.forward(l, false);
    REQUIRE(out.shape() == ad::Shape{32, 24, 2});
    for (size_t i = 0; i < out.size(); ++i) {
        CHECK(out.data()[i] > -1.0f);
        CHECK(out.data()[i] < 1.0f);
    }

    ad::Tensor bad(ad::Shape{30, 24, 1}, 0.0f);  // not divisible by 8
    CHECK_THROWS_AS(g1.forward(bad, false), std::invalid_argument);

    cc::GeneratorNet uninit;
    CHECK_THROWS_AS(uninit.forward(l, false), std::logic_error);
}

TEST_CASE("discriminator output strictly inside (0,1)") {
    cc::DiscriminatorNet d = cc::DiscriminatorNet::init(3, 8);
    Rng rng(4);
    ad::Tensor lab(ad::Shape{32, 32, 3});
    for (size_t i = 0; i < lab.size(); ++i)
        lab.data()[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
    ad::Tensor out = d.forward(lab, true);
    REQUIRE(out.size() == 1);
    CHECK(out.item() > 0.0f);
    CHECK(out.item() < 1.0f);
}

TEST_CASE("correct() consumes only the lightness channel") {
    cc::GeneratorNet gen = cc::GeneratorNet::init(11, 8);
    ImageF a = green_scene(32, 32, 9);
    auto [la, ab_a] = cc::split_lab(a);
    // build b with different chroma; force its L* plane bitwise equal to a's
    ImageF ab_scaled = ab_a;
    for (auto& v : ab_scaled.data) v *= 0.3f;
    ImageF b = cc::merge_lab(la, ab_scaled);
    auto [lb, ab_b] = cc::split_lab(b);
    for (size_t i = 0; i < la.data.size(); ++i)
        if (lb.data[i] != la.data[i]) {
            // gamut round trip moved L*; gray this pixel out in both images
            for (int c = 0; c < 3; ++c) b.data[i * 3 + c] = a.data[i * 3 + c];
        }
    auto [lb2, ab_b2] = cc::split_lab(b);
    REQUIRE(lb2.data == la.data);  // bitwise-equal lightness planes
    CHECK(b.data != a.data);       // but genuinely different chroma

    ImageF ca = cc::correct(a, gen);
    ImageF cb = cc::correct(b, gen);
    CHECK(ca.data == cb.data);  // bitwise identical outputs
    CHECK(ca.height == a.height);
    CHECK(ca.width == a.width);
}

TEST_CASE("correct() pads non-multiple-of-8 dims reflectively") {
    cc::GeneratorNet gen = cc::GeneratorNet::init(13, 8);
    ImageF img = green_scene(37, 45, 21);
    ImageF out = cc::correct(img, gen);
    CHECK(out.height == 37);
    CHECK(out.width == 45);
}

TEST_CASE("generator memorizes a single patch under L1 training") {
    // overfitting oracle: a sufficient-capacity net memorizes one sample;
    // 200 generator-only steps at a test-friendly learning rate
    ImageF patch = green_scene(32, 32, 33);
    auto [l, ab] = cc::split_lab(patch);
    ad::Tensor lt = to_tensor(l);
    ad::Tensor abt = to_tensor(ab);

    cc::GeneratorNet gen = cc::GeneratorNet::init(17, 16);
    ad::AdamOptimizer opt(0.01f);
    for (auto& [name, p] : gen.parameters()) opt.add_param(name, p);
    ad::Tape tape;
    float final_l1 = 1.0f;
    for (int step = 0; step < 200; ++step) {
        tape.clear();
        ad::Tensor fake = gen.forward(lt, true, &tape);
        ad::Tensor loss = ad::l1_loss(fake, abt, &tape);
        final_l1 = loss.item();
        tape.backward(loss);
        opt.step();
        opt.zero_grad();
    }
    CHECK(final_l1 < 0.05f);
}

TEST_CASE("train: two-epoch smoke run with history, checkpoint round trip") {
    std::vector<ImageF> patches;
    for (uint64_t i = 0; i < 4; ++i) patches.push_back(green_scene(32, 32, 100 + i));
    cc::TrainConfig cfg;
    cfg.epochs = 1;
    cfg.pretrain_epochs = 1;
    cfg.batch_size = 2;
    cfg.base_width = 8;
    cfg.seed = 5;
    cc::TrainResult result = cc::train(patches, cfg);
    CHECK_FALSE(result.aborted);
    REQUIRE(result.history.size() == 2);  // one pretrain + one adversarial row
    CHECK(result.history[0].gan_g == 0.0);
    CHECK(result.history[1].gan_d > 0.0);
    for (const auto& e : result.history) CHECK(std::isfinite(e.l1));

    const auto dir = fs::temp_directory_path() / "leafseg_cc_test";
    fs::create_directories(dir);
    const std::string ckpt = (dir / "model.ckpt").string();
    cc::save_models(ckpt, result.generator, result.discriminator);
    auto [gen2, disc2] = cc::load_models(ckpt);
    ImageF probe = green_scene(40, 40, 200);
    ImageF out1 = cc::correct(probe, result.generator);
    ImageF out2 = cc::correct(probe, gen2);
    CHECK(out1.data == out2.data);

    cc::write_loss_csv((dir / "loss.csv").string(), result.history);
    std::ifstream csv(dir / "loss.csv");
    std::string line;
    std::getline(csv, line);
    CHECK(line == "epoch,l1,gan_g,gan_d");
    int rows = 0;
    while (std::getline(csv, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 2);
    fs::remove_all(dir);

    CHECK_THROWS_AS(cc::train({}, cfg), std::invalid_argument);
}

TEST_CASE("pretraining L1 is non-increasing in at least 90% of steps") {
    std::vector<ImageF> patches;
    for (uint64_t i = 0; i < 2; ++i) patches.push_back(green_scene(32, 32, 300 + i));
    cc::TrainConfig cfg;
    cfg.epochs = 1;
    cfg.pretrain_epochs = 12;
    cfg.batch_size = 2;
    cfg.base_width = 8;
    cfg.lr = 2e-3f;  // tiny set trains faster than the production default
    cfg.seed = 7;
    cc::TrainResult result = cc::train(patches, cfg);
    REQUIRE(result.history.size() == 13);
    int non_increasing = 0;
    for (int i = 1; i < 12; ++i)
        if (result.history[static_cast<size_t>(i)].l1 <=
            result.history[static_cast<size_t>(i) - 1].l1 + 1e-6)
            ++non_increasing;
    CHECK(non_increasing >= 10);  // 10/11 > 90%
}

TEST_CASE("training determinism under a fixed seed") {
    std::vector<ImageF> patches;
    for (uint64_t i = 0; i < 2; ++i) patches.push_back(green_scene(32, 32, 400 + i));
    cc::TrainConfig cfg;
    cfg.epochs = 1;
    cfg.pretrain_epochs = 1;
    cfg.batch_size = 2;
    cfg.base_width = 8;
    cfg.seed = 11;
    cc::TrainResult a = cc::train(patches, cfg);
    cc::TrainResult b = cc::train(patches, cfg);
    REQUIRE(a.history.size() == b.history.size());
    for (size_t i = 0; i < a.history.size(); ++i) {
        CHECK(a.history[i].l1 == b.history[i].l1);
        CHECK(a.history[i].gan_g == b.history[i].gan_g);
    }
    ImageF probe = green_scene(24, 24, 500);
    CHECK(cc::correct(probe, a.generator).data == cc::correct(probe, b.generator).data);
}
