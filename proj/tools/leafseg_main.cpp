#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "leafseg/colorcorrect.hpp"
#include "leafseg/dataio.hpp"
#include "leafseg/greenness.hpp"
#include "leafseg/lighting.hpp"
#include "leafseg/metrics.hpp"
#include "leafseg/rng.hpp"
#include "leafseg/segmenter.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunConfig {
    uint64_t seed = 0;
    // self-supervised segmentation
    int num_labels = 64;
    int max_iters = 300;
    float lr = 2e-4f;
    float eta = 10.0f;
    float sigma_alpha = 5.0f;
    float sigma_beta = 0.1f;
    int window = 11;
    int mf_iters = 5;
    bool backprop_through_crf = true;
    int min_labels = 4;
    int num_blocks = 3;
    int hidden_channels = 64;
    // greenness
    std::array<float, 3> mu = {0.3f, 0.6f, 0.8f};
    std::array<float, 3> sigma = {0.1f, 0.3f, 0.5f};
    float gamma1 = 0.2f;
    float gamma2 = 0.5f;
    bool circular_hue = true;
    bool use_hsl = false;
    // color correction training
    float lambda = 100.0f;
    int epochs = 50;
    int batch_size = 16;
    float cc_lr = 2e-4f;
    int pretrain_epochs = 20;
    int base_width = 32;
    int patch_size = 256;
    float patch_overlap = 0.5f;
    // lighting simulation
    bool per_pixel_hue = true;
};

#define CFG_FIELD(j, cfg, name) \
    if (j.contains(#name)) j.at(#name).get_to(cfg.name)

void from_json_partial(const json& j, RunConfig& c) {
    CFG_FIELD(j, c, seed);
    CFG_FIELD(j, c, num_labels);
    CFG_FIELD(j, c, max_iters);
    CFG_FIELD(j, c, lr);
    CFG_FIELD(j, c, eta);
    CFG_FIELD(j, c, sigma_alpha);
    CFG_FIELD(j, c, sigma_beta);
    CFG_FIELD(j, c, window);
    CFG_FIELD(j, c, mf_iters);
    CFG_FIELD(j, c, backprop_through_crf);
    CFG_FIELD(j, c, min_labels);
    CFG_FIELD(j, c, num_blocks);
    CFG_FIELD(j, c, hidden_channels);
    CFG_FIELD(j, c, mu);
    CFG_FIELD(j, c, sigma);
    CFG_FIELD(j, c, gamma1);
    CFG_FIELD(j, c, gamma2);
    CFG_FIELD(j, c, circular_hue);
    CFG_FIELD(j, c, use_hsl);
    CFG_FIELD(j, c, lambda);
    CFG_FIELD(j, c, epochs);
    CFG_FIELD(j, c, batch_size);
    CFG_FIELD(j, c, cc_lr);
    CFG_FIELD(j, c, pretrain_epochs);
    CFG_FIELD(j, c, base_width);
    CFG_FIELD(j, c, patch_size);
    CFG_FIELD(j, c, patch_overlap);
    CFG_FIELD(j, c, per_pixel_hue);
}

json to_json_full(const RunConfig& c) {
    return json{{"seed", c.seed},
                {"num_labels", c.num_labels},
                {"max_iters", c.max_iters},
                {"lr", c.lr},
                {"eta", c.eta},
                {"sigma_alpha", c.sigma_alpha},
                {"sigma_beta", c.sigma_beta},
                {"window", c.window},
                {"mf_iters", c.mf_iters},
                {"backprop_through_crf", c.backprop_through_crf},
                {"min_labels", c.min_labels},
                {"num_blocks", c.num_blocks},
                {"hidden_channels", c.hidden_channels},
                {"mu", c.mu},
                {"sigma", c.sigma},
                {"gamma1", c.gamma1},
                {"gamma2", c.gamma2},
                {"circular_hue", c.circular_hue},
                {"use_hsl", c.use_hsl},
                {"lambda", c.lambda},
                {"epochs", c.epochs},
                {"batch_size", c.batch_size},
                {"cc_lr", c.cc_lr},
                {"pretrain_epochs", c.pretrain_epochs},
                {"base_width", c.base_width},
                {"patch_size", c.patch_size},
                {"patch_overlap", c.patch_overlap},
                {"per_pixel_hue", c.per_pixel_hue}};
}

RunConfig load_config(const std::string& path) {
    RunConfig c;
    if (path.empty()) return c;
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config file " + path);
    json j = json::parse(is);
    from_json_partial(j, c);
    return c;
}

void echo_config(const RunConfig& c, const std::string& out_dir) {
    std::ofstream os(fs::path(out_dir) / "effective_config.json");
    os << to_json_full(c).dump(2) << "\n";
}

leafseg::seg::SegmenterConfig segmenter_config(const RunConfig& c, uint64_t seed) {
    leafseg::seg::SegmenterConfig sc;
    sc.max_iters = c.max_iters;
    sc.num_labels = c.num_labels;
    sc.lr = c.lr;
    sc.crf.eta = c.eta;
    sc.crf.sigma_alpha = c.sigma_alpha;
    sc.crf.sigma_beta = c.sigma_beta;
    sc.crf.window = c.window;
    sc.crf.mf_iters = c.mf_iters;
    sc.backprop_through_crf = c.backprop_through_crf;
    sc.min_labels = c.min_labels;
    sc.num_blocks = c.num_blocks;
    sc.hidden_channels = c.hidden_channels;
    sc.seed = seed;
    return sc;
}

leafseg::green::GreennessParams greenness_params(const RunConfig& c) {
    leafseg::green::GreennessParams gp;
    gp.mu = c.mu;
    gp.sigma = c.sigma;
    gp.gamma1 = c.gamma1;
    gp.gamma2 = c.gamma2;
    gp.circular_hue = c.circular_hue;
    gp.use_hsl = c.use_hsl;
    return gp;
}

std::optional<std::string> find_truth_file(const std::string& truth_dir, const fs::path& input) {
    const std::string stem = input.stem().string();
    for (const auto& cand :
         {stem + ".png", stem + "_mask.png", stem + "_truth.png"}) {
        fs::path p = fs::path(truth_dir) / cand;
        if (fs::exists(p)) return p.string();
    }
    return std::nullopt;
}

// One image through correct (optional) -> segmentation -> leaf mask.
struct SegmentOutcome {
    std::string file;
    bool ok = false;
    std::string error;
    int iterations = 0;
    double seconds = 0.0;
    int distinct_labels = 0;
    bool aborted = false;
};

int run_parallel(int jobs, int n, const std::function<void(int)>& fn) {
    if (jobs <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return n;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    const int workers = std::min(jobs, n);
    pool.reserve(static_cast<size_t>(workers));
    for (int t = 0; t < workers; ++t)
        pool.emplace_back([&] {
            while (true) {
                int i = next.fetch_add(1);
                if (i >= n) break;
                fn(i);
            }
        });
    for (auto& th : pool) th.join();
    return n;
}

int cmd_segment(const std::vector<std::string>& inputs, const RunConfig& cfg,
                const std::string& out_dir, const std::string& correct_ckpt,
                bool overlay, const std::string& truth_dir, int jobs, bool debug_snapshots) {
    if (inputs.empty()) {
        std::cerr << "segment: no input images\n";
        return 1;
    }
    std::optional<leafseg::cc::GeneratorNet> generator;
    if (!correct_ckpt.empty()) {
        try {
            auto [g, d] = leafseg::cc::load_models(correct_ckpt);
            generator = std::move(g);
        } catch (const std::exception& e) {
            std::cerr << "segment: cannot load checkpoint: " << e.what() << "\n";
            return 1;
        }
    }
    fs::create_directories(out_dir);
    echo_config(cfg, out_dir);

    std::vector<SegmentOutcome> outcomes(inputs.size());
    std::mutex gen_mutex;  // generator BN buffers are shared state

    run_parallel(jobs, static_cast<int>(inputs.size()), [&](int i) {
        SegmentOutcome& oc = outcomes[static_cast<size_t>(i)];
        oc.file = inputs[static_cast<size_t>(i)];
        const auto t0 = std::chrono::steady_clock::now();
        try {
            leafseg::ImageF img = leafseg::io::load_image(oc.file);
            if (generator) {
                std::lock_guard<std::mutex> lock(gen_mutex);
                img = leafseg::cc::correct(img, *generator);
            }
            auto sc = segmenter_config(cfg, leafseg::Rng::mix(cfg.seed, static_cast<uint64_t>(i)));
            const fs::path stem = fs::path(oc.file).stem();
            if (debug_snapshots) {
                fs::path snap_dir = fs::path(out_dir) / (stem.string() + "_snapshots");
                fs::create_directories(snap_dir);
                sc.snapshot = [snap_dir](int iter, const std::vector<int32_t>& labels, int h, int w) {
                    char name[32];
                    std::snprintf(name, sizeof(name), "iter_%04d.png", iter);
                    leafseg::io::save_label_map_indexed(labels, h, w, (snap_dir / name).string());
                };
            }
            leafseg::seg::SegmentationResult res = leafseg::seg::segment_semantic(img, sc);
            oc.aborted = res.aborted;
            oc.iterations = res.iterations_run;
            oc.distinct_labels = leafseg::seg::count_distinct(res.labels);
            auto regions = leafseg::seg::region_label_map(res.labels, res.height, res.width);
            auto mask = leafseg::green::leaf_mask(img, regions, greenness_params(cfg));
            const std::string mask_path =
                (fs::path(out_dir) / (stem.string() + "_mask.png")).string();
            leafseg::io::save_mask(mask.mask, mask.height, mask.width, mask_path);
            if (overlay) {
                std::vector<uint8_t> truth(mask.mask.size(), 0);
                if (!truth_dir.empty()) {
                    if (auto tf = find_truth_file(truth_dir, fs::path(oc.file))) {
                        int th = 0, tw = 0;
                        truth = leafseg::io::load_mask(*tf, th, tw);
                    }
                }
                leafseg::ImageF ov = leafseg::green::render_overlay(img, mask.mask, truth);
                leafseg::io::save_image(
                    ov, (fs::path(out_dir) / (stem.string() + "_overlay.png")).string());
            }
            oc.ok = !res.aborted;
            if (res.aborted) oc.error = "non-finite loss; partial result written";
        } catch (const std::exception& e) {
            oc.ok = false;
            oc.error = e.what();
        }
        oc.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    });

    json report;
    report["images"] = json::array();
    int failures = 0;
    for (const auto& oc : outcomes) {
        if (!oc.ok) ++failures;
        report["images"].push_back(json{{"file", oc.file},
                                        {"ok", oc.ok},
                                        {"error", oc.error},
                                        {"iterations", oc.iterations},
                                        {"seconds", oc.seconds},
                                        {"distinct_labels", oc.distinct_labels}});
        if (!oc.ok)
            std::cerr << "segment: " << oc.file << " failed: " << oc.error << "\n";
        else
            std::cout << "segment: " << oc.file << " ok, " << oc.iterations << " iters, "
                      << oc.seconds << " s\n";
    }
    std::ofstream(fs::path(out_dir) / "report.json") << report.dump(2) << "\n";
    return failures == 0 ? 0 : 2;
}

int cmd_train_cc(const std::string& manifest_path, const RunConfig& cfg,
                 const std::string& out_dir, bool with_augment) {
    leafseg::io::DatasetManifest manifest = leafseg::io::load_manifest(manifest_path);
    auto train_entries = manifest.with_split(leafseg::io::Split::Train);
    if (train_entries.empty()) {
        std::cerr << "train-cc: manifest has no train images\n";
        return 1;
    }
    fs::create_directories(out_dir);
    echo_config(cfg, out_dir);

    std::vector<leafseg::ImageF> patches;
    uint64_t aug_stream = 0;
    for (size_t i = 0; i < train_entries.size(); ++i) {
        leafseg::ImageF img = leafseg::io::load_image(manifest.image_path(train_entries[i]));
        auto set = leafseg::io::extract_patches(img, static_cast<int>(i), cfg.patch_size,
                                                cfg.patch_overlap);
        for (auto& p : set.patches) {
            if (with_augment)
                patches.push_back(leafseg::io::augment(
                    p.block, leafseg::Rng::mix(cfg.seed, 7000 + aug_stream)));
            else
                patches.push_back(std::move(p.block));
            ++aug_stream;
        }
    }
    std::cout << "train-cc: " << patches.size() << " patches from " << train_entries.size()
              << " images\n";

    leafseg::cc::TrainConfig tc;
    tc.lambda = cfg.lambda;
    tc.epochs = cfg.epochs;
    tc.batch_size = cfg.batch_size;
    tc.lr = cfg.cc_lr;
    tc.pretrain_epochs = cfg.pretrain_epochs;
    tc.base_width = cfg.base_width;
    tc.seed = cfg.seed;
    leafseg::cc::TrainResult result = leafseg::cc::train(patches, tc);

    const std::string ckpt = (fs::path(out_dir) / "colorcorrect.ckpt").string();
    leafseg::cc::save_models(ckpt, result.generator, result.discriminator);
    leafseg::cc::write_loss_csv((fs::path(out_dir) / "losses.csv").string(), result.history);
    if (result.aborted) {
        std::cerr << "train-cc: aborted: " << result.error << " (partial checkpoint written)\n";
        return 2;
    }
    std::cout << "train-cc: checkpoint written to " << ckpt << "\n";
    return 0;
}

int cmd_correct(const std::vector<std::string>& inputs, const RunConfig& cfg,
                const std::string& ckpt, const std::string& out_dir) {
    if (inputs.empty()) {
        std::cerr << "correct: no input images\n";
        return 1;
    }
    auto [generator, disc] = leafseg::cc::load_models(ckpt);
    (void)disc;
    fs::create_directories(out_dir);
    echo_config(cfg, out_dir);
    int failures = 0;
    for (const auto& file : inputs) {
        try {
            leafseg::ImageF img = leafseg::io::load_image(file);
            leafseg::ImageF fixed = leafseg::cc::correct(img, generator);
            const fs::path out =
                fs::path(out_dir) / (fs::path(file).stem().string() + "_corrected.png");
            leafseg::io::save_image(fixed, out.string());
        } catch (const std::exception& e) {
            std::cerr << "correct: " << file << " failed: " << e.what() << "\n";
            ++failures;
        }
    }
    return failures == 0 ? 0 : 2;
}

int cmd_simulate(const std::vector<std::string>& inputs, const RunConfig& cfg,
                 const std::string& mode, const std::string& out_dir) {
    if (inputs.empty()) {
        std::cerr << "simulate: no input images\n";
        return 1;
    }
    leafseg::light::Mode m;
    std::string suffix;
    if (mode == "yellow") {
        m = leafseg::light::Mode::Yellow;
        suffix = "_yellow.png";
    } else if (mode == "purple") {
        m = leafseg::light::Mode::Purple;
        suffix = "_purple.png";
    } else {
        std::cerr << "simulate: mode must be yellow or purple\n";
        return 1;
    }
    fs::create_directories(out_dir);
    echo_config(cfg, out_dir);
    int failures = 0;
    for (size_t i = 0; i < inputs.size(); ++i) {
        try {
            leafseg::ImageF img = leafseg::io::load_image(inputs[i]);
            auto spec = leafseg::light::LightingSpec::for_mode(
                m, leafseg::Rng::mix(cfg.seed, static_cast<uint64_t>(i)));
            spec.per_pixel_hue = cfg.per_pixel_hue;
            leafseg::ImageF distorted = leafseg::light::apply_lighting(img, spec);
            const fs::path out = fs::path(out_dir) / (fs::path(inputs[i]).stem().string() + suffix);
            leafseg::io::save_image(distorted, out.string());
        } catch (const std::exception& e) {
            std::cerr << "simulate: " << inputs[i] << " failed: " << e.what() << "\n";
            ++failures;
        }
    }
    return failures == 0 ? 0 : 2;
}

bool is_binary_mask(const leafseg::ImageF& img) {
    for (size_t i = 0; i < img.pixels(); ++i) {
        const float* p = img.data.data() + i * img.channels;
        if (p[0] != p[1] || p[1] != p[2]) return false;
        if (p[0] != 0.0f && p[0] != 1.0f) return false;
    }
    return true;
}

int cmd_eval(const std::string& pred_dir, const std::string& truth_dir,
             const std::string& out_dir) {
    std::vector<fs::path> pred_files;
    for (const auto& e : fs::directory_iterator(pred_dir))
        if (e.is_regular_file()) pred_files.push_back(e.path());
    std::sort(pred_files.begin(), pred_files.end());
    if (pred_files.empty()) {
        std::cerr << "eval: no files in " << pred_dir << "\n";
        return 1;
    }
    fs::create_directories(out_dir);
    std::vector<leafseg::metrics::ImageMetrics> per_image;
    for (const auto& pf : pred_files) {
        fs::path tf = fs::path(truth_dir) / pf.filename();
        if (!fs::exists(tf)) {
            std::cerr << "eval: no matching truth for " << pf.filename() << "\n";
            continue;
        }
        leafseg::ImageF a = leafseg::io::load_image(pf.string());
        leafseg::ImageF b = leafseg::io::load_image(tf.string());
        leafseg::metrics::ImageMetrics m;
        m.id = pf.stem().string();
        if (is_binary_mask(a) && is_binary_mask(b)) {
            leafseg::metrics::MaskPair pair;
            pair.height = a.height;
            pair.width = a.width;
            pair.predicted.resize(a.pixels());
            pair.truth.resize(b.pixels());
            for (size_t i = 0; i < a.pixels(); ++i) {
                pair.predicted[i] = a.data[i * 3] > 0.5f ? 1 : 0;
                pair.truth[i] = b.data[i * 3] > 0.5f ? 1 : 0;
            }
            m.fbd = leafseg::metrics::dice(pair);
        } else {
            m.psnr_uv = leafseg::metrics::psnr_uv(a, b);
            if (a.height >= 11 && a.width >= 11) m.ssim_uv = leafseg::metrics::ssim_uv(a, b);
        }
        per_image.push_back(std::move(m));
    }
    if (per_image.empty()) {
        std::cerr << "eval: no comparable pairs\n";
        return 1;
    }
    auto report = leafseg::metrics::aggregate(std::move(per_image));
    leafseg::metrics::write_report_csv((fs::path(out_dir) / "metrics.csv").string(), report);
    leafseg::metrics::write_report_json((fs::path(out_dir) / "metrics.json").string(), report);
    if (report.mean_fbd >= 0.0) std::cout << "eval: FBD " << report.mean_fbd << "\n";
    if (report.mean_psnr_uv >= 0.0) std::cout << "eval: PSNR(UV) " << report.mean_psnr_uv << "\n";
    if (report.mean_ssim_uv >= -1.0) std::cout << "eval: SSIM(UV) " << report.mean_ssim_uv << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Self-supervised leaf segmentation"};
    app.require_subcommand(1);

    std::string config_path, out_dir, correct_ckpt, truth_dir, manifest_path, ckpt_path, mode;
    std::vector<std::string> inputs;
    uint64_t seed = 0;
    bool seed_given = false, overlay = false, debug_snapshots = false, with_augment = false;
    int jobs = 1;

    auto add_common = [&](CLI::App* sub, bool needs_out) {
        sub->add_option("--config", config_path, "JSON config file");
        sub->add_option("--seed", seed, "override config seed")->each([&](const std::string&) {
            seed_given = true;
        });
        auto* out = sub->add_option("--out", out_dir, "output directory");
        if (needs_out) out->required();
    };

    CLI::App* seg = app.add_subcommand("segment", "segment leaf regions in images");
    seg->add_option("inputs", inputs, "input images");
    add_common(seg, true);
    seg->add_option("--correct", correct_ckpt, "color-correction checkpoint applied first");
    seg->add_flag("--overlay", overlay, "write TP/FP/FN overlays");
    seg->add_option("--truth", truth_dir, "ground-truth mask directory for overlays");
    seg->add_option("--jobs", jobs, "parallel images")->check(CLI::PositiveNumber);
    seg->add_flag("--debug-snapshots", debug_snapshots, "write per-iteration label maps");

    CLI::App* tcc = app.add_subcommand("train-cc", "train the color-correction model");
    tcc->add_option("--manifest", manifest_path, "dataset manifest")->required();
    add_common(tcc, true);
    tcc->add_flag("--augment", with_augment, "augment training patches");

    CLI::App* cor = app.add_subcommand("correct", "color-correct images");
    cor->add_option("inputs", inputs, "input images");
    add_common(cor, true);
    cor->add_option("--ckpt", ckpt_path, "color-correction checkpoint")->required();

    CLI::App* sim = app.add_subcommand("simulate", "apply synthetic lighting distortion");
    sim->add_option("inputs", inputs, "input images");
    add_common(sim, true);
    sim->add_option("--mode", mode, "yellow or purple")->required();

    CLI::App* ev = app.add_subcommand("eval", "compare prediction and truth directories");
    std::string pred_dir;
    ev->add_option("--pred", pred_dir, "prediction directory")->required();
    ev->add_option("--truth", truth_dir, "truth directory")->required();
    add_common(ev, true);

    CLI11_PARSE(app, argc, argv);

    try {
        RunConfig cfg = load_config(config_path);
        if (seed_given) cfg.seed = seed;
        if (seg->parsed())
            return cmd_segment(inputs, cfg, out_dir, correct_ckpt, overlay, truth_dir, jobs,
                               debug_snapshots);
        if (tcc->parsed()) return cmd_train_cc(manifest_path, cfg, out_dir, with_augment);
        if (cor->parsed()) return cmd_correct(inputs, cfg, ckpt_path, out_dir);
        if (sim->parsed()) return cmd_simulate(inputs, cfg, mode, out_dir);
        if (ev->parsed()) return cmd_eval(pred_dir, truth_dir, out_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
