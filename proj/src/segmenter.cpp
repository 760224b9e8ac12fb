#include "leafseg/segmenter.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

#include "leafseg/adam.hpp"
#include "leafseg/ops.hpp"

namespace leafseg::seg {

void SegmenterConfig::validate() const {
    if (max_iters < 1) throw std::invalid_argument("segmenter: T must be >= 1");
    if (min_labels < 2) throw std::invalid_argument("segmenter: min_labels must be >= 2");
    crf.validate();
}

int count_distinct(const std::vector<int32_t>& labels) {
    std::unordered_set<int32_t> seen(labels.begin(), labels.end());
    return static_cast<int>(seen.size());
}

SegmentationResult segment_semantic(const ImageF& image, const SegmenterConfig& config) {
    config.validate();
    if (image.channels != 3) throw std::invalid_argument("segmenter: image must be RGB");
    if (image.height < 8 || image.width < 8)
        throw std::invalid_argument("segmenter: image must be at least 8x8");
    if (!in_unit_range(image, 1e-6f))
        throw std::invalid_argument("segmenter: image values must be in [0,1]");

    net::EmbedNetConfig ncfg;
    ncfg.num_labels = config.num_labels;
    ncfg.num_blocks = config.num_blocks;
    ncfg.hidden_channels = config.hidden_channels;
    ncfg.seed = config.seed;
    net::EmbedNet model = net::EmbedNet::init(ncfg);

    ad::AdamOptimizer opt(config.lr);
    for (auto& [name, p] : model.parameters()) opt.add_param(name, p);

    // The bilateral window depends only on the image; build it once for all
    // T iterations.
    crf::BilateralWindow window = crf::BilateralWindow::build(image, config.crf);
    ad::Tensor input = to_tensor(image);

    SegmentationResult result;
    result.height = image.height;
    result.width = image.width;

    ad::Tape tape;
    for (int t = 1; t <= config.max_iters; ++t) {
        tape.clear();
        ad::Tensor z = model.forward(input, /*training=*/true, &tape);

        crf::LabelField unary_field;
        unary_field.unary = z;
        ad::Tensor loss;
        crf::LabelField refined;
        if (config.backprop_through_crf) {
            refined = crf::meanfield_refine(unary_field, window, config.crf, &tape);
            loss = ad::cross_entropy(refined.probs, refined.labels, &tape);
        } else {
            // Detached refinement: pseudo-labels come from the refined field
            // but gradients only flow through the raw softmax output.
            crf::LabelField detached;
            detached.unary = z.detached_copy();
            refined = crf::meanfield_refine(detached, window, config.crf, nullptr);
            loss = ad::cross_entropy(z, refined.labels, &tape);
        }

        const float loss_v = loss.item();
        if (!std::isfinite(loss_v)) {
            result.aborted = true;
            break;
        }
        result.loss_trace.push_back(loss_v);
        result.iterations_run = t;
        result.labels = refined.labels;
        result.probs = refined.probs.detached_copy();

        tape.backward(loss);
        opt.step();  // skips on non-finite gradients
        opt.zero_grad();

        if (config.snapshot) config.snapshot(t, result.labels, image.height, image.width);
        if (count_distinct(result.labels) <= config.min_labels) break;
    }
    tape.clear();
    return result;
}

std::vector<int32_t> region_label_map(const std::vector<int32_t>& labels, int height, int width) {
    if (static_cast<size_t>(height) * width != labels.size())
        throw std::invalid_argument("region_label_map: dims do not match label count");
    // Two-pass union-find over same-label 4-neighbors.
    std::vector<int32_t> region(labels.size(), -1);
    std::vector<int32_t> parent;
    parent.reserve(labels.size() / 4 + 1);
    auto find = [&](int32_t a) {
        while (parent[static_cast<size_t>(a)] != a) {
            parent[static_cast<size_t>(a)] = parent[static_cast<size_t>(parent[static_cast<size_t>(a)])];
            a = parent[static_cast<size_t>(a)];
        }
        return a;
    };
    auto unite = [&](int32_t a, int32_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[static_cast<size_t>(std::max(a, b))] = std::min(a, b);
    };
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const size_t i = static_cast<size_t>(y) * width + x;
            const int32_t l = labels[i];
            const bool up = y > 0 && labels[i - static_cast<size_t>(width)] == l;
            const bool left = x > 0 && labels[i - 1] == l;
            if (up && left) {
                region[i] = region[i - static_cast<size_t>(width)];
                unite(region[i], region[i - 1]);
            } else if (up) {
                region[i] = region[i - static_cast<size_t>(width)];
            } else if (left) {
                region[i] = region[i - 1];
            } else {
                region[i] = static_cast<int32_t>(parent.size());
                parent.push_back(region[i]);
            }
        }
    }
    // Second pass: resolve unions and densify ids in row-major first-touch order.
    std::vector<int32_t> dense(parent.size(), -1);
    int32_t next = 0;
    for (size_t i = 0; i < region.size(); ++i) {
        int32_t root = find(region[i]);
        if (dense[static_cast<size_t>(root)] < 0) dense[static_cast<size_t>(root)] = next++;
        region[i] = dense[static_cast<size_t>(root)];
    }
    return region;
}

}  // namespace leafseg::seg
