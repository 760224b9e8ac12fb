#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "leafseg/crf.hpp"
#include "leafseg/embednet.hpp"
#include "leafseg/image.hpp"

namespace leafseg::seg {

struct SegmenterConfig {
    int max_iters = 300;  // T
    int num_labels = 64;  // K
    float lr = 2e-4f;
    crf::CrfParams crf;
    bool backprop_through_crf = true;
    int min_labels = 4;  // early stop when distinct labels drop to this or fewer
    uint64_t seed = 0;
    int num_blocks = 3;
    int hidden_channels = 64;

    /// Optional per-iteration label-map observer (debug snapshots).
    std::function<void(int iter, const std::vector<int32_t>& labels, int h, int w)> snapshot;

    void validate() const;
};

struct SegmentationResult {
    std::vector<int32_t> labels;  // final H x W label map, row-major
    ad::Tensor probs;             // final refined Q field, H x W x K
    int iterations_run = 0;
    std::vector<float> loss_trace;
    bool aborted = false;  // non-finite loss encountered; result is partial
    int height = 0, width = 0;
};

/// Self-supervised loop: per iteration, network forward -> mean-field
/// refinement -> argmax pseudo-labels -> cross-entropy -> Adam update, with
/// early stopping on label-count collapse. Deterministic under config.seed.
SegmentationResult segment_semantic(const ImageF& image, const SegmenterConfig& config);

/// 4-connected components of equal-label pixels; region ids dense from 0 in
/// first-encounter (row-major) order.
std::vector<int32_t> region_label_map(const std::vector<int32_t>& labels, int height, int width);

int count_distinct(const std::vector<int32_t>& labels);

}  // namespace leafseg::seg
