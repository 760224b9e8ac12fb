#pragma once

#include <cstdint>
#include <vector>

#include "leafseg/image.hpp"
#include "leafseg/tensor.hpp"

namespace leafseg::crf {

struct CrfParams {
    float eta = 10.0f;         // pairwise weighting factor
    float sigma_alpha = 5.0f;  // spatial bandwidth, pixels
    float sigma_beta = 0.1f;   // color bandwidth, RGB units
    int window = 11;           // odd truncation window; support radius (window-1)/2
    int mf_iters = 5;

    void validate() const;
};

/// Per-pixel label distribution together with its argmax map and the unary
/// source it was refined from.
struct LabelField {
    ad::Tensor probs;             // H x W x K
    std::vector<int32_t> labels;  // argmax per pixel
    ad::Tensor unary;             // network softmax output Z, H x W x K
};

/// Gaussian appearance kernel over joint spatial/color distance. Returns 0
/// when the Manhattan distance between the positions exceeds (window-1)/2.
float appearance_kernel(int yi, int xi, int yj, int xj, const float* rgb_i, const float* rgb_j,
                        const CrfParams& params);

/// Potts label compatibility: 1 iff the labels differ.
inline int potts(int32_t l1, int32_t l2) { return l1 != l2 ? 1 : 0; }

/// Precomputed truncated bilateral weights for one image: for every pixel,
/// the kernel value against each in-range neighbor offset (self excluded),
/// already multiplied by eta. Reused across all mean-field invocations on
/// the same image.
struct BilateralWindow {
    int height = 0, width = 0;
    std::vector<std::pair<int, int>> offsets;  // (dy,dx), Manhattan ball minus center
    std::vector<float> weights;                // [pixel * offsets.size() + o], 0 out of range

    static BilateralWindow build(const ImageF& rgb, const CrfParams& params);
};

std::vector<int32_t> argmax_labels(const ad::Tensor& probs);

/// Mean-field refinement of `field.unary` (Algorithm: message passing,
/// Potts compatibility transform, unary combination, softmax; repeated
/// mf_iters times). Differentiable w.r.t. the unary tensor when `tape` is
/// given and the unary requires gradients.
LabelField meanfield_refine(const LabelField& field, const ImageF& rgb, const CrfParams& params,
                            ad::Tape* tape = nullptr);

/// Overload reusing a prebuilt window (the hot path inside the segmenter).
LabelField meanfield_refine(const LabelField& field, const BilateralWindow& window,
                            const CrfParams& params, ad::Tape* tape = nullptr);

/// Gibbs energy of a discrete labeling: unary -log z terms plus the
/// eta-weighted Potts/appearance pairwise terms over ordered in-window
/// pairs. Test oracle; not used by the refinement path.
double gibbs_energy(const std::vector<int32_t>& labels, const ad::Tensor& unary,
                    const ImageF& rgb, const CrfParams& params);

/// Count of non-normalized input distributions renormalized on entry.
uint64_t renormalize_count();
void reset_renormalize_count();

}  // namespace leafseg::crf
