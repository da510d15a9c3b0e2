#pragma once

#include <optional>
#include <vector>

#include "c2cl/imaging.hpp"

namespace c2cl {

// Soft segmentation output prior to thresholding; operand of the
// cross-entropy loss.
struct ProbMask {
    int width = 0;
    int height = 0;
    std::vector<float> probs;  // row-major, each in [0,1]

    ProbMask() = default;
    ProbMask(int w, int h, float fill = 0.0f);

    float& at(int x, int y) { return probs[static_cast<size_t>(y) * width + x]; }
    float at(int x, int y) const { return probs[static_cast<size_t>(y) * width + x]; }

    void validate() const;  // throws std::invalid_argument
};

struct Segmentation {
    Mask mask;
    // Set when the mask covers less than 1% or more than 95% of the image
    // area; the mask is still usable but should be treated with suspicion.
    bool low_confidence = false;
};

// Classical distal-phalange segmenter: box-smoothed intensities, Otsu
// threshold (bright foreground), 5x5 morphological closing, largest
// 4-connected component. Components elongated like a whole finger
// (height > 1.8x width) are cropped to the top crop_fraction of the span
// between the fingertip and the widest row, a stand-in for cutting at the
// first crease; compact blobs are kept whole.
//
// Returns nullopt when no plausible foreground exists (near-constant image
// or degenerate threshold split); never returns a silent empty mask. The
// returned mask is always a single 4-connected component.
std::optional<Segmentation> segment_distal(const GrayImage& img, double crop_fraction = 0.6);

// Pixel-wise binary cross-entropy, summed over pixels (the training-loss
// convention); `mean` divides by the pixel count instead. Predictions are
// clamped to [1e-7, 1 - 1e-7] before the logs.
double seg_bce_loss(const ProbMask& pred, const Mask& gt, bool mean = false);

// |a ∩ b| / |a ∪ b|; 1.0 when both masks are empty.
double iou(const Mask& a, const Mask& b);

}  // namespace c2cl
