#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "c2cl/imaging.hpp"

namespace c2cl {

enum class MinutiaKind : std::uint8_t { ending = 0, bifurcation = 1 };

struct Minutia {
    double x = 0.0;
    double y = 0.0;
    double theta = 0.0;  // ridge direction, [0, 2pi)
    MinutiaKind kind = MinutiaKind::ending;
    double quality = 1.0;  // [0,1]
};

struct MinutiaeSet {
    std::vector<Minutia> minutiae;
    int width = 0;   // dimensions of the source image
    int height = 0;
    // Set when extraction found no usable ridge structure; the set is empty.
    bool no_ridge_structure = false;

    void validate() const;  // bounds, angle range, 4 px / 10 deg separation

    // One line per minutia: "x y theta_deg kind quality" with kind spelled
    // ending|bifurcation; header line "# w h".
    std::string to_text() const;
    static MinutiaeSet from_text(const std::string& text);
};

// Blockwise ridge direction (structure-tensor least squares) and coherence.
struct OrientationField {
    int block = 16;
    int blocks_x = 0;
    int blocks_y = 0;
    std::vector<double> angles;      // [0, pi), ridge direction per block
    std::vector<double> coherences;  // [0, 1]

    double angle(int bx, int by) const { return angles[static_cast<size_t>(by) * blocks_x + bx]; }
    double coherence(int bx, int by) const {
        return coherences[static_cast<size_t>(by) * blocks_x + bx];
    }
};

OrientationField orientation_field(const GrayImage& img, int block = 16);

// Even-symmetric Gabor filtering oriented per block, wavelength = period.
// Responses are renormalized to [0,1] around 0.5; a constant image maps to a
// constant 0.5. Low-coherence blocks pass through as 0.5 + (v - mean).
GrayImage gabor_enhance(const GrayImage& img, const OrientationField& of, double period);

// Exposed extraction stages, used directly by tests and the CLI.
// Ridges are assumed dark (contact-print convention); binarize marks ridge
// pixels 1 via blockwise mean thresholding of the enhanced image.
Mask binarize_ridges(const GrayImage& enhanced);
// Zhang-Suen thinning to a 1 px skeleton.
Mask thin_skeleton(const Mask& binary);
// Crossing number at a skeleton pixel: half the sum of absolute differences
// around its 8-neighborhood cycle. 1 = ridge ending, 3 = bifurcation.
int crossing_number(const Mask& skeleton, int x, int y);

// Full pipeline: orientation field, Gabor enhancement, binarization,
// thinning, crossing-number detection, then spur (< 8 px), opposing-pair
// (< 6 px), border, and duplicate (4 px / 10 deg) filtering. An image with
// no measurable ridge period yields an empty set with no_ridge_structure.
MinutiaeSet extract_minutiae(const GrayImage& img);

struct MatchResult {
    double score = 0.0;                                 // paired^2 / (|a| |b|), in [0,1]
    std::vector<std::pair<int, int>> correspondences;   // (index in a, index in b)
    double s = 1.0, theta = 0.0, tx = 0.0, ty = 0.0;    // consensus similarity transform a -> b
};

// Local-descriptor pairing (5 nearest neighbors, radial/angular features)
// followed by seeded RANSAC over a similarity transform. Symmetric in its
// arguments; empty input gives score 0. Deterministic for a fixed seed.
MatchResult match_minutiae(const MinutiaeSet& a, const MinutiaeSet& b,
                           std::uint64_t seed = 0x5eed);

struct CorrespondenceMetrics {
    int paired = 0;
    int missing = 0;
    int spurious = 0;
    double goodness_index = 0.0;  // (paired - missing - spurious) / |ref|, clamped to [-1,1]
};

// Optimal one-to-one assignment (maximum bipartite matching) under the
// position/direction tolerances; sets must already share a frame. Throws on
// an empty reference.
CorrespondenceMetrics correspondence_metrics(const MinutiaeSet& probe,
                                             const MinutiaeSet& reference, double tol_px = 12.0,
                                             double tol_deg = 30.0);

// (dims/8) x (dims/8) x 6 soft-binned Gaussian splat map. Channel c holds
// orientations near c*pi/3; each minutia contributes a peak-1 Gaussian
// (sigma in map cells) split linearly between its two nearest channels.
// Values are additive, so overlapping minutiae may exceed 1.
struct MinutiaeMap {
    int cells_x = 0;
    int cells_y = 0;
    std::vector<double> values;  // [y][x][channel], 6 channels

    double at(int x, int y, int c) const {
        return values[(static_cast<size_t>(y) * cells_x + x) * 6 + c];
    }
    double total_mass() const;
};

MinutiaeMap minutiae_map(const MinutiaeSet& set, int dims, double sigma = 1.5);

// Smallest absolute difference between two directions on the circle, in
// radians (result in [0, pi]).
double angular_difference(double a, double b);

}  // namespace c2cl
