// imaging.hpp - core raster types and intensity-domain enhancement primitives.
//
// All images live in a normalized [0,1] intensity domain; 8-bit files are
// converted on load (v/255) and save (round(v*255)). Every operation here is
// pure: same input, bit-identical output.

#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

namespace c2cl {

/// Single-channel raster, row-major, values in [0,1].
struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<float> pixels;
    std::optional<double> ppi;  // pixels per inch, when known

    GrayImage() = default;
    GrayImage(int w, int h, float fill = 0.0f);

    float at(int x, int y) const { return pixels[static_cast<size_t>(y) * width + x]; }
    float& at(int x, int y) { return pixels[static_cast<size_t>(y) * width + x]; }
    bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
    size_t size() const { return pixels.size(); }
    bool empty() const { return width <= 0 || height <= 0; }

    /// Throws std::invalid_argument if dimensions or value range are violated.
    void validate() const;
};

/// Binary raster used for distal-phalange segmentation masks.
struct Mask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits;  // strictly 0 or 1

    Mask() = default;
    Mask(int w, int h, std::uint8_t fill = 0);

    std::uint8_t at(int x, int y) const { return bits[static_cast<size_t>(y) * width + x]; }
    std::uint8_t& at(int x, int y) { return bits[static_cast<size_t>(y) * width + x]; }
    size_t area() const;  // number of set pixels
    bool empty() const { return width <= 0 || height <= 0; }

    void validate() const;
};

/// Records how resize_pad mapped an input image onto the square canvas, so
/// canvas coordinates can be taken back to the original frame. scale_factor
/// is the nominal isotropic scale; the coordinate maps use per-axis effective
/// scales derived from the content rectangle so that corners map exactly.
struct PadRecord {
    double scale_factor = 1.0;
    int pad_left = 0;
    int pad_top = 0;
    int pad_right = 0;
    int pad_bottom = 0;
    int orig_width = 0;
    int orig_height = 0;

    int content_width(int canvas) const { return canvas - pad_left - pad_right; }
    int content_height(int canvas) const { return canvas - pad_top - pad_bottom; }

    /// Canvas coordinate -> original-image coordinate.
    std::pair<double, double> to_original(double x, double y, int canvas) const;
    /// Original-image coordinate -> canvas coordinate.
    std::pair<double, double> to_canvas(double x, double y, int canvas) const;
};

/// Contrast-limited adaptive histogram equalization over a tiles_x x tiles_y
/// grid with bilinear inter-tile blending. clip_limit is in units of the mean
/// histogram bin height (values below 1 behave as 1); 256 bins. Tile counts
/// larger than the image collapse to one tile per pixel row/column.
GrayImage clahe(const GrayImage& img, double clip_limit = 2.0, int tiles_x = 8, int tiles_y = 8);

/// Clipped per-tile histograms as used by clahe, tile-major (ty * tiles_x + tx),
/// 256 bins each. Exposed so the clip property is checkable from outside.
std::vector<std::vector<double>> clahe_tile_histograms(const GrayImage& img, double clip_limit,
                                                       int tiles_x, int tiles_y);

/// Pixel gray-level inversion, v -> 1 - v. Exact involution on dyadic values.
GrayImage invert(const GrayImage& img);

/// Isotropically scales the image so its longer side equals `target`, centers
/// it on a target x target canvas and fills the remainder with 0.
std::pair<GrayImage, PadRecord> resize_pad(const GrayImage& img, int target = 480);

/// Zeroes pixels where the mask is 0; mask dimensions must match.
GrayImage apply_mask(const GrayImage& img, const Mask& mask);

/// Plain bilinear resample to new dimensions (edge-clamped sampling).
GrayImage resize_bilinear(const GrayImage& img, int new_w, int new_h);

}  // namespace c2cl
