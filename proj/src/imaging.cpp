#include "c2cl/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace c2cl {

namespace {

constexpr int kHistBins = 256;

int bin_of(float v) {
    int b = static_cast<int>(v * static_cast<float>(kHistBins));
    return std::clamp(b, 0, kHistBins - 1);
}

}  // namespace

GrayImage::GrayImage(int w, int h, float fill) : width(w), height(h) {
    if (w < 1 || h < 1) throw std::invalid_argument("GrayImage: dimensions must be >= 1");
    pixels.assign(static_cast<size_t>(w) * h, fill);
}

void GrayImage::validate() const {
    if (width < 1 || height < 1) throw std::invalid_argument("GrayImage: dimensions must be >= 1");
    if (pixels.size() != static_cast<size_t>(width) * height)
        throw std::invalid_argument("GrayImage: pixel buffer size mismatch");
    if (ppi && *ppi <= 0.0) throw std::invalid_argument("GrayImage: ppi must be positive");
    for (float v : pixels) {
        if (!(v >= 0.0f && v <= 1.0f)) throw std::invalid_argument("GrayImage: pixel outside [0,1]");
    }
}

Mask::Mask(int w, int h, std::uint8_t fill) : width(w), height(h) {
    if (w < 1 || h < 1) throw std::invalid_argument("Mask: dimensions must be >= 1");
    if (fill > 1) throw std::invalid_argument("Mask: values must be 0 or 1");
    bits.assign(static_cast<size_t>(w) * h, fill);
}

size_t Mask::area() const {
    size_t n = 0;
    for (auto b : bits) n += b;
    return n;
}

void Mask::validate() const {
    if (width < 1 || height < 1) throw std::invalid_argument("Mask: dimensions must be >= 1");
    if (bits.size() != static_cast<size_t>(width) * height)
        throw std::invalid_argument("Mask: bit buffer size mismatch");
    for (auto b : bits)
        if (b > 1) throw std::invalid_argument("Mask: values must be 0 or 1");
}

std::pair<double, double> PadRecord::to_original(double x, double y, int canvas) const {
    const double sx = static_cast<double>(content_width(canvas)) / orig_width;
    const double sy = static_cast<double>(content_height(canvas)) / orig_height;
    return {(x - pad_left) / sx, (y - pad_top) / sy};
}

std::pair<double, double> PadRecord::to_canvas(double x, double y, int canvas) const {
    const double sx = static_cast<double>(content_width(canvas)) / orig_width;
    const double sy = static_cast<double>(content_height(canvas)) / orig_height;
    return {x * sx + pad_left, y * sy + pad_top};
}

// ---------------------------------------------------------------------------
// CLAHE
// ---------------------------------------------------------------------------

namespace {

struct TileGrid {
    int tx = 1, ty = 1;
    std::vector<int> x0, x1, y0, y1;  // half-open pixel ranges per tile row/col
    std::vector<double> cx, cy;       // tile centers

    TileGrid(int w, int h, int tiles_x, int tiles_y) {
        tx = std::clamp(tiles_x, 1, w);
        ty = std::clamp(tiles_y, 1, h);
        for (int t = 0; t < tx; ++t) {
            x0.push_back(static_cast<int>(static_cast<long long>(t) * w / tx));
            x1.push_back(static_cast<int>(static_cast<long long>(t + 1) * w / tx));
            cx.push_back(0.5 * (x0[t] + x1[t] - 1));
        }
        for (int t = 0; t < ty; ++t) {
            y0.push_back(static_cast<int>(static_cast<long long>(t) * h / ty));
            y1.push_back(static_cast<int>(static_cast<long long>(t + 1) * h / ty));
            cy.push_back(0.5 * (y0[t] + y1[t] - 1));
        }
    }
};

// Clip histogram at clip_limit * mean bin height and redistribute the excess
// uniformly, re-clipping until the excess is gone. Whatever cannot be
// absorbed (only possible near clip_limit = 1, where the cap equals the
// mean) is spread uniformly in a final pass, so total mass is preserved at
// the price of a slight cap overrun.
void clip_histogram(std::vector<double>& hist, double clip_limit) {
    double total = 0.0;
    for (double v : hist) total += v;
    if (total <= 0.0) return;
    const double cap = std::max(clip_limit, 1.0) * total / kHistBins;
    double excess = 0.0;
    for (double& v : hist) {
        if (v > cap) {
            excess += v - cap;
            v = cap;
        }
    }
    for (int iter = 0; iter < 64 && excess > 1e-12 * total; ++iter) {
        const double add = excess / kHistBins;
        excess = 0.0;
        for (double& v : hist) {
            v += add;
            if (v > cap) {
                excess += v - cap;
                v = cap;
            }
        }
    }
    if (excess > 0.0) {
        const double add = excess / kHistBins;
        for (double& v : hist) v += add;
    }
}

void check_clahe_args(const GrayImage& img, double clip_limit, int tiles_x, int tiles_y) {
    img.validate();
    if (!(clip_limit > 0.0)) throw std::invalid_argument("clahe: clip_limit must be positive");
    if (tiles_x < 1 || tiles_y < 1) throw std::invalid_argument("clahe: tile grid must be at least 1x1");
}

}  // namespace

std::vector<std::vector<double>> clahe_tile_histograms(const GrayImage& img, double clip_limit,
                                                       int tiles_x, int tiles_y) {
    check_clahe_args(img, clip_limit, tiles_x, tiles_y);
    TileGrid grid(img.width, img.height, tiles_x, tiles_y);
    std::vector<std::vector<double>> hists;
    hists.reserve(static_cast<size_t>(grid.tx) * grid.ty);
    for (int tyi = 0; tyi < grid.ty; ++tyi) {
        for (int txi = 0; txi < grid.tx; ++txi) {
            std::vector<double> h(kHistBins, 0.0);
            for (int y = grid.y0[tyi]; y < grid.y1[tyi]; ++y)
                for (int x = grid.x0[txi]; x < grid.x1[txi]; ++x) h[bin_of(img.at(x, y))] += 1.0;
            clip_histogram(h, clip_limit);
            hists.push_back(std::move(h));
        }
    }
    return hists;
}

GrayImage clahe(const GrayImage& img, double clip_limit, int tiles_x, int tiles_y) {
    check_clahe_args(img, clip_limit, tiles_x, tiles_y);
    TileGrid grid(img.width, img.height, tiles_x, tiles_y);
    auto hists = clahe_tile_histograms(img, clip_limit, tiles_x, tiles_y);

    // Per-tile transfer functions: cumulative histogram normalized by mass.
    std::vector<std::vector<double>> maps(hists.size());
    for (size_t i = 0; i < hists.size(); ++i) {
        auto& m = maps[i];
        m.resize(kHistBins);
        double total = 0.0;
        for (double v : hists[i]) total += v;
        double run = 0.0;
        for (int b = 0; b < kHistBins; ++b) {
            run += hists[i][b];
            m[b] = total > 0.0 ? run / total : 0.0;
        }
    }

    GrayImage out(img.width, img.height);
    out.ppi = img.ppi;
    for (int y = 0; y < img.height; ++y) {
        // Bracketing tile rows for vertical blending.
        int t1y = 0;
        while (t1y + 1 < grid.ty && grid.cy[t1y + 1] <= y) ++t1y;
        int t2y = (t1y + 1 < grid.ty && y >= grid.cy[t1y]) ? t1y + 1 : t1y;
        if (y < grid.cy[t1y]) t2y = t1y;
        double wy = 0.0;
        if (t2y != t1y) wy = (y - grid.cy[t1y]) / (grid.cy[t2y] - grid.cy[t1y]);

        for (int x = 0; x < img.width; ++x) {
            int t1x = 0;
            while (t1x + 1 < grid.tx && grid.cx[t1x + 1] <= x) ++t1x;
            int t2x = (t1x + 1 < grid.tx && x >= grid.cx[t1x]) ? t1x + 1 : t1x;
            if (x < grid.cx[t1x]) t2x = t1x;
            double wx = 0.0;
            if (t2x != t1x) wx = (x - grid.cx[t1x]) / (grid.cx[t2x] - grid.cx[t1x]);

            const int b = bin_of(img.at(x, y));
            const double v00 = maps[static_cast<size_t>(t1y) * grid.tx + t1x][b];
            const double v10 = maps[static_cast<size_t>(t1y) * grid.tx + t2x][b];
            const double v01 = maps[static_cast<size_t>(t2y) * grid.tx + t1x][b];
            const double v11 = maps[static_cast<size_t>(t2y) * grid.tx + t2x][b];
            const double v = (1 - wy) * ((1 - wx) * v00 + wx * v10) + wy * ((1 - wx) * v01 + wx * v11);
            out.at(x, y) = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    }
    return out;
}

GrayImage invert(const GrayImage& img) {
    img.validate();
    GrayImage out = img;
    for (float& v : out.pixels) v = 1.0f - v;
    return out;
}

GrayImage resize_bilinear(const GrayImage& img, int new_w, int new_h) {
    img.validate();
    if (new_w < 1 || new_h < 1) throw std::invalid_argument("resize_bilinear: target dims must be >= 1");
    GrayImage out(new_w, new_h);
    out.ppi = img.ppi;
    const double sx = static_cast<double>(img.width) / new_w;
    const double sy = static_cast<double>(img.height) / new_h;
    for (int y = 0; y < new_h; ++y) {
        const double fy = (y + 0.5) * sy - 0.5;
        const int y0 = std::clamp(static_cast<int>(std::floor(fy)), 0, img.height - 1);
        const int y1 = std::min(y0 + 1, img.height - 1);
        const double wy = std::clamp(fy - y0, 0.0, 1.0);
        for (int x = 0; x < new_w; ++x) {
            const double fx = (x + 0.5) * sx - 0.5;
            const int x0 = std::clamp(static_cast<int>(std::floor(fx)), 0, img.width - 1);
            const int x1 = std::min(x0 + 1, img.width - 1);
            const double wx = std::clamp(fx - x0, 0.0, 1.0);
            const double v = (1 - wy) * ((1 - wx) * img.at(x0, y0) + wx * img.at(x1, y0)) +
                             wy * ((1 - wx) * img.at(x0, y1) + wx * img.at(x1, y1));
            out.at(x, y) = static_cast<float>(v);
        }
    }
    return out;
}

std::pair<GrayImage, PadRecord> resize_pad(const GrayImage& img, int target) {
    img.validate();
    if (target < 1) throw std::invalid_argument("resize_pad: target must be >= 1");

    const double s = static_cast<double>(target) / std::max(img.width, img.height);
    int cw, ch;
    if (img.width >= img.height) {
        cw = target;
        ch = std::max(1, static_cast<int>(std::lround(img.height * s)));
    } else {
        ch = target;
        cw = std::max(1, static_cast<int>(std::lround(img.width * s)));
    }

    PadRecord rec;
    rec.scale_factor = s;
    rec.orig_width = img.width;
    rec.orig_height = img.height;
    rec.pad_left = (target - cw) / 2;
    rec.pad_right = target - cw - rec.pad_left;
    rec.pad_top = (target - ch) / 2;
    rec.pad_bottom = target - ch - rec.pad_top;

    GrayImage content =
        (cw == img.width && ch == img.height) ? img : resize_bilinear(img, cw, ch);

    GrayImage out(target, target, 0.0f);
    out.ppi = img.ppi ? std::optional<double>(*img.ppi * s) : std::nullopt;
    for (int y = 0; y < ch; ++y)
        for (int x = 0; x < cw; ++x) out.at(x + rec.pad_left, y + rec.pad_top) = content.at(x, y);
    return {std::move(out), rec};
}

GrayImage apply_mask(const GrayImage& img, const Mask& mask) {
    img.validate();
    mask.validate();
    if (img.width != mask.width || img.height != mask.height)
        throw std::invalid_argument("apply_mask: image and mask dimensions differ");
    GrayImage out = img;
    for (size_t i = 0; i < out.pixels.size(); ++i)
        if (!mask.bits[i]) out.pixels[i] = 0.0f;
    return out;
}

}  // namespace c2cl
