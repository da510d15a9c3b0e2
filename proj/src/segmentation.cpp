#include "c2cl/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <stdexcept>

namespace c2cl {

ProbMask::ProbMask(int w, int h, float fill) : width(w), height(h) {
    if (w < 1 || h < 1) throw std::invalid_argument("ProbMask: dimensions must be >= 1");
    probs.assign(static_cast<size_t>(w) * h, fill);
}

void ProbMask::validate() const {
    if (width < 1 || height < 1) throw std::invalid_argument("ProbMask: dimensions must be >= 1");
    if (probs.size() != static_cast<size_t>(width) * height)
        throw std::invalid_argument("ProbMask: buffer size mismatch");
    for (float v : probs)
        if (!(v >= 0.0f && v <= 1.0f)) throw std::invalid_argument("ProbMask: value outside [0,1]");
}

namespace {

GrayImage box_smooth(const GrayImage& img, int radius) {
    GrayImage tmp(img.width, img.height);
    // Horizontal then vertical pass, edge-clamped.
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            double s = 0.0;
            for (int k = -radius; k <= radius; ++k)
                s += img.at(std::clamp(x + k, 0, img.width - 1), y);
            tmp.at(x, y) = static_cast<float>(s / (2 * radius + 1));
        }
    }
    GrayImage out(img.width, img.height);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            double s = 0.0;
            for (int k = -radius; k <= radius; ++k)
                s += tmp.at(x, std::clamp(y + k, 0, img.height - 1));
            out.at(x, y) = static_cast<float>(s / (2 * radius + 1));
        }
    }
    return out;
}

// Otsu threshold over a 256-bin histogram. Returns nullopt when the split is
// degenerate (either class empty at the best threshold, or no spread at all).
std::optional<double> otsu_threshold(const GrayImage& img) {
    constexpr int kBins = 256;
    std::vector<long long> hist(kBins, 0);
    for (float v : img.pixels) {
        int b = std::clamp(static_cast<int>(v * kBins), 0, kBins - 1);
        ++hist[b];
    }
    const double total = static_cast<double>(img.pixels.size());
    double sum_all = 0.0;
    for (int b = 0; b < kBins; ++b) sum_all += b * static_cast<double>(hist[b]);

    double best_var = -1.0;
    int best_t = -1;
    double w0 = 0.0, sum0 = 0.0;
    for (int t = 0; t < kBins - 1; ++t) {
        w0 += static_cast<double>(hist[t]);
        sum0 += t * static_cast<double>(hist[t]);
        const double w1 = total - w0;
        if (w0 <= 0.0 || w1 <= 0.0) continue;
        const double m0 = sum0 / w0;
        const double m1 = (sum_all - sum0) / w1;
        const double var = w0 * w1 * (m0 - m1) * (m0 - m1);
        if (var > best_var) {
            best_var = var;
            best_t = t;
        }
    }
    if (best_t < 0 || best_var <= 0.0) return std::nullopt;
    return (best_t + 1) / static_cast<double>(kBins);
}

Mask morph_close(const Mask& m, int half) {
    Mask dil(m.width, m.height, 0);
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) {
            std::uint8_t v = 0;
            for (int dy = -half; dy <= half && !v; ++dy)
                for (int dx = -half; dx <= half && !v; ++dx) {
                    const int xx = x + dx, yy = y + dy;
                    if (xx >= 0 && yy >= 0 && xx < m.width && yy < m.height && m.at(xx, yy)) v = 1;
                }
            dil.at(x, y) = v;
        }
    Mask ero(m.width, m.height, 0);
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) {
            std::uint8_t v = 1;
            for (int dy = -half; dy <= half && v; ++dy)
                for (int dx = -half; dx <= half && v; ++dx) {
                    const int xx = x + dx, yy = y + dy;
                    // Out-of-image counts as background so the closing cannot
                    // glue the mask to the border.
                    if (xx < 0 || yy < 0 || xx >= m.width || yy >= m.height || !dil.at(xx, yy)) v = 0;
                }
            ero.at(x, y) = v;
        }
    return ero;
}

Mask largest_component(const Mask& m) {
    Mask out(m.width, m.height, 0);
    std::vector<int> label(m.bits.size(), -1);
    int best_label = -1;
    size_t best_size = 0;
    int next = 0;
    for (int sy = 0; sy < m.height; ++sy)
        for (int sx = 0; sx < m.width; ++sx) {
            const size_t si = static_cast<size_t>(sy) * m.width + sx;
            if (!m.bits[si] || label[si] >= 0) continue;
            const int id = next++;
            size_t size = 0;
            std::queue<std::pair<int, int>> q;
            q.emplace(sx, sy);
            label[si] = id;
            while (!q.empty()) {
                auto [x, y] = q.front();
                q.pop();
                ++size;
                constexpr int dx[4] = {1, -1, 0, 0};
                constexpr int dy[4] = {0, 0, 1, -1};
                for (int k = 0; k < 4; ++k) {
                    const int xx = x + dx[k], yy = y + dy[k];
                    if (xx < 0 || yy < 0 || xx >= m.width || yy >= m.height) continue;
                    const size_t ii = static_cast<size_t>(yy) * m.width + xx;
                    if (m.bits[ii] && label[ii] < 0) {
                        label[ii] = id;
                        q.emplace(xx, yy);
                    }
                }
            }
            if (size > best_size) {
                best_size = size;
                best_label = id;
            }
        }
    if (best_label < 0) return out;
    for (size_t i = 0; i < m.bits.size(); ++i) out.bits[i] = label[i] == best_label ? 1 : 0;
    return out;
}

}  // namespace

std::optional<Segmentation> segment_distal(const GrayImage& img, double crop_fraction) {
    img.validate();
    if (!(crop_fraction > 0.0 && crop_fraction <= 1.0))
        throw std::invalid_argument("segment_distal: crop_fraction must be in (0,1]");

    float lo = 1.0f, hi = 0.0f;
    for (float v : img.pixels) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi - lo < 1.0f / 255.0f) return std::nullopt;  // no separable foreground

    const GrayImage smooth = box_smooth(img, 2);
    const auto thr = otsu_threshold(smooth);
    if (!thr) return std::nullopt;

    Mask raw(img.width, img.height, 0);
    for (size_t i = 0; i < smooth.pixels.size(); ++i) raw.bits[i] = smooth.pixels[i] >= *thr ? 1 : 0;

    Mask comp = largest_component(morph_close(raw, 2));
    if (comp.area() == 0) return std::nullopt;

    // Component extents and per-row widths.
    int r_min = img.height, r_max = -1, c_min = img.width, c_max = -1;
    std::vector<int> row_width(img.height, 0);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            if (comp.at(x, y)) {
                ++row_width[y];
                r_min = std::min(r_min, y);
                r_max = std::max(r_max, y);
                c_min = std::min(c_min, x);
                c_max = std::max(c_max, x);
            }
    const int comp_h = r_max - r_min + 1;
    const int comp_w = c_max - c_min + 1;

    // Whole-finger shapes are tall; cut at crop_fraction of the way from the
    // fingertip to the widest row. Compact blobs (already distal-like) pass
    // through untouched.
    if (comp_h > static_cast<int>(1.8 * comp_w)) {
        int widest = r_min;
        for (int y = r_min; y <= r_max; ++y)
            if (row_width[y] > row_width[widest]) widest = y;
        if (widest > r_min) {
            const int cut = r_min + static_cast<int>(std::lround(crop_fraction * (widest - r_min)));
            for (int y = cut + 1; y <= r_max; ++y)
                for (int x = 0; x < img.width; ++x) comp.at(x, y) = 0;
            comp = largest_component(comp);  // cropping can split the shape
            if (comp.area() == 0) return std::nullopt;
        }
    }

    Segmentation seg{std::move(comp), false};
    const double frac = static_cast<double>(seg.mask.area()) / (img.pixels.size());
    seg.low_confidence = frac < 0.01 || frac > 0.95;
    return seg;
}

double seg_bce_loss(const ProbMask& pred, const Mask& gt, bool mean) {
    pred.validate();
    gt.validate();
    if (pred.width != gt.width || pred.height != gt.height)
        throw std::invalid_argument("seg_bce_loss: dimension mismatch");
    constexpr double eps = 1e-7;
    double loss = 0.0;
    for (size_t i = 0; i < pred.probs.size(); ++i) {
        const double p = std::clamp(static_cast<double>(pred.probs[i]), eps, 1.0 - eps);
        loss -= gt.bits[i] ? std::log(p) : std::log(1.0 - p);
    }
    return mean ? loss / static_cast<double>(pred.probs.size()) : loss;
}

double iou(const Mask& a, const Mask& b) {
    a.validate();
    b.validate();
    if (a.width != b.width || a.height != b.height)
        throw std::invalid_argument("iou: dimension mismatch");
    size_t inter = 0, uni = 0;
    for (size_t i = 0; i < a.bits.size(); ++i) {
        inter += a.bits[i] & b.bits[i];
        uni += a.bits[i] | b.bits[i];
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace c2cl
