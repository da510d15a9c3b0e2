#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <queue>
#include <random>

#include "c2cl/segmentation.hpp"
#include "support/synthetic.hpp"

using namespace c2cl;
using namespace c2cl::testsupport;

namespace {

// Breadth-first count of 4-connected components, independent of the library
// labeling code.
int count_components(const Mask& m) {
    std::vector<char> seen(m.bits.size(), 0);
    int n = 0;
    for (int sy = 0; sy < m.height; ++sy)
        for (int sx = 0; sx < m.width; ++sx) {
            const size_t si = static_cast<size_t>(sy) * m.width + sx;
            if (!m.bits[si] || seen[si]) continue;
            ++n;
            std::queue<std::pair<int, int>> q;
            q.emplace(sx, sy);
            seen[si] = 1;
            while (!q.empty()) {
                auto [x, y] = q.front();
                q.pop();
                const int dx[4] = {1, -1, 0, 0}, dy[4] = {0, 0, 1, -1};
                for (int k = 0; k < 4; ++k) {
                    const int xx = x + dx[k], yy = y + dy[k];
                    if (xx < 0 || yy < 0 || xx >= m.width || yy >= m.height) continue;
                    const size_t ii = static_cast<size_t>(yy) * m.width + xx;
                    if (m.bits[ii] && !seen[ii]) {
                        seen[ii] = 1;
                        q.emplace(xx, yy);
                    }
                }
            }
        }
    return n;
}

}  // namespace

TEST_CASE("segment_distal recovers a compact bright blob") {
    const GrayImage img = finger_blob(200, 200, 100, 100, 70, 80, 0.8f, 0.05f);
    const auto seg = segment_distal(img);
    REQUIRE(seg.has_value());
    CHECK_FALSE(seg->low_confidence);
    const Mask truth = ellipse_mask(200, 200, 100, 100, 70, 80);
    CHECK(iou(seg->mask, truth) >= 0.9);
    CHECK(count_components(seg->mask) == 1);
}

TEST_CASE("segment_distal returns nothing on near-constant images") {
    CHECK_FALSE(segment_distal(GrayImage(64, 64, 0.5f)).has_value());
    CHECK_FALSE(segment_distal(GrayImage(64, 64, 0.0f)).has_value());
    // Sub-quantization noise is still degenerate.
    GrayImage img(64, 64, 0.5f);
    img.at(3, 3) = 0.5f + 0.5f / 600.0f;
    CHECK_FALSE(segment_distal(img).has_value());
}

TEST_CASE("segment_distal keeps only the largest of two blobs") {
    GrayImage img(240, 160, 0.05f);
    const GrayImage big = finger_blob(240, 160, 70, 80, 50, 60, 0.85f, 0.05f);
    const GrayImage small = finger_blob(240, 160, 190, 60, 18, 20, 0.85f, 0.05f);
    for (size_t i = 0; i < img.pixels.size(); ++i)
        img.pixels[i] = std::max(big.pixels[i], small.pixels[i]);

    const auto seg = segment_distal(img);
    REQUIRE(seg.has_value());
    CHECK(count_components(seg->mask) == 1);
    CHECK(seg->mask.at(70, 80) == 1);   // center of the big blob
    CHECK(seg->mask.at(190, 60) == 0);  // center of the small one
    const Mask truth = ellipse_mask(240, 160, 70, 80, 50, 60);
    CHECK(iou(seg->mask, truth) >= 0.85);
}

TEST_CASE("segment_distal crops elongated whole-finger shapes to the distal part") {
    // Tall capsule: half-disc tip on top of a long stem, widest at the stem.
    GrayImage img(200, 400, 0.05f);
    for (int y = 0; y < 400; ++y)
        for (int x = 0; x < 200; ++x) {
            const bool stem = y >= 60 && y <= 380 && std::abs(x - 100) <= 45;
            const double ex = (x - 100) / 45.0, ey = (y - 60) / 30.0;
            const bool tip = ex * ex + ey * ey <= 1.0;
            if (stem || tip) img.at(x, y) = 0.85f;
        }

    const auto seg = segment_distal(img, 0.6);
    REQUIRE(seg.has_value());

    int r_min = 400, r_max = -1;
    for (int y = 0; y < 400; ++y)
        for (int x = 0; x < 200; ++x)
            if (seg->mask.at(x, y)) {
                r_min = std::min(r_min, y);
                r_max = std::max(r_max, y);
            }
    // The fingertip edge survives, the far end of the stem does not.
    CHECK(r_min < 60);
    CHECK(r_max < 320);
    CHECK(count_components(seg->mask) == 1);

    // A compact blob of the same material is left uncropped.
    const GrayImage blob = finger_blob(200, 200, 100, 100, 80, 85, 0.85f, 0.05f);
    const auto whole = segment_distal(blob, 0.6);
    REQUIRE(whole.has_value());
    int b_max = -1;
    for (int y = 0; y < 200; ++y)
        for (int x = 0; x < 200; ++x)
            if (whole->mask.at(x, y)) b_max = std::max(b_max, y);
    CHECK(b_max > 170);
}

TEST_CASE("segment_distal flags implausibly small and large masks") {
    // ~0.2% coverage: usable but suspicious.
    const GrayImage tiny = finger_blob(200, 200, 100, 100, 5, 5, 0.9f, 0.02f);
    const auto seg = segment_distal(tiny);
    REQUIRE(seg.has_value());
    CHECK(seg->low_confidence);

    const GrayImage normal = finger_blob(200, 200, 100, 100, 60, 70, 0.9f, 0.02f);
    const auto ok = segment_distal(normal);
    REQUIRE(ok.has_value());
    CHECK_FALSE(ok->low_confidence);
}

TEST_CASE("segment_distal validates crop_fraction") {
    const GrayImage img = finger_blob(64, 64, 32, 32, 20, 22);
    CHECK_THROWS_AS(segment_distal(img, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(segment_distal(img, 1.5), std::invalid_argument);
}

TEST_CASE("bce loss matches a direct per-pixel computation") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<float> uni(0.0f, 1.0f);
    ProbMask pred(17, 13);
    Mask gt(17, 13, 0);
    for (auto& p : pred.probs) p = uni(rng);
    for (auto& b : gt.bits) b = rng() & 1;
    // Exercise the clamp on exact 0 and 1 predictions.
    pred.probs[0] = 0.0f;
    pred.probs[1] = 1.0f;

    double expect = 0.0;
    for (size_t i = 0; i < pred.probs.size(); ++i) {
        const double p = std::clamp(static_cast<double>(pred.probs[i]), 1e-7, 1.0 - 1e-7);
        expect -= gt.bits[i] ? std::log(p) : std::log1p(-p);
    }
    CHECK(seg_bce_loss(pred, gt) == doctest::Approx(expect).epsilon(1e-9));
    CHECK(seg_bce_loss(pred, gt, true) ==
          doctest::Approx(expect / (17.0 * 13.0)).epsilon(1e-9));
    CHECK_THROWS_AS(seg_bce_loss(pred, Mask(3, 3, 0)), std::invalid_argument);
}

TEST_CASE("bce loss is minimal for confident correct predictions") {
    Mask gt(8, 8, 0);
    for (int x = 0; x < 8; ++x) gt.at(x, 0) = 1;
    ProbMask good(8, 8, 0.001f);
    for (int x = 0; x < 8; ++x) good.at(x, 0) = 0.999f;
    ProbMask bad(8, 8, 0.999f);
    for (int x = 0; x < 8; ++x) bad.at(x, 0) = 0.001f;
    CHECK(seg_bce_loss(good, gt) < seg_bce_loss(bad, gt));
    CHECK(seg_bce_loss(good, gt) < 0.12);  // 64 * -log(0.999) plus slack
}

TEST_CASE("iou endpoints and a hand-computed overlap") {
    Mask a(10, 10, 0), b(10, 10, 0);
    CHECK(iou(a, b) == 1.0);  // both empty by convention

    // a: rows 0..4 (50 px), b: rows 3..7 (50 px), overlap rows 3..4 (20 px).
    for (int y = 0; y <= 4; ++y)
        for (int x = 0; x < 10; ++x) a.at(x, y) = 1;
    for (int y = 3; y <= 7; ++y)
        for (int x = 0; x < 10; ++x) b.at(x, y) = 1;
    CHECK(iou(a, b) == doctest::Approx(20.0 / 80.0));
    CHECK(iou(a, a) == 1.0);

    Mask c(10, 10, 0);
    c.at(9, 9) = 1;
    CHECK(iou(a, c) == 0.0);
    CHECK_THROWS_AS(iou(a, Mask(4, 4, 0)), std::invalid_argument);
}

TEST_CASE("prob mask validation") {
    ProbMask p(4, 4, 0.5f);
    CHECK_NOTHROW(p.validate());
    p.probs[2] = 1.5f;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    CHECK_THROWS_AS(ProbMask(0, 3), std::invalid_argument);
}
