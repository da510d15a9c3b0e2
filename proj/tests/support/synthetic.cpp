#include "support/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace c2cl::testsupport {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

GrayImage stripes(int w, int h, double period, double ridge_angle, double contrast, double phase) {
    GrayImage img(w, h);
    const double nx = std::cos(ridge_angle + kPi / 2.0);
    const double ny = std::sin(ridge_angle + kPi / 2.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double d = x * nx + y * ny;
            const double v = 0.5 + 0.5 * contrast * std::cos(2.0 * kPi * d / period + phase);
            img.at(x, y) = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    return img;
}

GrayImage finger_blob(int w, int h, double cx, double cy, double rx, double ry, float fg,
                      float bg) {
    GrayImage img(w, h, bg);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double ex = (x - cx) / rx;
            const double ey = (y - cy) / ry;
            if (ex * ex + ey * ey <= 1.0) img.at(x, y) = fg;
        }
    return img;
}

Mask ellipse_mask(int w, int h, double cx, double cy, double rx, double ry) {
    Mask m(w, h, 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double ex = (x - cx) / rx;
            const double ey = (y - cy) / ry;
            if (ex * ex + ey * ey <= 1.0) m.at(x, y) = 1;
        }
    return m;
}

GrayImage master_print(int size, std::uint64_t seed, double period) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);

    GrayImage img(size, size);
    for (auto& p : img.pixels) p = static_cast<float>(uni(rng));

    // Smooth orientation field: random unit vectors in double-angle space on
    // a coarse grid, bilinearly interpolated (wrap-safe).
    const int grid = 3;
    std::vector<std::pair<double, double>> nodes(grid * grid);
    for (auto& n : nodes) {
        const double a = uni(rng) * 2.0 * kPi;
        n = {std::cos(a), std::sin(a)};
    }
    const int block = 16;
    OrientationField of;
    of.block = block;
    of.blocks_x = (size + block - 1) / block;
    of.blocks_y = (size + block - 1) / block;
    of.angles.resize(static_cast<size_t>(of.blocks_x) * of.blocks_y);
    of.coherences.assign(static_cast<size_t>(of.blocks_x) * of.blocks_y, 1.0);
    for (int by = 0; by < of.blocks_y; ++by)
        for (int bx = 0; bx < of.blocks_x; ++bx) {
            const double gx = (grid - 1) * (bx + 0.5) / of.blocks_x;
            const double gy = (grid - 1) * (by + 0.5) / of.blocks_y;
            const int x0 = std::min(static_cast<int>(gx), grid - 2);
            const int y0 = std::min(static_cast<int>(gy), grid - 2);
            const double fx = gx - x0, fy = gy - y0;
            double u = 0.0, v = 0.0;
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx) {
                    const double wgt = (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy);
                    const auto& n = nodes[(y0 + dy) * grid + (x0 + dx)];
                    u += wgt * n.first;
                    v += wgt * n.second;
                }
            double angle = 0.5 * std::atan2(v, u);
            if (angle < 0) angle += kPi;
            of.angles[static_cast<size_t>(by) * of.blocks_x + bx] = angle;
        }

    for (int iter = 0; iter < 6; ++iter) img = gabor_enhance(img, of, period);

    // Finger silhouette: ridge pattern inside, paper white outside.
    const Mask m = ellipse_mask(size, size, size / 2.0, size / 2.0, size * 0.42, size * 0.47);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            if (!m.at(x, y)) img.at(x, y) = 1.0f;
    return img;
}

GrayImage render_contactless(const GrayImage& master, const DegradeParams& p, std::uint64_t seed) {
    // Photometric pass: print in a narrow band on a dark background.
    const double lo = 0.35;
    const double hi = lo + 0.5 * p.contrast;
    GrayImage shaded(master.width, master.height, 0.03f);
    for (int y = 0; y < master.height; ++y)
        for (int x = 0; x < master.width; ++x) {
            double v = master.at(x, y);
            if (p.light_ridges) v = 1.0 - v;
            shaded.at(x, y) = static_cast<float>(lo + (hi - lo) * v);
        }

    AffineParams affine;
    affine.s = p.scale;
    affine.theta = p.angle;
    affine.tx = p.tx;
    affine.ty = p.ty;

    TPSField tps = TPSField::identity(4, master.width, master.height);
    if (p.tps_amp > 0.0) {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> amp(-p.tps_amp, p.tps_amp);
        for (auto& d : tps.displacements) d = {amp(rng), amp(rng)};
    }
    return warp_image(shaded, affine, tps);
}

MinutiaeSet random_minutiae(int count, int width, int height, std::uint64_t seed, double margin) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ux(margin, width - 1 - margin);
    std::uniform_real_distribution<double> uy(margin, height - 1 - margin);
    std::uniform_real_distribution<double> ut(0.0, 2.0 * kPi - 1e-9);
    std::uniform_real_distribution<double> uq(0.3, 1.0);

    MinutiaeSet set;
    set.width = width;
    set.height = height;
    int attempts = 0;
    while (static_cast<int>(set.minutiae.size()) < count) {
        if (++attempts > count * 1000)
            throw std::runtime_error("random_minutiae: cannot place points this densely");
        Minutia m;
        m.x = ux(rng);
        m.y = uy(rng);
        m.theta = ut(rng);
        m.kind = (set.minutiae.size() % 2 == 0) ? MinutiaKind::ending : MinutiaKind::bifurcation;
        m.quality = uq(rng);
        bool ok = true;
        for (const auto& o : set.minutiae) {
            const double dx = o.x - m.x, dy = o.y - m.y;
            if (dx * dx + dy * dy < 8.0 * 8.0) {
                ok = false;
                break;
            }
        }
        if (ok) set.minutiae.push_back(m);
    }
    return set;
}

MinutiaeSet transform_minutiae(const MinutiaeSet& in, double scale, double theta, double dx,
                               double dy) {
    MinutiaeSet out = in;
    const double cx = (in.width - 1) / 2.0;
    const double cy = (in.height - 1) / 2.0;
    const double c = std::cos(theta), s = std::sin(theta);
    for (auto& m : out.minutiae) {
        const double ex = m.x - cx, ey = m.y - cy;
        m.x = cx + scale * (c * ex - s * ey) + dx;
        m.y = cy + scale * (s * ex + c * ey) + dy;
        double a = std::fmod(m.theta + theta, 2.0 * kPi);
        if (a < 0) a += 2.0 * kPi;
        m.theta = a;
    }
    return out;
}

Embedding random_embedding(int dim, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Embedding e;
    e.values.resize(dim);
    for (auto& v : e.values) v = gauss(rng);
    e.l2_normalize();
    return e;
}

Template random_template(const std::string& subject, const std::string& finger, int impression,
                         CaptureKind kind, std::uint64_t seed) {
    Template t;
    t.subject_id = subject;
    t.finger_position = finger;
    t.impression_index = impression;
    t.capture_kind = kind;
    t.embedding = random_embedding(192, seed);
    t.minutiae = random_minutiae(24, 480, 480, seed ^ 0x9e3779b97f4a7c15ull);
    return t;
}

}  // namespace c2cl::testsupport
