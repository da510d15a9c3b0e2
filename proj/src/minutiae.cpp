#include "c2cl/minutiae.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "c2cl/geometry.hpp"

namespace c2cl {

double angular_difference(double a, double b) {
    double d = std::fmod(std::abs(a - b), 2.0 * M_PI);
    return std::min(d, 2.0 * M_PI - d);
}

namespace {

double wrap_2pi(double a) {
    a = std::fmod(a, 2.0 * M_PI);
    return a < 0.0 ? a + 2.0 * M_PI : a;
}

}  // namespace

void MinutiaeSet::validate() const {
    for (const auto& m : minutiae) {
        if (!(m.theta >= 0.0 && m.theta < 2.0 * M_PI))
            throw std::invalid_argument("MinutiaeSet: theta outside [0, 2pi)");
        if (!(m.quality >= 0.0 && m.quality <= 1.0))
            throw std::invalid_argument("MinutiaeSet: quality outside [0,1]");
        if (width > 0 && height > 0 &&
            (m.x < 0.0 || m.y < 0.0 || m.x > width - 1 || m.y > height - 1))
            throw std::invalid_argument("MinutiaeSet: minutia outside image bounds");
    }
    for (size_t i = 0; i < minutiae.size(); ++i)
        for (size_t j = i + 1; j < minutiae.size(); ++j) {
            const double dx = minutiae[i].x - minutiae[j].x;
            const double dy = minutiae[i].y - minutiae[j].y;
            if (dx * dx + dy * dy < 16.0 &&
                angular_difference(minutiae[i].theta, minutiae[j].theta) < 10.0 * M_PI / 180.0)
                throw std::invalid_argument("MinutiaeSet: duplicate minutiae (< 4 px, < 10 deg)");
        }
}

std::string MinutiaeSet::to_text() const {
    std::ostringstream out;
    out << "# " << width << " " << height << "\n";
    out.precision(6);
    out << std::fixed;
    for (const auto& m : minutiae)
        out << m.x << " " << m.y << " " << m.theta * 180.0 / M_PI << " "
            << (m.kind == MinutiaKind::ending ? "ending" : "bifurcation") << " " << m.quality
            << "\n";
    return out.str();
}

MinutiaeSet MinutiaeSet::from_text(const std::string& text) {
    MinutiaeSet set;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        if (line[0] == '#') {
            char hash;
            ls >> hash >> set.width >> set.height;
            continue;
        }
        Minutia m;
        double theta_deg;
        std::string kind;
        if (!(ls >> m.x >> m.y >> theta_deg >> kind >> m.quality))
            throw std::invalid_argument("MinutiaeSet: malformed line: " + line);
        if (kind == "ending")
            m.kind = MinutiaKind::ending;
        else if (kind == "bifurcation")
            m.kind = MinutiaKind::bifurcation;
        else
            throw std::invalid_argument("MinutiaeSet: unknown kind: " + kind);
        m.theta = wrap_2pi(theta_deg * M_PI / 180.0);
        set.minutiae.push_back(m);
    }
    return set;
}

OrientationField orientation_field(const GrayImage& img, int block) {
    img.validate();
    if (block < 4) throw std::invalid_argument("orientation_field: block must be >= 4");
    OrientationField of;
    of.block = block;
    of.blocks_x = img.width / block;
    of.blocks_y = img.height / block;
    if (of.blocks_x < 1 || of.blocks_y < 1)
        throw std::invalid_argument("orientation_field: image smaller than one block");

    // Central-difference gradients, edge-clamped.
    auto gx = [&](int x, int y) {
        return 0.5 * (img.at(std::min(x + 1, img.width - 1), y) -
                      img.at(std::max(x - 1, 0), y));
    };
    auto gy = [&](int x, int y) {
        return 0.5 * (img.at(x, std::min(y + 1, img.height - 1)) -
                      img.at(x, std::max(y - 1, 0)));
    };

    of.angles.resize(static_cast<size_t>(of.blocks_x) * of.blocks_y);
    of.coherences.resize(of.angles.size());
    for (int by = 0; by < of.blocks_y; ++by)
        for (int bx = 0; bx < of.blocks_x; ++bx) {
            double gxx = 0.0, gyy = 0.0, gxy = 0.0;
            for (int y = by * block; y < (by + 1) * block; ++y)
                for (int x = bx * block; x < (bx + 1) * block; ++x) {
                    const double dx = gx(x, y), dy = gy(x, y);
                    gxx += dx * dx;
                    gyy += dy * dy;
                    gxy += dx * dy;
                }
            const size_t i = static_cast<size_t>(by) * of.blocks_x + bx;
            const double denom = gxx + gyy;
            if (denom < 1e-12) {
                of.angles[i] = 0.0;
                of.coherences[i] = 0.0;
                continue;
            }
            // Dominant gradient direction; ridges run perpendicular to it.
            const double grad_dir = 0.5 * std::atan2(2.0 * gxy, gxx - gyy);
            double ridge = grad_dir + M_PI / 2.0;
            ridge = std::fmod(ridge, M_PI);
            if (ridge < 0.0) ridge += M_PI;
            of.angles[i] = ridge;
            of.coherences[i] =
                std::min(1.0, std::sqrt((gxx - gyy) * (gxx - gyy) + 4.0 * gxy * gxy) / denom);
        }
    return of;
}

GrayImage gabor_enhance(const GrayImage& img, const OrientationField& of, double period) {
    img.validate();
    if (!(period >= 3.0 && period <= 25.0))
        throw std::invalid_argument("gabor_enhance: period outside [3,25]");
    if (of.blocks_x < 1 || of.blocks_y < 1 || of.block < 4)
        throw std::invalid_argument("gabor_enhance: invalid orientation field");

    const double sigma = 0.5 * period;
    const int radius = static_cast<int>(std::ceil(2.0 * sigma));

    // One zero-mean even kernel per block, oriented across the ridges.
    std::vector<std::vector<double>> kernels(of.angles.size());
    const int ksize = 2 * radius + 1;
    for (size_t i = 0; i < of.angles.size(); ++i) {
        const double osc = of.angles[i] + M_PI / 2.0;
        const double cu = std::cos(osc), su = std::sin(osc);
        auto& k = kernels[i];
        k.resize(static_cast<size_t>(ksize) * ksize);
        double sum = 0.0;
        for (int v = -radius; v <= radius; ++v)
            for (int u = -radius; u <= radius; ++u) {
                const double up = u * cu + v * su;
                const double vp = -u * su + v * cu;
                const double g = std::exp(-(up * up + vp * vp) / (2.0 * sigma * sigma)) *
                                 std::cos(2.0 * M_PI * up / period);
                k[static_cast<size_t>(v + radius) * ksize + (u + radius)] = g;
                sum += g;
            }
        const double mean = sum / (static_cast<double>(ksize) * ksize);
        for (double& g : k) g -= mean;  // constant input -> zero response
    }

    std::vector<double> resp(img.pixels.size(), 0.0);
    double max_abs = 0.0;
    for (int y = 0; y < img.height; ++y) {
        const int by = std::min(y / of.block, of.blocks_y - 1);
        for (int x = 0; x < img.width; ++x) {
            const int bx = std::min(x / of.block, of.blocks_x - 1);
            const auto& k = kernels[static_cast<size_t>(by) * of.blocks_x + bx];
            double acc = 0.0;
            for (int v = -radius; v <= radius; ++v) {
                const int yy = std::clamp(y + v, 0, img.height - 1);
                const size_t krow = static_cast<size_t>(v + radius) * ksize;
                for (int u = -radius; u <= radius; ++u) {
                    const int xx = std::clamp(x + u, 0, img.width - 1);
                    acc += k[krow + (u + radius)] * img.at(xx, yy);
                }
            }
            resp[static_cast<size_t>(y) * img.width + x] = acc;
            max_abs = std::max(max_abs, std::abs(acc));
        }
    }

    GrayImage out(img.width, img.height, 0.5f);
    out.ppi = img.ppi;
    if (max_abs > 1e-12)
        for (size_t i = 0; i < resp.size(); ++i)
            out.pixels[i] = static_cast<float>(0.5 + 0.5 * resp[i] / max_abs);
    return out;
}

Mask binarize_ridges(const GrayImage& enhanced) {
    enhanced.validate();
    constexpr int kBlock = 16;
    Mask out(enhanced.width, enhanced.height, 0);
    for (int by = 0; by * kBlock < enhanced.height; ++by)
        for (int bx = 0; bx * kBlock < enhanced.width; ++bx) {
            const int x0 = bx * kBlock, x1 = std::min(enhanced.width, x0 + kBlock);
            const int y0 = by * kBlock, y1 = std::min(enhanced.height, y0 + kBlock);
            double mean = 0.0;
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x) mean += enhanced.at(x, y);
            mean /= static_cast<double>(x1 - x0) * (y1 - y0);
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x)
                    out.at(x, y) = enhanced.at(x, y) < mean - 1e-6 ? 1 : 0;  // dark ridges
        }
    return out;
}

namespace {

inline std::uint8_t mget(const Mask& m, int x, int y) {
    return (x >= 0 && y >= 0 && x < m.width && y < m.height) ? m.at(x, y) : 0;
}

// 8-neighborhood in Zhang-Suen order P2..P9 (N, NE, E, SE, S, SW, W, NW).
constexpr int kNx[8] = {0, 1, 1, 1, 0, -1, -1, -1};
constexpr int kNy[8] = {-1, -1, 0, 1, 1, 1, 0, -1};

}  // namespace

Mask thin_skeleton(const Mask& binary) {
    binary.validate();
    Mask m = binary;
    bool changed = true;
    std::vector<std::pair<int, int>> kill;
    while (changed) {
        changed = false;
        for (int pass = 0; pass < 2; ++pass) {
            kill.clear();
            for (int y = 0; y < m.height; ++y)
                for (int x = 0; x < m.width; ++x) {
                    if (!m.at(x, y)) continue;
                    int b = 0;
                    std::uint8_t p[8];
                    for (int k = 0; k < 8; ++k) {
                        p[k] = mget(m, x + kNx[k], y + kNy[k]);
                        b += p[k];
                    }
                    if (b < 2 || b > 6) continue;
                    int a = 0;
                    for (int k = 0; k < 8; ++k)
                        if (!p[k] && p[(k + 1) % 8]) ++a;
                    if (a != 1) continue;
                    // p[0]=N, p[2]=E, p[4]=S, p[6]=W
                    if (pass == 0) {
                        if (p[0] && p[2] && p[4]) continue;
                        if (p[2] && p[4] && p[6]) continue;
                    } else {
                        if (p[0] && p[2] && p[6]) continue;
                        if (p[0] && p[4] && p[6]) continue;
                    }
                    kill.emplace_back(x, y);
                }
            for (auto [x, y] : kill) m.at(x, y) = 0;
            changed = changed || !kill.empty();
        }
    }
    return m;
}

int crossing_number(const Mask& skeleton, int x, int y) {
    int cn = 0;
    for (int k = 0; k < 8; ++k) {
        const int a = mget(skeleton, x + kNx[k], y + kNy[k]);
        const int b = mget(skeleton, x + kNx[(k + 1) % 8], y + kNy[(k + 1) % 8]);
        cn += std::abs(a - b);
    }
    return cn / 2;
}

namespace {

struct Trace {
    int end_x = 0, end_y = 0;
    int steps = 0;
    bool hit_junction = false;
};

// Walks the skeleton from (sx, sy), first step to (nx, ny), stopping at
// max_steps, a dead end, or a junction.
Trace trace_branch(const Mask& skel, int sx, int sy, int nx, int ny, int max_steps) {
    Trace t;
    int px = sx, py = sy, cx = nx, cy = ny;
    t.end_x = cx;
    t.end_y = cy;
    for (t.steps = 1; t.steps < max_steps; ++t.steps) {
        if (crossing_number(skel, cx, cy) >= 3) {
            t.hit_junction = true;
            break;
        }
        int nx2 = -1, ny2 = -1, found = 0;
        for (int k = 0; k < 8; ++k) {
            const int xx = cx + kNx[k], yy = cy + kNy[k];
            if ((xx == px && yy == py) || (xx == sx && yy == sy)) continue;
            if (mget(skel, xx, yy)) {
                nx2 = xx;
                ny2 = yy;
                ++found;
            }
        }
        if (found != 1) break;  // dead end or ambiguous
        px = cx;
        py = cy;
        cx = nx2;
        cy = ny2;
        t.end_x = cx;
        t.end_y = cy;
    }
    return t;
}

// One trace start per connected run of neighbours. Thinning can leave a
// branch touching the junction through two mutually adjacent pixels, so the
// raw neighbour count can exceed the crossing number; each cyclic run of set
// pixels is one branch. Prefer a cardinal pixel as the run representative:
// the diagonal pixel of such a pair is usually the branch continuation, so
// starting at the cardinal keeps the trace unambiguous.
std::vector<std::pair<int, int>> branch_starts(const Mask& skel, int x, int y) {
    bool on[8];
    int set_count = 0;
    for (int k = 0; k < 8; ++k) {
        on[k] = mget(skel, x + kNx[k], y + kNy[k]) != 0;
        set_count += on[k];
    }
    std::vector<std::pair<int, int>> out;
    if (set_count == 8) return out;  // solid ring, no distinct branches
    for (int k = 0; k < 8; ++k) {
        if (!on[k] || on[(k + 7) % 8]) continue;  // k heads a run
        int pick = k % 8;
        for (int j = k; on[j % 8]; ++j)
            if (j % 2 == 0) pick = j % 8;
        out.emplace_back(x + kNx[pick], y + kNy[pick]);
    }
    return out;
}

}  // namespace

MinutiaeSet extract_minutiae(const GrayImage& img) {
    img.validate();
    MinutiaeSet set;
    set.width = img.width;
    set.height = img.height;

    double period;
    try {
        period = estimate_ridge_period(img);
    } catch (const std::runtime_error&) {
        set.no_ridge_structure = true;
        return set;
    }

    const OrientationField of = orientation_field(img, 16);
    const GrayImage enh = gabor_enhance(img, of, period);
    const Mask skel = thin_skeleton(binarize_ridges(enh));

    constexpr int kMargin = 8;
    constexpr int kTraceLen = 6;
    struct Raw {
        Minutia m;
        bool spur = false;
    };
    std::vector<Raw> raw;

    for (int y = kMargin; y < img.height - kMargin; ++y)
        for (int x = kMargin; x < img.width - kMargin; ++x) {
            if (!skel.at(x, y)) continue;
            const int cn = crossing_number(skel, x, y);
            if (cn != 1 && cn != 3) continue;
            const auto nbrs = branch_starts(skel, x, y);
            const int bx = std::min(x / of.block, of.blocks_x - 1);
            const int by = std::min(y / of.block, of.blocks_y - 1);
            Raw r;
            r.m.x = x;
            r.m.y = y;
            r.m.quality = of.coherence(bx, by);

            if (cn == 1) {
                if (nbrs.size() != 1) continue;
                const Trace t = trace_branch(skel, x, y, nbrs[0].first, nbrs[0].second, kTraceLen);
                r.m.kind = MinutiaKind::ending;
                r.m.theta = wrap_2pi(std::atan2(t.end_y - y, t.end_x - x));  // points into the ridge
                // A branch that runs into a junction within a few pixels is a
                // thinning spur, not a true ending.
                r.spur = t.hit_junction && t.steps < 8;
            } else {
                if (nbrs.size() != 3) continue;
                double ang[3];
                for (int k = 0; k < 3; ++k) {
                    const Trace t =
                        trace_branch(skel, x, y, nbrs[k].first, nbrs[k].second, kTraceLen);
                    ang[k] = std::atan2(t.end_y - y, t.end_x - x);
                }
                // The two most similar branch directions form the fork; point
                // the minutia into the fork.
                int bi = 0, bj = 1;
                double best = angular_difference(ang[0], ang[1]);
                if (angular_difference(ang[0], ang[2]) < best) {
                    best = angular_difference(ang[0], ang[2]);
                    bi = 0;
                    bj = 2;
                }
                if (angular_difference(ang[1], ang[2]) < best) {
                    bi = 1;
                    bj = 2;
                }
                const double mx = std::cos(ang[bi]) + std::cos(ang[bj]);
                const double my = std::sin(ang[bi]) + std::sin(ang[bj]);
                r.m.kind = MinutiaKind::bifurcation;
                r.m.theta = wrap_2pi(std::atan2(my, mx));
            }
            raw.push_back(r);
        }

    // Opposing near-antiparallel ending pairs are broken-ridge artifacts.
    std::vector<bool> drop(raw.size(), false);
    for (size_t i = 0; i < raw.size(); ++i) {
        if (raw[i].spur || raw[i].m.quality < 0.15) drop[i] = true;
    }
    for (size_t i = 0; i < raw.size(); ++i) {
        if (drop[i] || raw[i].m.kind != MinutiaKind::ending) continue;
        for (size_t j = i + 1; j < raw.size(); ++j) {
            if (drop[j] || raw[j].m.kind != MinutiaKind::ending) continue;
            const double dx = raw[i].m.x - raw[j].m.x, dy = raw[i].m.y - raw[j].m.y;
            if (dx * dx + dy * dy >= 36.0) continue;
            if (angular_difference(raw[i].m.theta, raw[j].m.theta + M_PI) < 30.0 * M_PI / 180.0)
                drop[i] = drop[j] = true;
        }
    }

    // Dedup rule: keep the higher-quality of any two minutiae closer than
    // 4 px with directions within 10 degrees.
    std::vector<int> order;
    for (size_t i = 0; i < raw.size(); ++i)
        if (!drop[i]) order.push_back(static_cast<int>(i));
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return raw[a].m.quality > raw[b].m.quality; });
    for (int i : order) {
        bool dup = false;
        for (const auto& kept : set.minutiae) {
            const double dx = kept.x - raw[i].m.x, dy = kept.y - raw[i].m.y;
            if (dx * dx + dy * dy < 16.0 &&
                angular_difference(kept.theta, raw[i].m.theta) < 10.0 * M_PI / 180.0) {
                dup = true;
                break;
            }
        }
        if (!dup) set.minutiae.push_back(raw[i].m);
    }
    return set;
}

// ---------------------------------------------------------------------------
// Matching
// ---------------------------------------------------------------------------

namespace {

constexpr double kMatchTolPx = 12.0;
constexpr double kMatchTolRad = 30.0 * M_PI / 180.0;

struct NeighborFeature {
    double r, alpha, beta;
};

// Rotation/translation-invariant local descriptor: the 5 nearest neighbors,
// each as (distance, bearing relative to the minutia direction, direction
// difference), sorted by distance.
std::vector<std::vector<NeighborFeature>> descriptors(const MinutiaeSet& s) {
    const auto& m = s.minutiae;
    std::vector<std::vector<NeighborFeature>> out(m.size());
    for (size_t i = 0; i < m.size(); ++i) {
        std::vector<std::pair<double, size_t>> dist;
        for (size_t j = 0; j < m.size(); ++j) {
            if (j == i) continue;
            const double dx = m[j].x - m[i].x, dy = m[j].y - m[i].y;
            dist.emplace_back(std::hypot(dx, dy), j);
        }
        std::sort(dist.begin(), dist.end());
        const size_t k = std::min<size_t>(5, dist.size());
        for (size_t t = 0; t < k; ++t) {
            const size_t j = dist[t].second;
            NeighborFeature f;
            f.r = dist[t].first;
            f.alpha = wrap_2pi(std::atan2(m[j].y - m[i].y, m[j].x - m[i].x) - m[i].theta);
            f.beta = wrap_2pi(m[j].theta - m[i].theta);
            out[i].push_back(f);
        }
    }
    return out;
}

double descriptor_distance(const std::vector<NeighborFeature>& a,
                           const std::vector<NeighborFeature>& b) {
    const size_t k = std::min(a.size(), b.size());
    double d = 20.0 * static_cast<double>(std::max(a.size(), b.size()) - k);
    for (size_t t = 0; t < k; ++t) {
        d += std::abs(a[t].r - b[t].r);
        d += 8.0 * angular_difference(a[t].alpha, b[t].alpha);
        d += 4.0 * angular_difference(a[t].beta, b[t].beta);
    }
    return d;
}

struct GridIndex {
    double cell;
    std::map<std::pair<int, int>, std::vector<int>> buckets;

    explicit GridIndex(const MinutiaeSet& s, double cell_size) : cell(cell_size) {
        for (size_t j = 0; j < s.minutiae.size(); ++j) {
            const auto key = std::make_pair(static_cast<int>(std::floor(s.minutiae[j].x / cell)),
                                            static_cast<int>(std::floor(s.minutiae[j].y / cell)));
            buckets[key].push_back(static_cast<int>(j));
        }
    }

    template <typename F>
    void near(double x, double y, F&& fn) const {
        const int cx = static_cast<int>(std::floor(x / cell));
        const int cy = static_cast<int>(std::floor(y / cell));
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                auto it = buckets.find({cx + dx, cy + dy});
                if (it == buckets.end()) continue;
                for (int j : it->second) fn(j);
            }
    }
};

struct Similarity {
    std::complex<double> c{1.0, 0.0};
    std::complex<double> t{0.0, 0.0};

    std::complex<double> apply(const Minutia& m) const {
        return c * std::complex<double>(m.x, m.y) + t;
    }
};

// Greedy one-to-one inlier assignment under the fixed transform.
std::vector<std::pair<int, int>> consensus_pairs(const MinutiaeSet& a, const MinutiaeSet& b,
                                                 const GridIndex& bidx, const Similarity& T) {
    const double rot = std::arg(T.c);
    struct Cand {
        double d;
        int i, j;
    };
    std::vector<Cand> cands;
    for (size_t i = 0; i < a.minutiae.size(); ++i) {
        const auto p = T.apply(a.minutiae[i]);
        bidx.near(p.real(), p.imag(), [&](int j) {
            const auto& mb = b.minutiae[j];
            const double d = std::hypot(p.real() - mb.x, p.imag() - mb.y);
            if (d > kMatchTolPx) return;
            if (angular_difference(a.minutiae[i].theta + rot, mb.theta) > kMatchTolRad) return;
            cands.push_back({d, static_cast<int>(i), j});
        });
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& x, const Cand& y) {
        return std::tie(x.d, x.i, x.j) < std::tie(y.d, y.i, y.j);
    });
    std::vector<bool> ua(a.minutiae.size(), false), ub(b.minutiae.size(), false);
    std::vector<std::pair<int, int>> pairs;
    for (const auto& c : cands) {
        if (ua[c.i] || ub[c.j]) continue;
        ua[c.i] = ub[c.j] = true;
        pairs.emplace_back(c.i, c.j);
    }
    return pairs;
}

// Least-squares similarity fit b ~= c a + t over the given pairs.
Similarity fit_similarity(const MinutiaeSet& a, const MinutiaeSet& b,
                          const std::vector<std::pair<int, int>>& pairs) {
    std::complex<double> ca{0, 0}, cb{0, 0};
    for (auto [i, j] : pairs) {
        ca += std::complex<double>(a.minutiae[i].x, a.minutiae[i].y);
        cb += std::complex<double>(b.minutiae[j].x, b.minutiae[j].y);
    }
    const double n = static_cast<double>(pairs.size());
    ca /= n;
    cb /= n;
    std::complex<double> num{0, 0};
    double den = 0.0;
    for (auto [i, j] : pairs) {
        const std::complex<double> za = std::complex<double>(a.minutiae[i].x, a.minutiae[i].y) - ca;
        const std::complex<double> zb = std::complex<double>(b.minutiae[j].x, b.minutiae[j].y) - cb;
        num += zb * std::conj(za);
        den += std::norm(za);
    }
    Similarity s;
    s.c = den > 1e-12 ? num / den : std::complex<double>(1.0, 0.0);
    if (std::abs(s.c) < 1e-9) s.c = {1.0, 0.0};
    s.t = cb - s.c * ca;
    return s;
}

bool set_less(const MinutiaeSet& a, const MinutiaeSet& b) {
    auto key = [](const MinutiaeSet& s) {
        std::vector<std::tuple<double, double, double>> k;
        for (const auto& m : s.minutiae) k.emplace_back(m.x, m.y, m.theta);
        std::sort(k.begin(), k.end());
        return k;
    };
    if (a.minutiae.size() != b.minutiae.size()) return a.minutiae.size() < b.minutiae.size();
    return key(a) < key(b);
}

MatchResult match_directed(const MinutiaeSet& a, const MinutiaeSet& b, std::uint64_t seed) {
    MatchResult best;
    const GridIndex bidx(b, kMatchTolPx);
    const auto da = descriptors(a), db = descriptors(b);

    // Candidate correspondences by descriptor similarity, one-to-one greedy.
    struct Cand {
        double d;
        int i, j;
    };
    std::vector<Cand> cands;
    for (size_t i = 0; i < a.minutiae.size(); ++i)
        for (size_t j = 0; j < b.minutiae.size(); ++j)
            cands.push_back({descriptor_distance(da[i], db[j]), static_cast<int>(i),
                             static_cast<int>(j)});
    std::sort(cands.begin(), cands.end(), [](const Cand& x, const Cand& y) {
        return std::tie(x.d, x.i, x.j) < std::tie(y.d, y.i, y.j);
    });
    std::vector<bool> ua(a.minutiae.size(), false), ub(b.minutiae.size(), false);
    std::vector<std::pair<int, int>> seeds;
    for (const auto& c : cands) {
        if (ua[c.i] || ub[c.j]) continue;
        ua[c.i] = ub[c.j] = true;
        seeds.emplace_back(c.i, c.j);
    }

    auto evaluate = [&](const Similarity& T) {
        if (std::abs(T.c) < 0.5 || std::abs(T.c) > 2.0) return;  // implausible scale
        auto pairs = consensus_pairs(a, b, bidx, T);
        // Two refit rounds tighten the transform on the inliers.
        for (int round = 0; round < 2 && pairs.size() >= 2; ++round) {
            const Similarity R = fit_similarity(a, b, pairs);
            if (std::abs(R.c) < 0.5 || std::abs(R.c) > 2.0) break;
            auto refined = consensus_pairs(a, b, bidx, R);
            if (refined.size() >= pairs.size()) {
                pairs = std::move(refined);
                if (pairs.size() > best.correspondences.size()) {
                    best.correspondences = pairs;
                    best.s = std::abs(R.c);
                    best.theta = std::arg(R.c);
                    best.tx = R.t.real();
                    best.ty = R.t.imag();
                }
            }
        }
        if (pairs.size() > best.correspondences.size()) {
            best.correspondences = std::move(pairs);
            best.s = std::abs(T.c);
            best.theta = std::arg(T.c);
            best.tx = T.t.real();
            best.ty = T.t.imag();
        }
    };

    // Deterministic hypotheses first: identity and the full descriptor set.
    evaluate(Similarity{});
    if (seeds.size() >= 2) evaluate(fit_similarity(a, b, seeds));
    if (seeds.size() == 1) {
        Similarity T;
        const auto& ma = a.minutiae[seeds[0].first];
        const auto& mb = b.minutiae[seeds[0].second];
        T.t = std::complex<double>(mb.x - ma.x, mb.y - ma.y);
        evaluate(T);
    }

    std::mt19937_64 rng(seed);
    if (seeds.size() >= 2) {
        std::uniform_int_distribution<size_t> pick(0, seeds.size() - 1);
        for (int iter = 0; iter < 64; ++iter) {
            const size_t u = pick(rng);
            size_t v = pick(rng);
            if (u == v) continue;
            const auto [i1, j1] = seeds[u];
            const auto [i2, j2] = seeds[v];
            const std::complex<double> a1(a.minutiae[i1].x, a.minutiae[i1].y);
            const std::complex<double> a2(a.minutiae[i2].x, a.minutiae[i2].y);
            const std::complex<double> b1(b.minutiae[j1].x, b.minutiae[j1].y);
            const std::complex<double> b2(b.minutiae[j2].x, b.minutiae[j2].y);
            if (std::abs(a2 - a1) < 4.0 || std::abs(b2 - b1) < 4.0) continue;
            Similarity T;
            T.c = (b2 - b1) / (a2 - a1);
            T.t = b1 - T.c * a1;
            evaluate(T);
        }
    }

    const double denom = static_cast<double>(a.minutiae.size()) * b.minutiae.size();
    const double paired = static_cast<double>(best.correspondences.size());
    best.score = std::clamp(paired * paired / denom, 0.0, 1.0);
    return best;
}

}  // namespace

MatchResult match_minutiae(const MinutiaeSet& a, const MinutiaeSet& b, std::uint64_t seed) {
    if (a.minutiae.empty() || b.minutiae.empty()) return {};
    // Canonical argument order makes the result symmetric: the computation
    // always runs smaller -> larger (ties broken by content).
    if (set_less(b, a)) {
        MatchResult r = match_directed(b, a, seed);
        for (auto& [i, j] : r.correspondences) std::swap(i, j);
        std::sort(r.correspondences.begin(), r.correspondences.end());
        const std::complex<double> c = std::polar(r.s, r.theta);
        const std::complex<double> ci = 1.0 / c;
        const std::complex<double> ti = -std::complex<double>(r.tx, r.ty) / c;
        r.s = std::abs(ci);
        r.theta = std::arg(ci);
        r.tx = ti.real();
        r.ty = ti.imag();
        return r;
    }
    MatchResult r = match_directed(a, b, seed);
    std::sort(r.correspondences.begin(), r.correspondences.end());
    return r;
}

CorrespondenceMetrics correspondence_metrics(const MinutiaeSet& probe,
                                             const MinutiaeSet& reference, double tol_px,
                                             double tol_deg) {
    if (reference.minutiae.empty())
        throw std::invalid_argument("correspondence_metrics: empty reference");
    if (!(tol_px > 0.0) || !(tol_deg > 0.0))
        throw std::invalid_argument("correspondence_metrics: tolerances must be positive");
    const double tol_rad = tol_deg * M_PI / 180.0;

    const int np = static_cast<int>(probe.minutiae.size());
    const int nr = static_cast<int>(reference.minutiae.size());
    std::vector<std::vector<int>> adj(np);
    for (int i = 0; i < np; ++i)
        for (int j = 0; j < nr; ++j) {
            const double dx = probe.minutiae[i].x - reference.minutiae[j].x;
            const double dy = probe.minutiae[i].y - reference.minutiae[j].y;
            if (std::hypot(dx, dy) <= tol_px &&
                angular_difference(probe.minutiae[i].theta, reference.minutiae[j].theta) <= tol_rad)
                adj[i].push_back(j);
        }

    // Kuhn's augmenting paths: maximum one-to-one assignment.
    std::vector<int> match_ref(nr, -1);
    std::vector<bool> seen;
    std::function<bool(int)> augment = [&](int i) -> bool {
        for (int j : adj[i]) {
            if (seen[j]) continue;
            seen[j] = true;
            if (match_ref[j] < 0 || augment(match_ref[j])) {
                match_ref[j] = i;
                return true;
            }
        }
        return false;
    };
    int paired = 0;
    for (int i = 0; i < np; ++i) {
        seen.assign(nr, false);
        if (augment(i)) ++paired;
    }

    CorrespondenceMetrics m;
    m.paired = paired;
    m.missing = nr - paired;
    m.spurious = np - paired;
    m.goodness_index =
        std::clamp(static_cast<double>(m.paired - m.missing - m.spurious) / nr, -1.0, 1.0);
    return m;
}

double MinutiaeMap::total_mass() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
}

MinutiaeMap minutiae_map(const MinutiaeSet& set, int dims, double sigma) {
    if (dims < 8) throw std::invalid_argument("minutiae_map: dims must be >= 8");
    if (!(sigma > 0.0)) throw std::invalid_argument("minutiae_map: sigma must be positive");
    MinutiaeMap map;
    map.cells_x = dims / 8;
    map.cells_y = dims / 8;
    map.values.assign(static_cast<size_t>(map.cells_x) * map.cells_y * 6, 0.0);

    for (const auto& m : set.minutiae) {
        if (m.x < 0 || m.y < 0 || m.x > dims - 1 || m.y > dims - 1)
            throw std::invalid_argument("minutiae_map: minutia outside dims");
        const double cx = m.x / 8.0, cy = m.y / 8.0;
        const double fbin = wrap_2pi(m.theta) / (M_PI / 3.0);
        const int b0 = static_cast<int>(std::floor(fbin)) % 6;
        const double f = fbin - std::floor(fbin);
        for (int gy = 0; gy < map.cells_y; ++gy)
            for (int gx = 0; gx < map.cells_x; ++gx) {
                const double w = std::exp(
                    -((gx - cx) * (gx - cx) + (gy - cy) * (gy - cy)) / (2.0 * sigma * sigma));
                const size_t base = (static_cast<size_t>(gy) * map.cells_x + gx) * 6;
                map.values[base + b0] += w * (1.0 - f);
                map.values[base + (b0 + 1) % 6] += w * f;
            }
    }
    return map;
}

}  // namespace c2cl
