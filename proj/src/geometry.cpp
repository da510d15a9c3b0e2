#include "c2cl/geometry.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "c2cl/minutiae.hpp"

namespace c2cl {

double AffineParams::normalize_angle(double theta) {
    theta = std::fmod(theta, 2.0 * M_PI);
    if (theta > M_PI) theta -= 2.0 * M_PI;
    if (theta <= -M_PI) theta += 2.0 * M_PI;
    return theta;
}

void AffineParams::validate() const {
    if (!(s > 0.0) || !std::isfinite(s)) throw std::invalid_argument("AffineParams: s must be positive");
    if (!std::isfinite(theta) || !std::isfinite(tx) || !std::isfinite(ty))
        throw std::invalid_argument("AffineParams: non-finite parameter");
}

TPSField TPSField::identity(int n, int canvas_w, int canvas_h) {
    TPSField f;
    f.n = n;
    f.canvas_w = canvas_w;
    f.canvas_h = canvas_h;
    f.displacements.assign(static_cast<size_t>(n) * n, {0.0, 0.0});
    return f;
}

std::vector<std::pair<double, double>> TPSField::control_points() const {
    // Uniform lattice inset 10% from the canvas borders.
    std::vector<std::pair<double, double>> pts;
    pts.reserve(static_cast<size_t>(n) * n);
    const double x0 = 0.1 * (canvas_w - 1), x1 = 0.9 * (canvas_w - 1);
    const double y0 = 0.1 * (canvas_h - 1), y1 = 0.9 * (canvas_h - 1);
    for (int gy = 0; gy < n; ++gy)
        for (int gx = 0; gx < n; ++gx) {
            const double fx = n > 1 ? static_cast<double>(gx) / (n - 1) : 0.5;
            const double fy = n > 1 ? static_cast<double>(gy) / (n - 1) : 0.5;
            pts.emplace_back(x0 + fx * (x1 - x0), y0 + fy * (y1 - y0));
        }
    return pts;
}

void TPSField::validate() const {
    if (n < 2) throw std::invalid_argument("TPSField: n must be >= 2");
    if (canvas_w < 2 || canvas_h < 2) throw std::invalid_argument("TPSField: canvas too small");
    if (displacements.size() != static_cast<size_t>(n) * n)
        throw std::invalid_argument("TPSField: expected n*n displacements");
    const double bound = std::max(canvas_w, canvas_h);
    for (auto [dx, dy] : displacements) {
        if (!std::isfinite(dx) || !std::isfinite(dy))
            throw std::invalid_argument("TPSField: non-finite displacement");
        if (std::abs(dx) > bound || std::abs(dy) > bound)
            throw std::invalid_argument("TPSField: displacement exceeds canvas side");
    }
}

std::array<double, 6> affine_matrix(const AffineParams& p) {
    p.validate();
    const double c = std::cos(p.theta), s = std::sin(p.theta);
    return {p.s * c, -p.s * s, p.tx, p.s * s, p.s * c, p.ty};
}

namespace {

double tps_kernel(double r2) {
    // U(r) = r^2 log(r^2), continuous at 0.
    return r2 > 0.0 ? r2 * std::log(r2) : 0.0;
}

// Solved coefficients for one TPS interpolation problem. The same LU also
// yields the cardinal bases (unit displacement at one anchor) used for
// analytic parameter gradients.
struct TPSSolve {
    std::vector<std::pair<double, double>> anchors;
    Eigen::MatrixXd K;            // m x m kernel block
    Eigen::VectorXd wx, wy;       // m kernel weights + 3 affine coefficients each
    Eigen::MatrixXd cardinal;     // (m+3) x m, column k solves unit displacement at anchor k

    int m() const { return static_cast<int>(anchors.size()); }

    // d(p) for the solved field.
    std::pair<double, double> displacement(double x, double y) const {
        double dx = wx[m()] + wx[m() + 1] * x + wx[m() + 2] * y;
        double dy = wy[m()] + wy[m() + 1] * x + wy[m() + 2] * y;
        for (int i = 0; i < m(); ++i) {
            const double ddx = x - anchors[i].first, ddy = y - anchors[i].second;
            const double u = tps_kernel(ddx * ddx + ddy * ddy);
            dx += wx[i] * u;
            dy += wy[i] * u;
        }
        return {dx, dy};
    }

    // Scalar cardinal basis values phi_k(p), shared by both components.
    void basis(double x, double y, std::vector<double>& out) const {
        Eigen::VectorXd psi(m() + 3);
        for (int i = 0; i < m(); ++i) {
            const double ddx = x - anchors[i].first, ddy = y - anchors[i].second;
            psi[i] = tps_kernel(ddx * ddx + ddy * ddy);
        }
        psi[m()] = 1.0;
        psi[m() + 1] = x;
        psi[m() + 2] = y;
        out.resize(m());
        for (int k = 0; k < m(); ++k) out[k] = psi.dot(cardinal.col(k));
    }
};

TPSSolve solve_tps(const TPSField& field, double regularization, bool want_cardinal) {
    field.validate();
    if (regularization < 0.0) throw std::invalid_argument("tps: regularization must be >= 0");
    TPSSolve s;
    s.anchors = field.control_points();
    const int m = s.m();

    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(m + 3, m + 3);
    s.K.resize(m, m);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) {
            const double dx = s.anchors[i].first - s.anchors[j].first;
            const double dy = s.anchors[i].second - s.anchors[j].second;
            s.K(i, j) = tps_kernel(dx * dx + dy * dy) + (i == j ? regularization : 0.0);
        }
        M(i, m) = M(m, i) = 1.0;
        M(i, m + 1) = M(m + 1, i) = s.anchors[i].first;
        M(i, m + 2) = M(m + 2, i) = s.anchors[i].second;
    }
    M.topLeftCorner(m, m) = s.K;

    Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
    if (!lu.isInvertible())
        throw std::invalid_argument("tps: singular control configuration");

    Eigen::VectorXd rhs_x = Eigen::VectorXd::Zero(m + 3);
    Eigen::VectorXd rhs_y = Eigen::VectorXd::Zero(m + 3);
    for (int i = 0; i < m; ++i) {
        rhs_x[i] = field.displacements[i].first;
        rhs_y[i] = field.displacements[i].second;
    }
    s.wx = lu.solve(rhs_x);
    s.wy = lu.solve(rhs_y);

    if (want_cardinal) {
        Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(m + 3, m);
        for (int k = 0; k < m; ++k) rhs(k, k) = 1.0;
        s.cardinal = lu.solve(rhs);
    }
    return s;
}

struct BilinearSample {
    double value = 0.0;
    double gx = 0.0;  // d(value)/d(qx)
    double gy = 0.0;  // d(value)/d(qy)
};

BilinearSample sample_zero_fill(const GrayImage& img, double qx, double qy) {
    const int x0 = static_cast<int>(std::floor(qx));
    const int y0 = static_cast<int>(std::floor(qy));
    const double fx = qx - x0, fy = qy - y0;
    auto px = [&](int x, int y) -> double {
        return img.in_bounds(x, y) ? img.at(x, y) : 0.0;
    };
    const double v00 = px(x0, y0), v10 = px(x0 + 1, y0);
    const double v01 = px(x0, y0 + 1), v11 = px(x0 + 1, y0 + 1);
    BilinearSample r;
    r.value = (1 - fy) * ((1 - fx) * v00 + fx * v10) + fy * ((1 - fx) * v01 + fx * v11);
    r.gx = (1 - fy) * (v10 - v00) + fy * (v11 - v01);
    r.gy = (1 - fx) * (v01 - v00) + fx * (v11 - v10);
    return r;
}

}  // namespace

FlowGrid tps_flow(const TPSField& field, int out_w, int out_h, double regularization) {
    if (out_w < 1 || out_h < 1) throw std::invalid_argument("tps_flow: output dims must be >= 1");
    const TPSSolve s = solve_tps(field, regularization, false);
    FlowGrid flow;
    flow.width = out_w;
    flow.height = out_h;
    flow.src.resize(static_cast<size_t>(out_w) * out_h);
    for (int y = 0; y < out_h; ++y)
        for (int x = 0; x < out_w; ++x) {
            auto [dx, dy] = s.displacement(x, y);
            flow.src[static_cast<size_t>(y) * out_w + x] = {x + dx, y + dy};
        }
    return flow;
}

double bending_energy(const TPSField& field, double regularization) {
    const TPSSolve s = solve_tps(field, regularization, false);
    const int m = s.m();
    const Eigen::VectorXd wx = s.wx.head(m), wy = s.wy.head(m);
    return wx.dot(s.K * wx) + wy.dot(s.K * wy);
}

GrayImage warp_image(const GrayImage& img, const AffineParams& p, const TPSField& field) {
    img.validate();
    p.validate();
    const TPSSolve sol = solve_tps(field, 0.0, false);
    const double cx = 0.5 * (img.width - 1), cy = 0.5 * (img.height - 1);
    const double c = std::cos(p.theta), sn = std::sin(p.theta);
    GrayImage out(img.width, img.height);
    out.ppi = img.ppi;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            auto [dx, dy] = sol.displacement(x, y);
            const double ex = x + dx - cx, ey = y + dy - cy;
            const double qx = cx + p.s * (c * ex - sn * ey) + p.tx;
            const double qy = cy + p.s * (sn * ex + c * ey) + p.ty;
            const double v = sample_zero_fill(img, qx, qy).value;
            out.at(x, y) = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    return out;
}

WarpGradients warp_param_gradients(const GrayImage& img, const AffineParams& p,
                                   const TPSField& field, const std::vector<double>& upstream) {
    img.validate();
    p.validate();
    if (upstream.size() != img.pixels.size())
        throw std::invalid_argument("warp_param_gradients: upstream size mismatch");

    const TPSSolve sol = solve_tps(field, 0.0, true);
    const double cx = 0.5 * (img.width - 1), cy = 0.5 * (img.height - 1);
    const double c = std::cos(p.theta), sn = std::sin(p.theta);

    WarpGradients g;
    g.d_displacements.assign(sol.m(), {0.0, 0.0});
    std::vector<double> phi;

    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const double u = upstream[static_cast<size_t>(y) * img.width + x];
            if (u == 0.0) continue;
            auto [dx, dy] = sol.displacement(x, y);
            const double ex = x + dx - cx, ey = y + dy - cy;
            const double qx = cx + p.s * (c * ex - sn * ey) + p.tx;
            const double qy = cy + p.s * (sn * ex + c * ey) + p.ty;
            const BilinearSample smp = sample_zero_fill(img, qx, qy);
            const double ugx = u * smp.gx, ugy = u * smp.gy;

            g.d_tx += ugx;
            g.d_ty += ugy;
            g.d_s += ugx * (c * ex - sn * ey) + ugy * (sn * ex + c * ey);
            g.d_theta += ugx * p.s * (-sn * ex - c * ey) + ugy * p.s * (c * ex - sn * ey);

            // d(q)/d(anchor displacement) = phi_k * R columns.
            sol.basis(x, y, phi);
            const double ax = ugx * p.s * c + ugy * p.s * sn;    // against column (c, sn)
            const double ay = -ugx * p.s * sn + ugy * p.s * c;   // against column (-sn, c)
            for (int k = 0; k < sol.m(); ++k) {
                g.d_displacements[k].first += ax * phi[k];
                g.d_displacements[k].second += ay * phi[k];
            }
        }
    return g;
}

namespace {

// Normalized autocorrelation peak of a 1-D signature; returns the refined
// period in [3, 25] or nullopt.
std::optional<double> signature_period(const std::vector<double>& sig) {
    const int n = static_cast<int>(sig.size());
    double mean = 0.0;
    for (double v : sig) mean += v;
    mean /= n;
    std::vector<double> z(sig.size());
    for (int i = 0; i < n; ++i) z[i] = sig[i] - mean;

    const int max_lag = std::min(28, n - 8);
    if (max_lag < 4) return std::nullopt;
    std::vector<double> r(max_lag + 1, 0.0);
    for (int tau = 1; tau <= max_lag; ++tau) {
        double num = 0.0, na = 0.0, nb = 0.0;
        for (int i = 0; i + tau < n; ++i) {
            num += z[i] * z[i + tau];
            na += z[i] * z[i];
            nb += z[i + tau] * z[i + tau];
        }
        const double den = std::sqrt(na * nb);
        r[tau] = den > 1e-12 ? num / den : 0.0;
    }
    // First local maximum above threshold is the fundamental; the global
    // maximum can land on a harmonic.
    for (int tau = 3; tau <= std::min(25, max_lag - 1); ++tau) {
        if (r[tau] < 0.4) continue;
        if (r[tau] >= r[tau - 1] && r[tau] >= r[tau + 1]) {
            const double denom = r[tau - 1] - 2.0 * r[tau] + r[tau + 1];
            double refined = tau;
            if (std::abs(denom) > 1e-12) {
                const double delta = 0.5 * (r[tau - 1] - r[tau + 1]) / denom;
                if (std::abs(delta) <= 1.0) refined = tau + delta;
            }
            if (refined >= 3.0 && refined <= 25.0) return refined;
            return std::nullopt;
        }
    }
    return std::nullopt;
}

float sample_clamped(const GrayImage& img, double qx, double qy) {
    qx = std::clamp(qx, 0.0, static_cast<double>(img.width - 1));
    qy = std::clamp(qy, 0.0, static_cast<double>(img.height - 1));
    const int x0 = std::min(static_cast<int>(qx), img.width - 1);
    const int y0 = std::min(static_cast<int>(qy), img.height - 1);
    const int x1 = std::min(x0 + 1, img.width - 1);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double fx = qx - x0, fy = qy - y0;
    return static_cast<float>((1 - fy) * ((1 - fx) * img.at(x0, y0) + fx * img.at(x1, y0)) +
                              fy * ((1 - fx) * img.at(x0, y1) + fx * img.at(x1, y1)));
}

}  // namespace

double estimate_ridge_period(const GrayImage& img, int block) {
    img.validate();
    if (block < 8) throw std::invalid_argument("estimate_ridge_period: block must be >= 8");
    if (img.width < block || img.height < block)
        throw std::runtime_error("estimate_ridge_period: image smaller than one block");

    const OrientationField of = orientation_field(img, block);
    const int sig_len = 2 * block;
    std::vector<double> periods;
    int total = 0;

    for (int by = 0; by < of.blocks_y; ++by)
        for (int bx = 0; bx < of.blocks_x; ++bx) {
            ++total;
            if (of.coherence(bx, by) < 0.2) continue;
            const double osc = of.angle(bx, by) + M_PI / 2.0;  // across the ridges
            const double ux = std::cos(osc), uy = std::sin(osc);
            const double vx = -uy, vy = ux;
            const double cx = (bx + 0.5) * block, cy = (by + 0.5) * block;

            std::vector<double> sig(sig_len, 0.0);
            for (int j = 0; j < sig_len; ++j) {
                const double t = j - 0.5 * sig_len;
                double acc = 0.0;
                for (int o = -4; o <= 4; o += 2)
                    acc += sample_clamped(img, cx + t * ux + o * vx, cy + t * uy + o * vy);
                sig[j] = acc / 5.0;
            }
            if (auto p = signature_period(sig)) periods.push_back(*p);
        }

    if (total == 0 || periods.size() * 4 < static_cast<size_t>(total))
        throw std::runtime_error("estimate_ridge_period: no ridge structure (too few periodic blocks)");
    std::sort(periods.begin(), periods.end());
    const size_t mid = periods.size() / 2;
    return periods.size() % 2 ? periods[mid] : 0.5 * (periods[mid - 1] + periods[mid]);
}

std::pair<GrayImage, AffineParams> scale_to_500ppi(const GrayImage& img, double target_period) {
    if (!(target_period >= 3.0 && target_period <= 25.0))
        throw std::invalid_argument("scale_to_500ppi: target_period outside [3,25]");
    const double est = estimate_ridge_period(img);
    const double s = target_period / est;
    const int nw = std::max(1, static_cast<int>(std::lround(img.width * s)));
    const int nh = std::max(1, static_cast<int>(std::lround(img.height * s)));
    GrayImage out = resize_bilinear(img, nw, nh);
    out.ppi = 500.0;
    AffineParams p;
    p.s = s;
    return {std::move(out), p};
}

std::string WarpParams::to_json() const {
    affine.validate();
    tps.validate();
    nlohmann::json j;
    j["s"] = affine.s;
    j["theta"] = affine.theta;
    j["tx"] = affine.tx;
    j["ty"] = affine.ty;
    j["n"] = tps.n;
    j["canvas"] = {tps.canvas_w, tps.canvas_h};
    auto& d = j["displacements"] = nlohmann::json::array();
    for (auto [dx, dy] : tps.displacements) d.push_back({dx, dy});
    return j.dump(2);
}

WarpParams WarpParams::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
        WarpParams p;
        p.affine.s = j.at("s").get<double>();
        p.affine.theta = AffineParams::normalize_angle(j.at("theta").get<double>());
        p.affine.tx = j.at("tx").get<double>();
        p.affine.ty = j.at("ty").get<double>();
        p.tps.n = j.at("n").get<int>();
        p.tps.canvas_w = j.at("canvas").at(0).get<int>();
        p.tps.canvas_h = j.at("canvas").at(1).get<int>();
        for (const auto& e : j.at("displacements"))
            p.tps.displacements.emplace_back(e.at(0).get<double>(), e.at(1).get<double>());
        p.affine.validate();
        p.tps.validate();
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("warp params: malformed JSON: ") + e.what());
    }
}

}  // namespace c2cl
