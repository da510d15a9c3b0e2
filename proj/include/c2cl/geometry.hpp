#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "c2cl/imaging.hpp"

namespace c2cl {

// Similarity-transform parameters. theta is kept normalized to (-pi, pi].
struct AffineParams {
    double s = 1.0;
    double theta = 0.0;
    double tx = 0.0;
    double ty = 0.0;

    void validate() const;  // s > 0, all finite
    static double normalize_angle(double theta);
};

// Thin-plate-spline displacement field defined by an n x n grid of control
// anchors with per-anchor (dx, dy) pixel offsets. Anchors live on a uniform
// lattice inset 10% from the borders of a canvas_w x canvas_h image.
struct TPSField {
    int n = 4;
    int canvas_w = 480;
    int canvas_h = 480;
    std::vector<std::pair<double, double>> displacements;  // n*n entries, row-major

    static TPSField identity(int n = 4, int canvas_w = 480, int canvas_h = 480);
    std::vector<std::pair<double, double>> control_points() const;  // n*n anchors
    void validate() const;  // finite displacements, |d| <= canvas side
};

// Per-output-pixel source coordinates.
struct FlowGrid {
    int width = 0;
    int height = 0;
    std::vector<std::pair<double, double>> src;  // row-major (x_src, y_src)

    std::pair<double, double> at(int x, int y) const {
        return src[static_cast<size_t>(y) * width + x];
    }
};

// [[s cos t, -s sin t, tx], [s sin t, s cos t, ty]].
std::array<double, 6> affine_matrix(const AffineParams& p);

// Solved TPS interpolant of the control displacements, evaluated densely:
// flow(p) = p + d(p) with kernel U(r) = r^2 log(r^2) plus an affine term.
// Exact at the control anchors. Throws on a singular system (coincident
// anchors). regularization > 0 adds a ridge term to the kernel block and
// trades exact interpolation for smoothness.
FlowGrid tps_flow(const TPSField& field, int out_w, int out_h, double regularization = 0.0);

// Sum of w^T K w over both displacement components: zero (to rounding) iff
// the displacements are consistent with a single global affine map.
double bending_energy(const TPSField& field, double regularization = 0.0);

// Inverse-mapped bilinear resampling of the composed warp. Output pixel p
// samples the input at center + R(s,theta) (p + d(p) - center) + t, i.e.
// the TPS displacement applies first and the affine (about the image
// center) second. Out-of-bounds samples read 0.
GrayImage warp_image(const GrayImage& img, const AffineParams& p, const TPSField& field);

struct WarpGradients {
    double d_s = 0.0;
    double d_theta = 0.0;
    double d_tx = 0.0;
    double d_ty = 0.0;
    std::vector<std::pair<double, double>> d_displacements;  // per control anchor
};

// Analytic gradients of sum_p upstream(p) * warp_image(img, ...)(p) with
// respect to every warp parameter. upstream has the image dimensions.
// Gradients are exact away from the measure-zero set where a sample
// coordinate sits on an integer grid line (bilinear kinks).
WarpGradients warp_param_gradients(const GrayImage& img, const AffineParams& p,
                                   const TPSField& field, const std::vector<double>& upstream);

// Median x-signature autocorrelation period over block tiles, in pixels per
// ridge cycle, valid range [3, 25]. Requires at least 25% of blocks to carry
// oriented periodic texture; otherwise throws std::runtime_error.
double estimate_ridge_period(const GrayImage& img, int block = 32);

// Resamples so the estimated ridge period becomes target_period and stamps
// the output with 500 ppi. Output dimensions are scaled by the same factor.
// Returns the applied parameters (pure scale). Estimation errors propagate.
std::pair<GrayImage, AffineParams> scale_to_500ppi(const GrayImage& img,
                                                   double target_period = 9.0);

// Full warp parameter set as serialized for run reproducibility:
// {"s":..,"theta":..,"tx":..,"ty":..,"n":..,"canvas":[w,h],
//  "displacements":[[dx,dy],...]}. Displacements are absolute pixels on the
// canvas.
struct WarpParams {
    AffineParams affine;
    TPSField tps;

    std::string to_json() const;
    static WarpParams from_json(const std::string& text);  // throws on malformed input
};

}  // namespace c2cl
